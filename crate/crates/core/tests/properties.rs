use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use chanbal::eval::{compute_metrics, split, Scored, SplitSpec};
use chanbal::features::{fee_ratio, FeatureConfig, FeatureSchema, Variant};
use chanbal::forest::{FeaturesPerSplit, ForestConfig, RandomForest};
use chanbal::graph::{Channel, ChannelPolicy, ChannelTarget};
use chanbal::routing::{balance_cost, find_path, simulate, RouteQuery, RoutingConfig, SimConfig, Strategy};
use chanbal::Estimator;
use chanbal::spectral::{dense_smallest, NormalizedLaplacian};
use chanbal::{ChannelGraph, NodeId};

fn policy(rng: &mut ChaCha8Rng) -> Option<ChannelPolicy> {
    rng.random_bool(0.9).then(|| ChannelPolicy {
        time_lock_delta: 40,
        min_htlc_msat: 1_000,
        max_htlc_msat: Some(rng.random_range(1_000..1_000_000_000)),
        fee_base_msat: 1_000,
        fee_rate_ppm: if rng.random_bool(0.2) { 0 } else { rng.random_range(1..5_000) },
        disabled: rng.random_bool(0.05),
    })
}

fn random_graph(seed: u64, max_nodes: u64, max_channels: usize) -> Option<ChannelGraph> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(2..=max_nodes);
    let m = rng.random_range(1..=max_channels);
    let channels: Vec<Channel> = (0..m)
        .filter_map(|i| {
            let (a, b) = (rng.random_range(0..n), rng.random_range(0..n));
            (a != b).then(|| Channel {
                channel_id: (1000 + i).to_string(),
                node_a: NodeId::from_index(a),
                node_b: NodeId::from_index(b),
                capacity_sat: rng.random_range(1..10_000_000),
                policy_a_to_b: policy(&mut rng),
                policy_b_to_a: policy(&mut rng),
            })
        })
        .collect();
    ChannelGraph::new(vec![], channels).ok()
}

fn random_matrix(seed: u64, n: usize, d: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng.random::<f64>()).collect()).collect();
    let y = x.iter().map(|r| (r[0] * r[0] + 0.3 * rng.random::<f64>()).min(1.0)).collect();
    (x, y)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn labels_of_both_directions_sum_to_capacity(seed in any::<u64>()) {
        let Some(mut g) = random_graph(seed, 10, 20) else { return Ok(()) };
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 1);
        let channels: Vec<Channel> = g.channels().cloned().collect();
        for c in &channels {
            let y = rng.random_range(0..=c.capacity_sat);
            let edge = if rng.random_bool(0.5) { c.forward_edge() } else { c.backward_edge() };
            g.add_label(edge.clone(), y).unwrap();
            prop_assert!(g.add_label(edge.reversed(), c.capacity_sat - y).is_ok());
            let (f, b) = (g.label(&c.forward_edge()).unwrap(), g.label(&c.backward_edge()).unwrap());
            prop_assert_eq!(f.y_sat + b.y_sat, c.capacity_sat);
            prop_assert!((f.p + b.p - 1.0).abs() < 1e-12);
        }
        for t in g.channel_targets() {
            prop_assert!((0.0..=1.0).contains(&t.p_forward));
        }
    }

    #[test]
    fn fee_ratio_stays_in_range(seed in any::<u64>()) {
        let Some(g) = random_graph(seed, 8, 16) else { return Ok(()) };
        let config = FeatureConfig::default();
        for id in g.node_ids() {
            let r = fee_ratio(&g, &id, &config).unwrap();
            prop_assert!(r.is_finite() && r >= 0.0 && r <= config.ratio_cap);
        }
    }

    #[test]
    fn routes_are_simple_connected_and_summed_in_order(seed in any::<u64>(), amount in 1u64..5_000_000) {
        let Some(g) = random_graph(seed, 8, 16) else { return Ok(()) };
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 2);
        let costs: BTreeMap<_, _> = g
            .edges()
            .filter_map(|e| balance_cost(rng.random(), g.capacity_of(e).unwrap(), amount, &RoutingConfig::default()).map(|c| (e.clone(), c)))
            .collect();
        let ids = g.node_ids();
        let query = RouteQuery { src: ids[0].clone(), dest: ids[ids.len() - 1].clone(), amount_sat: amount };
        let r = find_path(&g, &costs, &query).unwrap();
        if !r.found {
            prop_assert!(r.path.is_empty() && r.total_cost.is_infinite());
            return Ok(());
        }
        prop_assert_eq!(&r.path[0].src, &query.src);
        prop_assert_eq!(&r.path[r.path.len() - 1].dst, &query.dest);
        let mut seen = BTreeSet::from([query.src.clone()]);
        for w in r.path.windows(2) {
            prop_assert_eq!(&w[0].dst, &w[1].src);
        }
        for e in &r.path {
            prop_assert!(seen.insert(e.dst.clone()), "node revisited");
            prop_assert!(costs[e] >= 0.0);
        }
        let total = r.path.iter().fold(0.0, |acc, e| acc + costs[e]);
        prop_assert_eq!(total, r.total_cost);
        let from_p: f64 = r.per_hop_p.iter().map(|p| -p.ln()).sum();
        prop_assert!((from_p - r.total_cost).abs() <= 1e-9);
    }

    #[test]
    fn larger_amounts_never_unprune(p in 0.0f64..=1.0, cap in 1u64..100_000_000, a in 1u64..100_000_000, b in 1u64..100_000_000) {
        let cfg = RoutingConfig::default();
        let (lo, hi) = (a.min(b), a.max(b));
        if balance_cost(p, cap, hi, &cfg).is_some() {
            prop_assert!(balance_cost(p, cap, lo, &cfg).is_some());
        }
        if let Some(c) = balance_cost(p, cap, lo, &cfg) {
            prop_assert!(c >= 0.0 && c.is_finite());
        }
    }

    #[test]
    fn forest_outputs_and_importances(seed in any::<u64>(), n in 10usize..80, d in 1usize..5) {
        let (x, y) = random_matrix(seed, n, d);
        let config = ForestConfig { n_trees: 5, rng_seed: seed, ..Default::default() };
        let model = RandomForest::fit(&x, &y, FeatureSchema::new(Variant::RandomEdge, vec![], 0, d), &config).unwrap();
        for row in &x {
            let p = model.predict(row).unwrap();
            prop_assert!((0.0..=1.0).contains(&p));
        }
        prop_assert!(model.mdi.iter().all(|v| *v >= 0.0));
        prop_assert!((model.mdi.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let reloaded = RandomForest::<f64>::from_json(&model.to_json(), "memory").unwrap();
        prop_assert_eq!(&reloaded, &model);
    }

    // Two features that cut a node into the same row sets tie, and ties go to
    // the lower index; shallow trees with large leaves and no duplicated rows
    // keep such coincidences out of reach.
    #[test]
    fn swapping_columns_swaps_importances(seed in any::<u64>(), n in 80usize..200) {
        let d = 3;
        let (x, y) = random_matrix(seed, n, d);
        let swapped: Vec<Vec<f64>> = x.iter().map(|r| vec![r[1], r[0], r[2]]).collect();
        let config = ForestConfig {
            n_trees: 4,
            max_depth: Some(2),
            min_samples_leaf: 15,
            features_per_split: FeaturesPerSplit::All,
            bootstrap: false,
            rng_seed: seed,
        };
        let schema = || FeatureSchema::new(Variant::RandomEdge, vec![], 0, d);
        let a = RandomForest::fit(&x, &y, schema(), &config).unwrap();
        let b = RandomForest::fit(&swapped, &y, schema(), &config).unwrap();
        prop_assert!((a.mdi[0] - b.mdi[1]).abs() < 1e-12);
        prop_assert!((a.mdi[1] - b.mdi[0]).abs() < 1e-12);
        prop_assert!((a.mdi[2] - b.mdi[2]).abs() < 1e-12);
    }

    #[test]
    fn metric_ranges(values in prop::collection::vec((0.0f64..=1.0, 0.0f64..=1.0, 1u64..100_000_000), 1..40)) {
        let scored: Vec<Scored<f64>> = values.iter().map(|&(p_hat, p, capacity_sat)| Scored { p_hat, p, capacity_sat }).collect();
        let m = compute_metrics(&scored).unwrap();
        prop_assert!(m.mae_p >= 0.0 && m.mae_p <= 1.0);
        prop_assert!(m.mae_y_sat >= 0.0);
        prop_assert!(m.r2 <= 1.0);
        if let Some(r) = m.r {
            prop_assert!((-1.0..=1.0).contains(&r));
        }
    }

    #[test]
    fn folds_partition_the_channels(n in 10usize..200, seed in any::<u64>()) {
        let targets: Vec<ChannelTarget> = (0..n).map(|i| ChannelTarget { channel_id: format!("{i}"), p_forward: 0.5 }).collect();
        let spec = SplitSpec { rng_seed: seed, ..Default::default() };
        let folds = split(&targets, &spec).unwrap();
        let ids = |v: &[ChannelTarget]| v.iter().map(|t| t.channel_id.clone()).collect::<BTreeSet<_>>();
        let (tr, va, te) = (ids(&folds.train), ids(&folds.val), ids(&folds.test));
        prop_assert!(tr.is_disjoint(&va) && tr.is_disjoint(&te) && va.is_disjoint(&te));
        prop_assert_eq!(tr.len() + va.len() + te.len(), n);
        prop_assert!(!te.is_empty() && !tr.is_empty());
        prop_assert_eq!(split(&targets, &spec).unwrap(), folds);
    }

    #[test]
    fn laplacian_spectrum_is_bounded(seed in any::<u64>(), n in 3usize..40) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut edges = BTreeMap::new();
        for _ in 0..2 * n {
            let (a, b) = (rng.random_range(0..n), rng.random_range(0..n));
            if a != b {
                edges.insert((a.min(b), a.max(b)), rng.random_range(0.1..10.0));
            }
        }
        let lap = NormalizedLaplacian::<f64>::from_edges(n, &edges);
        let pairs = dense_smallest(&lap, n);
        for (lambda, v) in pairs.values.iter().zip(&pairs.vectors) {
            prop_assert!(*lambda > 0.0 && *lambda <= 2.0 + 1e-10);
            let norm: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            prop_assert!((norm - 1.0).abs() < 1e-9);
            prop_assert!(lap.residual(*lambda, v) < 1e-9);
        }
    }
    #[test]
    fn scaling_costs_keeps_the_path(seed in any::<u64>(), scale in 0.01f64..100.0) {
        let Some(g) = random_graph(seed, 8, 16) else { return Ok(()) };
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 3);
        let costs: BTreeMap<_, _> = g.edges().map(|e| (e.clone(), -rng.random::<f64>().ln())).collect();
        let scaled: BTreeMap<_, _> = costs.iter().map(|(e, c)| (e.clone(), c * scale)).collect();
        let ids = g.node_ids();
        let query = RouteQuery { src: ids[0].clone(), dest: ids[ids.len() - 1].clone(), amount_sat: 1 };
        let (a, b) = (find_path(&g, &costs, &query).unwrap(), find_path(&g, &scaled, &query).unwrap());
        prop_assert_eq!(a.found, b.found);
        // Rounding can only matter between paths whose costs agree to ~1e-12.
        if a.path != b.path {
            let rescaled: f64 = b.path.iter().map(|e| costs[e]).sum();
            prop_assert!((rescaled - a.total_cost).abs() <= 1e-12 * a.total_cost.max(1.0));
        }
    }

    #[test]
    fn simulation_is_deterministic(seed in any::<u64>(), shift in any::<bool>()) {
        let Some(mut g) = random_graph(seed, 10, 25) else { return Ok(()) };
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 4);
        for c in g.channels().cloned().collect::<Vec<_>>() {
            g.add_label(c.forward_edge(), rng.random_range(0..=c.capacity_sat)).unwrap();
        }
        let config = SimConfig {
            n_payments: 30,
            min_amount_sat: 1_000,
            max_amount_sat: 2_000_000,
            shift_balances: shift,
            rng_seed: seed,
            ..Default::default()
        };
        let strategies = [Strategy::Oracle, Strategy::CapacityUniform, Strategy::Model(&Estimator::EqualSplit)];
        let Ok(a) = simulate(&g, &strategies, &config) else { return Ok(()) };
        let b = simulate(&g, &strategies, &config).unwrap();
        prop_assert_eq!(a.summary_csv(), b.summary_csv());
        prop_assert_eq!(a.payments_csv(), b.payments_csv());
        for s in &a.strategies {
            prop_assert!((0.0..=1.0).contains(&s.success_rate));
        }
        if !shift {
            let oracle = &a.strategies[0];
            prop_assert!(oracle.outcomes.iter().all(|o| !o.success || o.attempts == 1));
        }
    }
}
