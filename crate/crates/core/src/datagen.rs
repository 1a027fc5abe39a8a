//! Training data without crowdsourced balances.
//!
//! Two sources: [`kde_sample`] reduces an observed balance time series to one
//! representative balance, and [`generate_synthetic`] builds a whole network
//! whose balance distribution is bimodal and whose policies carry a tunable
//! amount of information about the balances.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, LogNormal, Normal, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{
    BalanceLabel, Channel, ChannelGraph, ChannelPolicy, DirectedEdge, GraphError, NodeId, NodeInfo,
};
use crate::scalar::Scalar;
use crate::seed;

#[derive(Debug, Error)]
pub enum DatagenError {
    #[error("balance series for {0} is empty")]
    EmptySeries(String),
    #[error("balance series for {edge}: {reason}")]
    InvalidSeries { edge: String, reason: String },
    #[error("invalid synthetic config: {0}")]
    InvalidConfig(String),
    #[error("{path}: {message}")]
    Parse { path: String, message: String },
    #[error(transparent)]
    Graph(#[from] GraphError),
}

pub type Result<T, E = DatagenError> = std::result::Result<T, E>;

/// Local balance of one direction observed over time.
#[derive(Clone, Debug, PartialEq)]
pub struct BalanceSeries {
    pub edge: DirectedEdge,
    pub capacity_sat: u64,
    /// `(unix timestamp, local balance in sat)`, strictly increasing in time.
    pub samples: Vec<(i64, u64)>,
}

impl BalanceSeries {
    pub fn new(edge: DirectedEdge, capacity_sat: u64, samples: Vec<(i64, u64)>) -> Result<Self> {
        let series = BalanceSeries {
            edge,
            capacity_sat,
            samples,
        };
        series.validate()?;
        Ok(series)
    }

    fn validate(&self) -> Result<()> {
        if self.samples.is_empty() {
            return Err(DatagenError::EmptySeries(self.edge.to_string()));
        }
        let invalid = |reason: String| DatagenError::InvalidSeries {
            edge: self.edge.to_string(),
            reason,
        };
        if let Some(w) = self.samples.windows(2).find(|w| w[0].0 >= w[1].0) {
            return Err(invalid(format!("timestamps not increasing at {}", w[1].0)));
        }
        if let Some((t, b)) = self.samples.iter().find(|(_, b)| *b > self.capacity_sat) {
            return Err(invalid(format!(
                "balance {b} at {t} exceeds capacity {}",
                self.capacity_sat
            )));
        }
        Ok(())
    }
}

/// Linear-interpolation quantile of sorted data.
fn quantile<T: Scalar>(sorted: &[T], q: f64) -> T {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = T::of(pos - lo as f64);
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

/// Silverman's rule of thumb, `0.9 * min(sd, IQR / 1.34) * n^(-1/5)`.
/// Falls back to the standard deviation when the IQR is zero.
pub fn silverman_bandwidth<T: Scalar>(values: &[T]) -> T {
    let n = values.len();
    if n < 2 {
        return T::zero();
    }
    let nf = T::of_usize(n);
    let mean = values.iter().copied().sum::<T>() / nf;
    let var = values.iter().map(|v| (*v - mean).powi(2)).sum::<T>() / (nf - T::one());
    let sd = var.sqrt();
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite balances"));
    let iqr = quantile(&sorted, 0.75) - quantile(&sorted, 0.25);
    let mut spread = sd.min(iqr / T::of(1.34));
    if spread == T::zero() {
        spread = sd;
    }
    T::of(0.9) * spread * nf.powf(T::of(-0.2))
}

/// Draws one balance from the Gaussian KDE of `series`, clamped to
/// `[0, capacity]` and rounded to whole satoshis.
pub fn kde_sample(series: &BalanceSeries, rng_seed: u64) -> Result<u64> {
    series.validate()?;
    let values: Vec<f64> = series.samples.iter().map(|(_, b)| *b as f64).collect();
    let h = silverman_bandwidth(&values);
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let center = values[rng.random_range(0..values.len())];
    let noise: f64 = StandardNormal.sample(&mut rng);
    let draw = (center + h * noise).clamp(0.0, series.capacity_sat as f64);
    Ok(draw.round() as u64)
}

#[derive(Deserialize)]
struct SeriesRecord {
    channel_id: String,
    src_pub: String,
    timestamp: i64,
    balance_sat: u64,
}

/// Reads `channel_id,src_pub,timestamp,balance_sat` rows, grouped per
/// direction with samples sorted by time.
pub fn load_series(graph: &ChannelGraph, path: impl AsRef<Path>) -> Result<Vec<BalanceSeries>> {
    let path = path.as_ref();
    let parse_err = |message: String| DatagenError::Parse {
        path: path.display().to_string(),
        message,
    };
    let file = File::open(path).map_err(|e| parse_err(e.to_string()))?;
    let mut reader = csv::Reader::from_reader(BufReader::new(file));
    let mut grouped: BTreeMap<DirectedEdge, Vec<(i64, u64)>> = BTreeMap::new();
    for record in reader.deserialize::<SeriesRecord>() {
        let r = record.map_err(|e| parse_err(e.to_string()))?;
        let edge = graph.edge(&r.channel_id, &NodeId::parse(&r.src_pub)?)?;
        grouped.entry(edge).or_default().push((r.timestamp, r.balance_sat));
    }
    grouped
        .into_iter()
        .map(|(edge, mut samples)| {
            samples.sort_by_key(|(t, _)| *t);
            let capacity = graph.capacity_of(&edge).expect("edge resolved from graph");
            BalanceSeries::new(edge, capacity, samples)
        })
        .collect()
}

/// Attaches one KDE draw per series as the direction's label. Each series
/// gets its own seed stream derived from `rng_seed` and the edge.
pub fn label_from_series(graph: &ChannelGraph, series: &[BalanceSeries], rng_seed: u64) -> Result<ChannelGraph> {
    let mut out = graph.clone();
    for s in series {
        let component = format!("kde/{}/{}", s.edge.channel_id, s.edge.src);
        let y = kde_sample(s, seed::derive(rng_seed, &component))?;
        out.add_label(s.edge.clone(), y)?;
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Synthetic networks

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub n_nodes: usize,
    /// Channels opened by each arriving node (preferential attachment).
    pub m: usize,
    /// Mean and standard deviation of `ln(capacity_sat)`.
    pub capacity_log_mean: f64,
    pub capacity_log_sigma: f64,
    /// Share of channels whose balance sits at one end.
    pub depleted_fraction: f64,
    /// How strongly policies (max HTLC, fees, wumbo bit) track balances.
    pub signal_strength: f64,
    /// Correlation between a channel's balance and the liquidity position of
    /// its endpoints, which is smooth over graph communities.
    pub topology_signal: f64,
    pub communities: usize,
    /// Probability that a new channel ignores community boundaries.
    pub cross_community: f64,
    /// Share of channels with one observed direction in the emitted labels.
    pub label_fraction: f64,
    pub rng_seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_nodes: 2000,
            m: 2,
            capacity_log_mean: 2_000_000f64.ln(),
            capacity_log_sigma: 1.0,
            depleted_fraction: 0.30,
            signal_strength: 0.8,
            topology_signal: 0.8,
            communities: 8,
            cross_community: 0.05,
            label_fraction: 1.0,
            rng_seed: 42,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(DatagenError::InvalidConfig(msg.to_string()));
        if self.n_nodes < 2 {
            return bad("n_nodes must be at least 2");
        }
        if self.m < 1 || self.m >= self.n_nodes {
            return bad("attachment parameter m must satisfy 1 <= m < n_nodes");
        }
        if !(self.capacity_log_sigma >= 0.0 && self.capacity_log_mean.is_finite()) {
            return bad("capacity distribution parameters out of range");
        }
        for (name, v) in [
            ("depleted_fraction", self.depleted_fraction),
            ("signal_strength", self.signal_strength),
            ("cross_community", self.cross_community),
            ("label_fraction", self.label_fraction),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(DatagenError::InvalidConfig(format!("{name} must be in [0, 1]")));
            }
        }
        if !(0.0..1.0).contains(&self.topology_signal) {
            return bad("topology_signal must be in [0, 1)");
        }
        if self.communities < 1 {
            return bad("communities must be at least 1");
        }
        Ok(())
    }
}

/// A generated network: the graph carries the full ground truth (both
/// directions of every channel); `observed` is the subset emitted as labels.
#[derive(Clone, Debug)]
pub struct SyntheticNetwork {
    pub graph: ChannelGraph,
    pub observed: Vec<BalanceLabel>,
}

impl SyntheticNetwork {
    /// The topology without any labels, as a snapshot would carry it.
    pub fn unlabeled(&self) -> ChannelGraph {
        ChannelGraph::new(
            self.graph.nodes().cloned().collect(),
            self.graph.channels().cloned().collect(),
        )
        .expect("generated graph is valid")
    }

    /// Graph with only the observed labels attached.
    pub fn observed_graph(&self) -> ChannelGraph {
        let mut g = self.unlabeled();
        for label in &self.observed {
            g.add_label(label.edge.clone(), label.y_sat).expect("observed labels are consistent");
        }
        g
    }
}

/// Standard normal CDF via the complementary error function.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Complementary error function, Chebyshev fit with relative error < 1.2e-7.
fn erfc(x: f64) -> f64 {
    let z = x.abs();
    let t = 1.0 / (1.0 + 0.5 * z);
    let poly = -z * z - 1.265_512_23
        + t * (1.000_023_68
            + t * (0.374_091_96
                + t * (0.096_784_18
                    + t * (-0.186_288_06
                        + t * (0.278_868_07
                            + t * (-1.135_203_98 + t * (1.488_515_87 + t * (-0.822_152_23 + t * 0.170_872_77))))))));
    let r = t * poly.exp();
    if x >= 0.0 {
        r
    } else {
        2.0 - r
    }
}

/// Degree-proportional sampler with `+1` smoothing so fresh nodes can be hit.
#[derive(Default)]
struct AttachmentPool {
    slots: Vec<usize>,
}

impl AttachmentPool {
    fn add_node(&mut self, node: usize) {
        self.slots.push(node);
    }

    fn add_degree(&mut self, node: usize) {
        self.slots.push(node);
    }

    fn draw(&self, rng: &mut ChaCha8Rng) -> Option<usize> {
        (!self.slots.is_empty()).then(|| self.slots[rng.random_range(0..self.slots.len())])
    }
}

fn channel_id(index: usize) -> String {
    // short-channel-id layout: block << 40 | tx << 16 | output
    let block = 700_000 + (index / 1000) as u64;
    let tx = (index % 1000) as u64;
    ((block << 40) | (tx << 16)).to_string()
}

/// Builds a connected preferential-attachment network with community
/// structure and a planted balance/feature relationship.
pub fn generate_synthetic(config: &SynthConfig) -> Result<SyntheticNetwork> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
    let n = config.n_nodes;
    let s = config.signal_strength;

    // Nodes sit on a ring cut into `communities` arcs; liquidity position is a
    // smooth wave around the ring, so it varies along channels between nearby
    // arcs as well as across the ring.
    let arcs = config.communities;
    let coordinate: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
    let community: Vec<usize> = coordinate.iter().map(|x| ((x * arcs as f64) as usize).min(arcs - 1)).collect();
    let phase = rng.random::<f64>() * std::f64::consts::TAU;
    let position: Vec<f64> = coordinate
        .iter()
        .map(|x| std::f64::consts::SQRT_2 * (std::f64::consts::TAU * x + phase).sin())
        .collect();

    // Topology.
    let mut global = AttachmentPool::default();
    let mut local: Vec<AttachmentPool> = (0..arcs).map(|_| AttachmentPool::default()).collect();
    let mut pairs: Vec<(usize, usize)> = Vec::new();
    global.add_node(0);
    local[community[0]].add_node(0);
    for u in 1..n {
        let wanted = config.m.min(u);
        let mut targets: Vec<usize> = Vec::with_capacity(wanted);
        let mut attempts = 0;
        while targets.len() < wanted {
            attempts += 1;
            let arc = (community[u] + arcs + rng.random_range(0..3usize) - 1) % arcs;
            let pool = if rng.random::<f64>() < config.cross_community || local[arc].slots.is_empty() {
                &global
            } else {
                &local[arc]
            };
            let candidate = if attempts > 50 {
                rng.random_range(0..u)
            } else {
                pool.draw(&mut rng).expect("pool holds earlier nodes")
            };
            if !targets.contains(&candidate) {
                targets.push(candidate);
            }
        }
        global.add_node(u);
        local[community[u]].add_node(u);
        for v in targets {
            pairs.push((v, u));
            for w in [u, v] {
                global.add_degree(w);
                local[community[w]].add_degree(w);
            }
        }
    }
    // Scale position differences to unit variance over the channels.
    let spread = {
        let d: Vec<f64> = pairs.iter().map(|&(u, v)| position[u.min(v)] - position[u.max(v)]).collect();
        let mean = d.iter().sum::<f64>() / d.len() as f64;
        let var = d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / d.len() as f64;
        if var > 0.0 { var.sqrt() } else { 1.0 }
    };

    // Nodes and feature bits.
    let ids: Vec<NodeId> = (0..n as u64).map(NodeId::from_index).collect();
    let nodes: Vec<NodeInfo> = (0..n)
        .map(|u| {
            let mut info = NodeInfo::new(ids[u].clone());
            info.alias = Some(format!("node-{u}"));
            for bit in [5u16, 7, 9, 12, 14, 17] {
                if rng.random::<f64>() < 0.9 {
                    info.feature_bits.insert(bit);
                }
            }
            if rng.random::<f64>() < 0.5 {
                info.feature_bits.insert(27);
            }
            if rng.random::<f64>() < normal_cdf(-0.4 + 0.6 * s * position[u]) {
                info.feature_bits.insert(19);
            }
            info
        })
        .collect();

    // Per-node fee level, and whether the node tunes max HTLC to its balance.
    let fee_level = LogNormal::new(100f64.ln(), 0.8).expect("valid lognormal");
    let node_fee: Vec<f64> = (0..n).map(|_| fee_level.sample(&mut rng)).collect();
    let manages_htlc: Vec<bool> = (0..n).map(|_| rng.random::<f64>() < 0.5 * s).collect();

    let capacity_dist = LogNormal::new(config.capacity_log_mean, config.capacity_log_sigma)
        .map_err(|e| DatagenError::InvalidConfig(e.to_string()))?;
    let depleted = Beta::new(0.5, 8.0).expect("valid beta");
    let htlc_noise = LogNormal::new(0.0, 0.25).expect("valid lognormal");
    let fee_noise = Normal::new(0.0, 0.3).expect("valid normal");
    let rho = config.topology_signal;

    let mut channels = Vec::with_capacity(pairs.len());
    let mut balances = Vec::with_capacity(pairs.len());
    for (index, &(u, v)) in pairs.iter().enumerate() {
        let capacity = capacity_dist.sample(&mut rng).round().clamp(20_000.0, 1.0e9) as u64;
        // ids sort by index, so the lower index is the canonical node_a.
        let (a, b) = (u.min(v), u.max(v));
        let latent = (position[a] - position[b]) / spread;
        let eps: f64 = StandardNormal.sample(&mut rng);
        let z = rho * latent + (1.0 - rho * rho).sqrt() * eps;
        let p_a = if rng.random::<f64>() < config.depleted_fraction {
            let x: f64 = depleted.sample(&mut rng);
            if z > 0.0 {
                1.0 - x
            } else {
                x
            }
        } else {
            normal_cdf(z)
        };
        let y_a = (p_a * capacity as f64).round() as u64;
        let mut policy = |from: usize, y: u64| {
            let p = y as f64 / capacity as f64;
            let noise: f64 = htlc_noise.sample(&mut rng);
            let frac = if manages_htlc[from] {
                (p * noise).clamp(0.0, 1.0)
            } else if rng.random::<f64>() < 0.6 {
                1.0
            } else {
                rng.random::<f64>()
            };
            let min_htlc_msat = if rng.random::<f64>() < 0.7 { 1_000 } else { 1 };
            let max_htlc_msat = ((frac * capacity as f64 * 1000.0).round() as u64).max(min_htlc_msat);
            let jitter: f64 = fee_noise.sample(&mut rng);
            let fee = node_fee[from] * (s * 2.0 * (0.5 - p)).exp() * jitter.exp();
            ChannelPolicy {
                time_lock_delta: *[40u32, 80, 144].choose(&mut rng).expect("non-empty"),
                min_htlc_msat,
                max_htlc_msat: Some(max_htlc_msat),
                fee_base_msat: if rng.random::<f64>() < 0.5 { 1_000 } else { 0 },
                fee_rate_ppm: fee.round().clamp(0.0, 50_000.0) as u64,
                disabled: false,
            }
        };
        let policy_a_to_b = policy(a, y_a);
        let policy_b_to_a = policy(b, capacity - y_a);
        let id = channel_id(index);
        channels.push(Channel {
            channel_id: id.clone(),
            node_a: ids[a].clone(),
            node_b: ids[b].clone(),
            capacity_sat: capacity,
            policy_a_to_b: Some(policy_a_to_b),
            policy_b_to_a: Some(policy_b_to_a),
        });
        balances.push((id, y_a));
    }

    let mut graph = ChannelGraph::new(nodes, channels)?;
    let mut observed = Vec::new();
    for (id, y_a) in balances {
        let channel = graph.channel(&id).expect("just inserted").clone();
        let forward = channel.forward_edge();
        graph.add_label(forward.clone(), y_a)?;
        graph.add_label(forward.reversed(), channel.capacity_sat - y_a)?;
        if rng.random::<f64>() < config.label_fraction {
            let edge = if rng.random::<bool>() { forward } else { forward.reversed() };
            observed.push(graph.label(&edge).expect("labeled above").clone());
        }
    }
    Ok(SyntheticNetwork { graph, observed })
}

#[derive(Serialize)]
struct TruthRecord<'a> {
    channel_id: &'a str,
    src_pub: &'a str,
    dst_pub: &'a str,
    capacity_sat: u64,
    y_sat: u64,
    p: f64,
}

/// Writes every labeled direction as
/// `channel_id,src_pub,dst_pub,capacity_sat,y_sat,p`.
pub fn save_truth(graph: &ChannelGraph, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let err = |message: String| DatagenError::Parse {
        path: path.display().to_string(),
        message,
    };
    let mut writer = csv::Writer::from_path(path).map_err(|e| err(e.to_string()))?;
    for label in graph.labels() {
        writer
            .serialize(TruthRecord {
                channel_id: &label.edge.channel_id,
                src_pub: label.edge.src.as_str(),
                dst_pub: label.edge.dst.as_str(),
                capacity_sat: graph.capacity_of(&label.edge).expect("labeled edge exists"),
                y_sat: label.y_sat,
                p: label.p,
            })
            .map_err(|e| err(e.to_string()))?;
    }
    writer.flush().map_err(|e| err(e.to_string()))
}

#[derive(Deserialize)]
struct TruthRow {
    channel_id: String,
    src_pub: String,
    y_sat: u64,
}

/// Loads a ground-truth file written by [`save_truth`] onto `graph`.
pub fn load_truth(graph: &ChannelGraph, path: impl AsRef<Path>) -> Result<ChannelGraph> {
    let path = path.as_ref();
    let err = |message: String| DatagenError::Parse {
        path: path.display().to_string(),
        message,
    };
    let mut reader = csv::Reader::from_path(path).map_err(|e| err(e.to_string()))?;
    let mut out = graph.clone();
    for row in reader.deserialize::<TruthRow>() {
        let row = row.map_err(|e| err(e.to_string()))?;
        let edge = out.edge(&row.channel_id, &NodeId::parse(&row.src_pub)?)?;
        out.add_label(edge, row.y_sat)?;
    }
    Ok(out)
}
