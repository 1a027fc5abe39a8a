use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use chanbal::datagen::{generate_synthetic, save_truth};
use chanbal::eval::{correlation_screen, results_table, run_benchmark, write_reports, BenchmarkConfig};
use chanbal::features::{build_rows, write_matrix_csv, FeatureSchema, Variant};
use chanbal::graph::{load_labels, load_snapshot, save_labels, save_snapshot};
use chanbal::models::{encodings_for, load_bundle, save_bundle, train_variant, Estimator, EstimatorKind, TrainConfig};
use chanbal::routing::{route, simulate, RouteQuery, RoutingNetwork, SimConfig, Strategy};
use chanbal::spectral::{load_encodings, save_encodings};
use chanbal::{seed, ChannelGraph, Encodings, NodeId};

use crate::config::{RunConfig, DEFAULT_SEED};
use crate::{Cli, Command, DataArgs, Failure, ModelArgs};

type Outcome = Result<(), Failure>;

struct Context {
    seed: u64,
    cfg: RunConfig,
}

fn usage(message: impl Into<String>) -> Failure {
    Failure::Usage(message.into())
}

fn data(message: impl Into<String>) -> Failure {
    Failure::Data(message.into())
}

impl Context {
    fn new(cli: &Cli) -> Result<Self, Failure> {
        let cfg = match &cli.global.config {
            Some(path) => RunConfig::load(path).map_err(Failure::Data)?,
            None => RunConfig::default(),
        };
        let seed = cli.global.seed.or(cfg.seed).unwrap_or(DEFAULT_SEED);
        Ok(Context { seed, cfg })
    }

    fn snapshot(&self, flag: &Option<PathBuf>) -> Result<ChannelGraph, Failure> {
        let path = flag
            .clone()
            .or_else(|| self.cfg.paths.snapshot.clone())
            .ok_or_else(|| usage("--snapshot is required"))?;
        Ok(load_snapshot(path)?)
    }

    fn labeled(&self, args: &DataArgs) -> Result<ChannelGraph, Failure> {
        let graph = self.snapshot(&args.snapshot)?;
        let path = args
            .labels
            .clone()
            .or_else(|| self.cfg.paths.labels.clone())
            .ok_or_else(|| usage("--labels is required"))?;
        Ok(load_labels(&graph, path)?)
    }

    fn train_config(&self, args: &ModelArgs) -> TrainConfig {
        let mut train = self.cfg.train.clone();
        if let Some(k) = args.k_pe {
            train.spectral.k = k;
        }
        if let Some(n) = args.trees {
            train.forest.n_trees = n;
        }
        train
    }

    fn out(&self, flag: &Option<PathBuf>, fallback: &str) -> PathBuf {
        flag.clone()
            .or_else(|| self.cfg.paths.out.clone())
            .unwrap_or_else(|| PathBuf::from(fallback))
    }

    /// Encodings for `variant`, through the cache file when one is given.
    fn encodings(
        &self,
        variant: Variant,
        graph: &ChannelGraph,
        train: &TrainConfig,
        cache: &Option<PathBuf>,
    ) -> Result<Option<Encodings>, Failure> {
        if !variant.needs_encodings() {
            return Ok(None);
        }
        let cache = cache.clone().or_else(|| self.cfg.paths.encodings.clone());
        if let Some(path) = cache.as_ref().filter(|p| p.exists()) {
            let table: Encodings = load_encodings(path)?;
            if table.k != train.k_pe() {
                return Err(data(format!(
                    "{} holds k={} encodings but k={} was requested",
                    path.display(),
                    table.k,
                    train.k_pe()
                )));
            }
            log::info!("loaded encodings from {}", path.display());
            return Ok(Some(table));
        }
        let table = encodings_for(graph, &train.spectral, self.seed)?;
        if let Some(path) = cache {
            save_encodings(&table, &path)?;
        }
        Ok(Some(table))
    }
}

fn parse_variant(name: &str) -> Result<Variant, Failure> {
    name.parse().map_err(|_| {
        let names: Vec<&str> = Variant::ALL.iter().map(|v| v.name()).collect();
        usage(format!("unknown variant `{name}`; expected one of {}", names.join(", ")))
    })
}

fn parse_kind(name: &str) -> Result<EstimatorKind, Failure> {
    name.parse().map_err(|_| {
        let names: Vec<String> = EstimatorKind::ALL.iter().map(|k| k.to_string()).collect();
        usage(format!("unknown estimator `{name}`; expected one of {}", names.join(", ")))
    })
}

enum Resolved {
    Oracle,
    CapacityUniform,
    Model(Estimator),
}

fn resolve_model(spec: &str) -> Result<Resolved, Failure> {
    if Path::new(spec).is_dir() {
        return Ok(Resolved::Model(load_bundle(spec)?));
    }
    match spec {
        "oracle" => return Ok(Resolved::Oracle),
        "capacity-uniform" => return Ok(Resolved::CapacityUniform),
        _ => {}
    }
    match parse_kind(spec)? {
        EstimatorKind::EqualSplit => Ok(Resolved::Model(Estimator::EqualSplit)),
        EstimatorKind::LocalMaxHtlc => Ok(Resolved::Model(Estimator::LocalMaxHtlc)),
        EstimatorKind::Forest(v) => Err(usage(format!(
            "`{v}` needs a trained bundle; run `chanbal train --variant {v} --out DIR` and pass DIR"
        ))),
    }
}

fn emit(text: &str, out: &Option<PathBuf>) -> Outcome {
    match out {
        Some(path) => std::fs::write(path, text).map_err(|e| data(format!("{}: {e}", path.display()))),
        None => {
            let mut stdout = std::io::stdout().lock();
            match stdout.write_all(text.as_bytes()).and_then(|_| stdout.flush()) {
                Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(data(format!("stdout: {e}"))),
                _ => Ok(()),
            }
        }
    }
}

fn node_id(text: &str) -> Result<NodeId, Failure> {
    Ok(NodeId::parse(text)?)
}

pub fn run(cli: Cli) -> Outcome {
    let ctx = Context::new(&cli)?;
    log::info!("seed {}", ctx.seed);
    match &cli.command {
        Command::Synth { out, nodes } => {
            let mut config = ctx.cfg.synth.clone();
            config.rng_seed = ctx.seed;
            if let Some(n) = nodes {
                config.n_nodes = *n;
            }
            let net = generate_synthetic(&config)?;
            std::fs::create_dir_all(out).map_err(|e| data(format!("{}: {e}", out.display())))?;
            save_snapshot(&net.graph, out.join("snapshot.json"))?;
            save_labels(&net.observed, out.join("labels.csv"))?;
            save_truth(&net.graph, out.join("truth.csv"))?;
            println!(
                "{} nodes, {} channels, {} labels written to {}",
                net.graph.node_count(),
                net.graph.channel_count(),
                net.observed.len(),
                out.display()
            );
            Ok(())
        }
        Command::Featurize {
            data: args,
            variant,
            model,
            encodings,
            out,
        } => {
            let variant = parse_variant(variant)?;
            let graph = ctx.labeled(args)?;
            let train = ctx.train_config(model);
            let table = ctx.encodings(variant, &graph, &train, encodings)?;
            let k = if variant.needs_encodings() { train.k_pe() } else { 0 };
            let schema = FeatureSchema::for_graph(variant, &graph, k, &train.features);
            let rows = build_rows(
                &graph,
                &graph.channel_targets(),
                &schema,
                &train.features,
                table.as_ref(),
                seed::derive(ctx.seed, "random-features"),
            )?;
            write_matrix_csv(&rows, &schema, out)?;
            schema.save(out.with_extension("schema.json"))?;
            println!("{} rows x {} features written to {}", rows.len(), schema.len(), out.display());
            Ok(())
        }
        Command::Train {
            data: args,
            variant,
            model,
            encodings,
            out,
        } => {
            let estimator = match parse_kind(variant)? {
                EstimatorKind::EqualSplit => Estimator::EqualSplit,
                EstimatorKind::LocalMaxHtlc => Estimator::LocalMaxHtlc,
                EstimatorKind::Forest(v) => {
                    let graph = ctx.labeled(args)?;
                    let train = ctx.train_config(model);
                    let table = ctx.encodings(v, &graph, &train, encodings)?;
                    train_variant(v, &graph, &graph.channel_targets(), &train, table.as_ref(), ctx.seed)?
                }
            };
            save_bundle(&estimator, out)?;
            println!("{} bundle written to {}", estimator.kind(), out.display());
            Ok(())
        }
        Command::Evaluate {
            data: args,
            variant,
            model,
            tune,
            out,
        } => {
            let graph = ctx.labeled(args)?;
            let names = if variant.is_empty() { &ctx.cfg.variants } else { variant };
            let kinds = if names.is_empty() {
                EstimatorKind::ALL.to_vec()
            } else {
                names.iter().map(|n| parse_kind(n)).collect::<Result<_, _>>()?
            };
            let config = BenchmarkConfig {
                split: ctx.cfg.split.clone(),
                train: ctx.train_config(model),
                kinds,
                tune: *tune,
                rng_seed: ctx.seed,
            };
            let bench = run_benchmark(&graph, &graph.channel_targets(), &config)?;
            let dir = ctx.out(out, "reports");
            write_reports(&bench, &dir)?;
            log::info!("reports written to {}", dir.display());
            emit(&results_table(&bench.reports), &None)
        }
        Command::Correlate {
            data: args,
            variant,
            model,
            threshold,
        } => {
            let variant = parse_variant(variant)?;
            let graph = ctx.labeled(args)?;
            let train = ctx.train_config(model);
            let table = ctx.encodings(variant, &graph, &train, &None)?;
            let k = if variant.needs_encodings() { train.k_pe() } else { 0 };
            let schema = FeatureSchema::for_graph(variant, &graph, k, &train.features);
            let rows = build_rows(
                &graph,
                &graph.channel_targets(),
                &schema,
                &train.features,
                table.as_ref(),
                seed::derive(ctx.seed, "random-features"),
            )?;
            let mut text = String::from("feature,r\n");
            for (name, r) in correlation_screen(&rows, &schema, *threshold)? {
                let _ = writeln!(text, "{name},{r:.6}");
            }
            emit(&text, &None)
        }
        Command::Importance { model } => {
            let estimator = load_bundle(model)?;
            let forest = estimator
                .forest()
                .ok_or_else(|| data(format!("{} is a {} bundle, which has no features", model.display(), estimator.kind())))?;
            let mut text = String::from("feature,importance\n");
            for (name, v) in forest.model.ranked_importances() {
                let _ = writeln!(text, "{name},{v:.6}");
            }
            emit(&text, &None)
        }
        Command::Predict { snapshot, model, out } => {
            let graph = ctx.snapshot(snapshot)?;
            let Resolved::Model(estimator) = resolve_model(model)? else {
                return Err(usage("predict needs a bundle directory or heuristic name"));
            };
            let edges: Vec<_> = graph.edges().cloned().collect();
            let predictions = estimator.predict_edges(&graph, &edges)?;
            let mut text = String::from("channel_id,src_pub,dst_pub,p_hat\n");
            for (edge, p) in edges.iter().zip(predictions) {
                let p = p.map_or(String::new(), |v| format!("{v:.6}"));
                let _ = writeln!(text, "{},{},{},{p}", edge.channel_id, edge.src, edge.dst);
            }
            emit(&text, out)
        }
        Command::Route {
            snapshot,
            model,
            src,
            dest,
            amount_sat,
        } => {
            let graph = ctx.snapshot(snapshot)?;
            let (src, dest) = (node_id(src)?, node_id(dest)?);
            let result = match resolve_model(model)? {
                Resolved::Model(estimator) => route(
                    &graph,
                    &estimator,
                    &RouteQuery {
                        src,
                        dest,
                        amount_sat: *amount_sat,
                    },
                    &ctx.cfg.simulation.routing,
                )?,
                Resolved::CapacityUniform => {
                    let net = RoutingNetwork::new(&graph);
                    net.find_path(&net.capacity_costs(*amount_sat), &src, &dest)?
                }
                Resolved::Oracle => return Err(usage("routing with `oracle` needs true balances; use simulate")),
            };
            if !result.found {
                println!("no route with enough predicted liquidity");
                return Ok(());
            }
            let mut text = String::from("hop,channel_id,src_pub,dst_pub,p_hat\n");
            for (i, (edge, p)) in result.path.iter().zip(&result.per_hop_p).enumerate() {
                let _ = writeln!(text, "{i},{},{},{},{p:.6}", edge.channel_id, edge.src, edge.dst);
            }
            let _ = writeln!(
                text,
                "total_cost,{:.6},success_probability,{:.6}",
                result.total_cost,
                (-result.total_cost).exp()
            );
            emit(&text, &None)
        }
        Command::Simulate {
            data: args,
            models,
            payments,
            max_retries,
            shift_balances,
            out,
        } => {
            let graph = ctx.labeled(args)?;
            let resolved: Vec<Resolved> = models.iter().map(|m| resolve_model(m)).collect::<Result<_, _>>()?;
            let strategies: Vec<Strategy> = resolved
                .iter()
                .map(|r| match r {
                    Resolved::Oracle => Strategy::Oracle,
                    Resolved::CapacityUniform => Strategy::CapacityUniform,
                    Resolved::Model(e) => Strategy::Model(e),
                })
                .collect();
            let mut config: SimConfig = ctx.cfg.simulation.clone();
            config.rng_seed = ctx.seed;
            if let Some(n) = payments {
                config.n_payments = *n;
            }
            if let Some(r) = max_retries {
                config.max_retries = *r;
            }
            config.shift_balances |= *shift_balances;
            let report = simulate(&graph, &strategies, &config)?;
            if let Some(dir) = out.clone().or_else(|| ctx.cfg.paths.out.clone()) {
                report.write(&dir)?;
            }
            emit(&report.summary_csv(), &None)
        }
    }
}
