//! Train/validation/test protocol, metrics and benchmark reports.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{featurizable, FeatureRow, FeatureSchema, Variant};
use crate::forest::{FeaturesPerSplit, ForestConfig};
use crate::graph::{ChannelGraph, ChannelTarget, DirectedEdge};
use crate::models::{encodings_for, train_variant, Estimator, EstimatorKind, ModelError, TrainConfig};
use crate::scalar::Scalar;
use crate::seed;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("need at least {needed} items, got {got}")]
    TooFew { needed: usize, got: usize },
    #[error("invalid split: {0}")]
    InvalidSplit(String),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error(transparent)]
    Model(#[from] ModelError),
}

pub type Result<T, E = EvalError> = std::result::Result<T, E>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSpec {
    pub test_fraction: f64,
    pub val_fraction: f64,
    pub rng_seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            test_fraction: 0.1,
            val_fraction: 0.1,
            rng_seed: 0,
        }
    }
}

/// Channel-level folds; both directions of a channel share a fold.
#[derive(Clone, Debug, PartialEq)]
pub struct Folds {
    pub train: Vec<ChannelTarget>,
    pub val: Vec<ChannelTarget>,
    pub test: Vec<ChannelTarget>,
}

/// Seeded shuffle of the channels (in id order) into train/val/test with
/// fold sizes `round(n · fraction)`.
pub fn split(targets: &[ChannelTarget], spec: &SplitSpec) -> Result<Folds> {
    let (t, v) = (spec.test_fraction, spec.val_fraction);
    if !(t > 0.0 && t < 1.0 && (0.0..1.0).contains(&v) && t + v < 1.0) {
        return Err(EvalError::InvalidSplit(format!("fractions {t} and {v}")));
    }
    if targets.len() < 10 {
        return Err(EvalError::TooFew {
            needed: 10,
            got: targets.len(),
        });
    }
    let mut shuffled = targets.to_vec();
    shuffled.sort_by(|a, b| a.channel_id.cmp(&b.channel_id));
    if shuffled.windows(2).any(|w| w[0].channel_id == w[1].channel_id) {
        return Err(EvalError::InvalidSplit("duplicate channel in targets".into()));
    }
    shuffled.shuffle(&mut seed::rng(spec.rng_seed, "split"));
    let n = shuffled.len();
    let n_test = ((n as f64 * t).round() as usize).max(1);
    let n_val = (n as f64 * v).round() as usize;
    let test = shuffled[..n_test].to_vec();
    let val = shuffled[n_test..n_test + n_val].to_vec();
    let train = shuffled[n_test + n_val..].to_vec();
    Ok(Folds { train, val, test })
}

/// `mae_p`, `mae_y`, Pearson `r` (absent when either side is constant) and
/// `r2` over one prediction set.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics<T> {
    pub n: usize,
    pub mae_p: T,
    pub mae_y_sat: T,
    pub r: Option<T>,
    pub r2: T,
}

/// One scored prediction: estimate, truth, channel capacity.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Scored<T> {
    pub p_hat: T,
    pub p: T,
    pub capacity_sat: u64,
}

pub fn pearson<T: Scalar>(a: &[T], b: &[T]) -> Option<T> {
    assert_eq!(a.len(), b.len());
    if a.is_empty() {
        return None;
    }
    let n = T::of_usize(a.len());
    let ma = a.iter().copied().sum::<T>() / n;
    let mb = b.iter().copied().sum::<T>() / n;
    let (mut sab, mut saa, mut sbb) = (T::zero(), T::zero(), T::zero());
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (*x - ma, *y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == T::zero() || sbb == T::zero() {
        return None;
    }
    Some((sab / (saa.sqrt() * sbb.sqrt())).max(-T::one()).min(T::one()))
}

pub fn compute_metrics<T: Scalar>(scored: &[Scored<T>]) -> Result<Metrics<T>> {
    if scored.is_empty() {
        return Err(EvalError::TooFew { needed: 1, got: 0 });
    }
    let n = T::of_usize(scored.len());
    let mut abs = T::zero();
    let mut abs_y = T::zero();
    let mut ss_res = T::zero();
    for s in scored {
        let err = (s.p - s.p_hat).abs();
        abs += err;
        abs_y += err * T::of(s.capacity_sat as f64);
        ss_res += err * err;
    }
    let p: Vec<T> = scored.iter().map(|s| s.p).collect();
    let p_hat: Vec<T> = scored.iter().map(|s| s.p_hat).collect();
    let mean = p.iter().copied().sum::<T>() / n;
    let ss_tot: T = p.iter().map(|v| (*v - mean) * (*v - mean)).sum();
    let r2 = if ss_tot > T::zero() {
        T::one() - ss_res / ss_tot
    } else if ss_res == T::zero() {
        T::one()
    } else {
        T::zero()
    };
    Ok(Metrics {
        n: scored.len(),
        mae_p: abs / n,
        mae_y_sat: abs_y / n,
        r: pearson(&p_hat, &p),
        r2,
    })
}

/// `counts[actual][predicted]`, side 0 meaning `≤ 0.5`.
pub fn confusion_at_half<T: Scalar>(pairs: impl IntoIterator<Item = (T, T)>) -> [[usize; 2]; 2] {
    let half = T::of(0.5);
    let side = |v: T| usize::from(v > half);
    let mut counts = [[0; 2]; 2];
    for (p_hat, p) in pairs {
        counts[side(p)][side(p_hat)] += 1;
    }
    counts
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FeatureCorrelation {
    pub name: String,
    /// Absent for constant features.
    pub r: Option<f64>,
}

/// Pearson correlation of every schema feature against the row targets.
pub fn feature_correlations(rows: &[FeatureRow], schema: &FeatureSchema) -> Result<Vec<FeatureCorrelation>> {
    if rows.len() < 3 {
        return Err(EvalError::TooFew {
            needed: 3,
            got: rows.len(),
        });
    }
    let target: Vec<f64> = rows.iter().map(|r| r.target_p.unwrap_or(f64::NAN)).collect();
    Ok(schema
        .names()
        .iter()
        .enumerate()
        .map(|(j, name)| {
            let column: Vec<f64> = rows.iter().map(|r| r.values[j]).collect();
            FeatureCorrelation {
                name: name.to_string(),
                r: pearson(&column, &target),
            }
        })
        .collect())
}

/// Features with `|r| > threshold`, strongest first (ties by name).
pub fn correlation_screen(rows: &[FeatureRow], schema: &FeatureSchema, threshold: f64) -> Result<Vec<(String, f64)>> {
    let mut kept: Vec<(String, f64)> = feature_correlations(rows, schema)?
        .into_iter()
        .filter_map(|c| c.r.filter(|r| r.abs() > threshold).map(|r| (c.name, r)))
        .collect();
    kept.sort_by(|a, b| b.1.abs().total_cmp(&a.1.abs()).then_with(|| a.0.cmp(&b.0)));
    Ok(kept)
}

/// A test edge with its truth and (possibly undefined) estimate.
#[derive(Clone, Debug, PartialEq)]
pub struct EvaluatedEdge {
    pub edge: DirectedEdge,
    pub capacity_sat: u64,
    pub p: f64,
    pub p_hat: Option<f64>,
}

/// Both directions of every test channel that has usable policies on both
/// sides, in the order of `test`.
pub fn test_edges(graph: &ChannelGraph, test: &[ChannelTarget], config: &TrainConfig) -> Vec<(DirectedEdge, u64, f64)> {
    let mut out = Vec::with_capacity(2 * test.len());
    for t in test {
        if !featurizable(graph, &t.channel_id, &config.features) {
            continue;
        }
        let channel = graph.channel(&t.channel_id).expect("featurizable implies present");
        let forward = channel.forward_edge();
        let backward = forward.reversed();
        out.push((forward, channel.capacity_sat, t.p_forward));
        out.push((backward, channel.capacity_sat, 1.0 - t.p_forward));
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EvalReport {
    pub kind: EstimatorKind,
    /// Absent when the estimator is undefined on every test edge.
    pub metrics: Option<Metrics<f64>>,
    pub n_undefined: usize,
    pub confusion: [[usize; 2]; 2],
    /// Mean `|p̂(u,v) + p̂(v,u) − 1|` over test channels defined both ways.
    pub antisymmetry_gap: Option<f64>,
    /// Ranked `(feature, importance)` for forest variants.
    pub mdi: Option<Vec<(String, f64)>>,
}

impl EvalReport {
    pub fn n_test(&self) -> usize {
        self.metrics.map_or(0, |m| m.n)
    }

    /// Share of test edges whose side of 0.5 is predicted correctly.
    pub fn side_accuracy(&self) -> Option<f64> {
        let total: usize = self.confusion.iter().flatten().sum();
        (total > 0).then(|| (self.confusion[0][0] + self.confusion[1][1]) as f64 / total as f64)
    }
}

/// Scores `estimator` on the given test edges.
pub fn evaluate_estimator(
    estimator: &Estimator,
    graph: &ChannelGraph,
    edges: &[(DirectedEdge, u64, f64)],
) -> Result<(EvalReport, Vec<EvaluatedEdge>)> {
    let just_edges: Vec<DirectedEdge> = edges.iter().map(|e| e.0.clone()).collect();
    let preds = estimator.predict_edges(graph, &just_edges)?;
    let evaluated: Vec<EvaluatedEdge> = edges
        .iter()
        .zip(preds)
        .map(|((edge, capacity_sat, p), p_hat)| EvaluatedEdge {
            edge: edge.clone(),
            capacity_sat: *capacity_sat,
            p: *p,
            p_hat,
        })
        .collect();
    let scored: Vec<Scored<f64>> = evaluated
        .iter()
        .filter_map(|e| {
            e.p_hat.map(|p_hat| Scored {
                p_hat,
                p: e.p,
                capacity_sat: e.capacity_sat,
            })
        })
        .collect();
    let metrics = (!scored.is_empty()).then(|| compute_metrics(&scored)).transpose()?;
    let confusion = confusion_at_half(scored.iter().map(|s| (s.p_hat, s.p)));
    let mut by_channel: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for e in &evaluated {
        if let Some(p_hat) = e.p_hat {
            by_channel.entry(e.edge.channel_id.as_str()).or_default().push(p_hat);
        }
    }
    let gaps: Vec<f64> = by_channel
        .values()
        .filter(|v| v.len() == 2)
        .map(|v| (v[0] + v[1] - 1.0).abs())
        .collect();
    let antisymmetry_gap = (!gaps.is_empty()).then(|| gaps.iter().sum::<f64>() / gaps.len() as f64);
    let mdi = estimator.forest().map(|f| f.model.ranked_importances());
    let report = EvalReport {
        kind: estimator.kind(),
        metrics,
        n_undefined: evaluated.len() - scored.len(),
        confusion,
        antisymmetry_gap,
        mdi,
    };
    Ok((report, evaluated))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchmarkConfig {
    pub split: SplitSpec,
    pub train: TrainConfig,
    pub kinds: Vec<EstimatorKind>,
    /// Pick forest hyperparameters per variant on the validation fold.
    pub tune: bool,
    pub rng_seed: u64,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        BenchmarkConfig {
            split: SplitSpec::default(),
            train: TrainConfig::default(),
            kinds: EstimatorKind::ALL.to_vec(),
            tune: false,
            rng_seed: 42,
        }
    }
}

/// Candidate forest settings tried when tuning.
pub fn tuning_grid(base: &ForestConfig) -> Vec<ForestConfig> {
    let mut grid = Vec::new();
    for min_samples_leaf in [1, 2, 5, 10] {
        for features_per_split in [FeaturesPerSplit::Third, FeaturesPerSplit::Sqrt] {
            grid.push(ForestConfig {
                min_samples_leaf,
                features_per_split,
                ..base.clone()
            });
        }
    }
    grid
}

#[derive(Clone, Debug)]
pub struct Benchmark {
    pub folds: Folds,
    pub reports: Vec<EvalReport>,
    pub predictions: Vec<Vec<EvaluatedEdge>>,
    /// Forest settings each variant was trained with.
    pub forest_configs: BTreeMap<EstimatorKind, ForestConfig>,
}

impl Benchmark {
    pub fn report(&self, kind: EstimatorKind) -> Option<&EvalReport> {
        self.reports.iter().find(|r| r.kind == kind)
    }
}

type KindOutcome = (EvalReport, Vec<EvaluatedEdge>, Option<ForestConfig>);

/// Splits the labeled channels, trains each forest variant on the train fold
/// and scores every estimator on the test fold.
pub fn run_benchmark(graph: &ChannelGraph, targets: &[ChannelTarget], config: &BenchmarkConfig) -> Result<Benchmark> {
    let spec = SplitSpec {
        rng_seed: seed::derive(config.rng_seed, "split"),
        ..config.split.clone()
    };
    let folds = split(targets, &spec)?;
    log::info!(
        "folds: {} train, {} val, {} test channels",
        folds.train.len(),
        folds.val.len(),
        folds.test.len()
    );
    let needs_encodings = config
        .kinds
        .iter()
        .any(|k| k.variant().is_some_and(|v| v.needs_encodings()));
    let encodings = if needs_encodings {
        Some(encodings_for(graph, &config.train.spectral, config.rng_seed).map_err(EvalError::Model)?)
    } else {
        None
    };
    let edges = test_edges(graph, &folds.test, &config.train);
    let val_edges = test_edges(graph, &folds.val, &config.train);

    let outcomes: Vec<Result<KindOutcome>> = config
        .kinds
        .par_iter()
        .map(|&kind| {
            let (estimator, forest_config) = match kind {
                EstimatorKind::EqualSplit => (Estimator::EqualSplit, None),
                EstimatorKind::LocalMaxHtlc => (Estimator::LocalMaxHtlc, None),
                EstimatorKind::Forest(variant) => {
                    let mut train = config.train.clone();
                    if config.tune && !val_edges.is_empty() {
                        train.forest = tune(variant, graph, &folds.train, &val_edges, &train, encodings.as_ref(), config.rng_seed)?;
                    }
                    let est = train_variant(variant, graph, &folds.train, &train, encodings.as_ref(), config.rng_seed)?;
                    (est, Some(train.forest))
                }
            };
            let (report, evaluated) = evaluate_estimator(&estimator, graph, &edges)?;
            Ok((report, evaluated, forest_config))
        })
        .collect();

    let mut reports = Vec::new();
    let mut predictions = Vec::new();
    let mut forest_configs = BTreeMap::new();
    for (kind, outcome) in config.kinds.iter().zip(outcomes) {
        let (report, evaluated, forest) = outcome?;
        if let Some(f) = forest {
            forest_configs.insert(*kind, f);
        }
        reports.push(report);
        predictions.push(evaluated);
    }
    Ok(Benchmark {
        folds,
        reports,
        predictions,
        forest_configs,
    })
}

fn tune(
    variant: Variant,
    graph: &ChannelGraph,
    train: &[ChannelTarget],
    val_edges: &[(DirectedEdge, u64, f64)],
    config: &TrainConfig,
    encodings: Option<&crate::spectral::PositionalTable<f64>>,
    rng_seed: u64,
) -> Result<ForestConfig> {
    let mut best: Option<(f64, ForestConfig)> = None;
    for candidate in tuning_grid(&config.forest) {
        let trial = TrainConfig {
            forest: candidate.clone(),
            ..config.clone()
        };
        let est = train_variant(variant, graph, train, &trial, encodings, rng_seed)?;
        let (report, _) = evaluate_estimator(&est, graph, val_edges)?;
        let Some(m) = report.metrics else { continue };
        if best.as_ref().is_none_or(|(b, _)| m.mae_p < *b) {
            best = Some((m.mae_p, candidate));
        }
    }
    Ok(best.map_or_else(|| config.forest.clone(), |(_, c)| c))
}

// ---------------------------------------------------------------------------
// Report files

/// Number of error-histogram bins over `[-1, 1]`.
pub const HISTOGRAM_BINS: usize = 20;

/// Counts of `p̂ − p` in equal-width bins over `[-1, 1]`; `1.0` falls in the
/// last bin.
pub fn error_histogram(evaluated: &[EvaluatedEdge]) -> [usize; HISTOGRAM_BINS] {
    let mut bins = [0; HISTOGRAM_BINS];
    for e in evaluated {
        if let Some(p_hat) = e.p_hat {
            let err = (p_hat - e.p).clamp(-1.0, 1.0);
            let i = (((err + 1.0) / 2.0) * HISTOGRAM_BINS as f64).floor() as usize;
            bins[i.min(HISTOGRAM_BINS - 1)] += 1;
        }
    }
    bins
}

fn fmt_opt(v: Option<f64>, empty: &str) -> String {
    v.map_or_else(|| empty.to_string(), |x| format!("{x:.6}"))
}

pub fn results_csv(reports: &[EvalReport]) -> String {
    let mut out = String::from("model,n_test,n_undefined,mae_p,mae_y_sat,r,r2,side_accuracy,antisymmetry_gap\n");
    for r in reports {
        let m = r.metrics;
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.kind,
            r.n_test(),
            r.n_undefined,
            fmt_opt(m.map(|m| m.mae_p), ""),
            fmt_opt(m.map(|m| m.mae_y_sat), ""),
            fmt_opt(m.and_then(|m| m.r), ""),
            fmt_opt(m.map(|m| m.r2), ""),
            fmt_opt(r.side_accuracy(), ""),
            fmt_opt(r.antisymmetry_gap, ""),
        );
    }
    out
}

/// Aligned plain-text table; undefined values print as `—`.
pub fn results_table(reports: &[EvalReport]) -> String {
    let header = ["model", "n_test", "MAE_p", "MAE_y (sat)", "R", "R²", "side acc."];
    let rows: Vec<[String; 7]> = reports
        .iter()
        .map(|r| {
            let m = r.metrics;
            [
                r.kind.to_string(),
                r.n_test().to_string(),
                m.map_or("—".into(), |m| format!("{:.4}", m.mae_p)),
                m.map_or("—".into(), |m| format!("{:.0}", m.mae_y_sat)),
                m.and_then(|m| m.r).map_or("—".into(), |v| format!("{v:.3}")),
                m.map_or("—".into(), |m| format!("{:.3}", m.r2)),
                r.side_accuracy().map_or("—".into(), |v| format!("{:.1}%", 100.0 * v)),
            ]
        })
        .collect();
    let width = |j: usize| {
        rows.iter()
            .map(|r| r[j].chars().count())
            .chain([header[j].chars().count()])
            .max()
            .unwrap_or(0)
    };
    let widths: Vec<usize> = (0..header.len()).map(width).collect();
    let line = |cells: Vec<&str>| -> String {
        let mut s = String::new();
        for (j, c) in cells.iter().enumerate() {
            let pad = widths[j] - c.chars().count();
            if j == 0 {
                s.push_str(c);
                s.push_str(&" ".repeat(pad));
            } else {
                s.push_str("  ");
                s.push_str(&" ".repeat(pad));
                s.push_str(c);
            }
        }
        s.trim_end().to_string() + "\n"
    };
    let mut out = line(header.to_vec());
    for r in &rows {
        out.push_str(&line(r.iter().map(String::as_str).collect()));
    }
    out
}

/// Writes `results.csv`, `results.txt`, `histogram.csv`, `scatter.csv`,
/// `mdi.csv` and `confusion.csv` into `dir`.
pub fn write_reports(bench: &Benchmark, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    let io = |e: std::io::Error| EvalError::Io {
        path: dir.display().to_string(),
        message: e.to_string(),
    };
    std::fs::create_dir_all(dir).map_err(io)?;
    let write = |name: &str, body: String| std::fs::write(dir.join(name), body).map_err(io);

    write("results.csv", results_csv(&bench.reports))?;
    write("results.txt", results_table(&bench.reports))?;

    let mut hist = String::from("bin_lo,bin_hi");
    for r in &bench.reports {
        hist.push(',');
        hist.push_str(r.kind.name());
    }
    hist.push('\n');
    let counts: Vec<[usize; HISTOGRAM_BINS]> = bench.predictions.iter().map(|p| error_histogram(p)).collect();
    for b in 0..HISTOGRAM_BINS {
        let lo = -1.0 + 2.0 * b as f64 / HISTOGRAM_BINS as f64;
        let hi = -1.0 + 2.0 * (b + 1) as f64 / HISTOGRAM_BINS as f64;
        let _ = write!(hist, "{lo:.1},{hi:.1}");
        for c in &counts {
            let _ = write!(hist, ",{}", c[b]);
        }
        hist.push('\n');
    }
    write("histogram.csv", hist)?;

    let mut scatter = String::from("model,channel_id,src_pub,p,p_hat\n");
    for (r, preds) in bench.reports.iter().zip(&bench.predictions) {
        for e in preds {
            let _ = writeln!(
                scatter,
                "{},{},{},{},{}",
                r.kind,
                e.edge.channel_id,
                e.edge.src,
                e.p,
                e.p_hat.map_or(String::new(), |v| v.to_string())
            );
        }
    }
    write("scatter.csv", scatter)?;

    let mut mdi = String::from("model,rank,feature,importance\n");
    for r in &bench.reports {
        for (i, (name, v)) in r.mdi.iter().flatten().enumerate() {
            let _ = writeln!(mdi, "{},{},{name},{v:.9}", r.kind, i + 1);
        }
    }
    write("mdi.csv", mdi)?;

    let mut confusion = String::from("model,actual,predicted,count\n");
    let side = ["p<=0.5", "p>0.5"];
    for r in &bench.reports {
        for (a, row) in r.confusion.iter().enumerate() {
            for (p, count) in row.iter().enumerate() {
                let _ = writeln!(confusion, "{},{},{},{count}", r.kind, side[a], side[p]);
            }
        }
    }
    write("confusion.csv", confusion)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn targets(n: usize) -> Vec<ChannelTarget> {
        (0..n)
            .map(|i| ChannelTarget {
                channel_id: format!("{i:04}"),
                p_forward: i as f64 / n as f64,
            })
            .collect()
    }

    #[test]
    fn split_sizes_and_determinism() {
        let t = targets(100);
        let spec = SplitSpec {
            rng_seed: 3,
            ..Default::default()
        };
        let folds = split(&t, &spec).unwrap();
        assert_eq!((folds.train.len(), folds.val.len(), folds.test.len()), (80, 10, 10));
        assert_eq!(folds, split(&t, &spec).unwrap());
        let mut ids: Vec<_> = [&folds.train, &folds.val, &folds.test]
            .iter()
            .flat_map(|f| f.iter().map(|c| c.channel_id.clone()))
            .collect();
        ids.sort();
        ids.dedup();
        assert_eq!(ids.len(), 100);
        assert!(matches!(split(&t[..9], &spec), Err(EvalError::TooFew { .. })));
    }

    #[test]
    fn metrics_hand_example() {
        let s: [Scored<f64>; 2] = [
            Scored {
                p_hat: 0.5,
                p: 0.9,
                capacity_sat: 1_000_000,
            },
            Scored {
                p_hat: 0.5,
                p: 0.1,
                capacity_sat: 1_000_000,
            },
        ];
        let m: Metrics<f64> = compute_metrics(&s).unwrap();
        assert!((m.mae_p - 0.4).abs() < 1e-15);
        assert!((m.mae_y_sat - 400_000.0).abs() < 1e-9);
        assert_eq!(m.r2, 0.0);
        assert_eq!(m.r, None);
    }

    #[test]
    fn perfect_and_constant_predictors() {
        let perfect: Vec<Scored<f64>> = [0.1, 0.4, 0.8]
            .iter()
            .map(|&p| Scored {
                p_hat: p,
                p,
                capacity_sat: 10,
            })
            .collect();
        let m = compute_metrics(&perfect).unwrap();
        assert_eq!((m.mae_p, m.r2), (0.0, 1.0));
        assert!((m.r.unwrap() - 1.0).abs() < 1e-15);
        let constant: Vec<Scored<f64>> = [0.1, 0.2, 0.3]
            .iter()
            .map(|&p| Scored {
                p_hat: 0.5,
                p,
                capacity_sat: 10,
            })
            .collect();
        assert!(compute_metrics(&constant).unwrap().r2 < 0.0);
        assert!(compute_metrics::<f64>(&[]).is_err());
    }

    #[test]
    fn confusion_fixture() {
        let c = confusion_at_half([(0.3, 0.1), (0.6, 0.2), (0.7, 0.8), (0.4, 0.9)]);
        assert_eq!(c, [[1, 1], [1, 1]]);
        let c = confusion_at_half([(0.5, 0.1), (0.5, 0.9)]);
        assert_eq!(c, [[1, 0], [1, 0]]);
    }

    #[test]
    fn histogram_edges() {
        let e = |p: f64, p_hat: f64| EvaluatedEdge {
            edge: DirectedEdge {
                src: crate::graph::NodeId::from_index(0),
                dst: crate::graph::NodeId::from_index(1),
                channel_id: "1".into(),
            },
            capacity_sat: 1,
            p,
            p_hat: Some(p_hat),
        };
        let bins = error_histogram(&[e(1.0, 0.0), e(0.0, 1.0), e(0.5, 0.5), e(0.3, 0.3 - 1e-9)]);
        assert_eq!(bins[0], 1);
        assert_eq!(bins[HISTOGRAM_BINS - 1], 1);
        assert_eq!(bins[HISTOGRAM_BINS / 2], 1);
        assert_eq!(bins[HISTOGRAM_BINS / 2 - 1], 1);
    }

    #[test]
    fn table_marks_undefined_correlation() {
        let report = EvalReport {
            kind: EstimatorKind::EqualSplit,
            metrics: Some(Metrics {
                n: 2,
                mae_p: 0.4,
                mae_y_sat: 4.0,
                r: None,
                r2: 0.0,
            }),
            n_undefined: 0,
            confusion: [[1, 0], [1, 0]],
            antisymmetry_gap: Some(0.0),
            mdi: None,
        };
        let table = results_table(std::slice::from_ref(&report));
        assert!(table.lines().nth(1).unwrap().contains('—'));
        assert!(results_csv(&[report]).lines().nth(1).unwrap().contains(",,"));
    }
}
