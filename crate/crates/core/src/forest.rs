//! Random forest regressor: bagged CART trees grown on squared error, with
//! mean-decrease-impurity importances.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{FeatureRow, FeatureSchema};
use crate::scalar::Scalar;

pub const MODEL_FORMAT: &str = "chanbal-forest";
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ForestError {
    #[error("no training rows")]
    Empty,
    #[error("row {row} has {found} features, expected {expected}")]
    DimensionMismatch { row: usize, expected: usize, found: usize },
    #[error("non-finite value in row {0}")]
    NonFinite(usize),
    #[error("invalid forest config: {0}")]
    InvalidConfig(String),
    #[error("schema mismatch: model expects {expected}, rows carry {found}")]
    SchemaMismatch { expected: String, found: String },
    #[error("unsupported model file: {0}")]
    Version(String),
    #[error("corrupt model file {path}: {message}")]
    Corrupt { path: String, message: String },
    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

pub type Result<T, E = ForestError> = std::result::Result<T, E>;

/// Number of candidate features drawn at every node.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(try_from = "FeaturesRepr", into = "FeaturesRepr")]
pub enum FeaturesPerSplit {
    All,
    /// `ceil(d / 3)`
    #[default]
    Third,
    /// `max(1, floor(sqrt(d)))`
    Sqrt,
    Count(usize),
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum FeaturesRepr {
    Count(usize),
    Rule(String),
}

impl TryFrom<FeaturesRepr> for FeaturesPerSplit {
    type Error = String;
    fn try_from(r: FeaturesRepr) -> Result<Self, String> {
        match r {
            FeaturesRepr::Count(0) => Err("features_per_split must be at least 1".into()),
            FeaturesRepr::Count(k) => Ok(FeaturesPerSplit::Count(k)),
            FeaturesRepr::Rule(s) => s.parse(),
        }
    }
}

impl From<FeaturesPerSplit> for FeaturesRepr {
    fn from(f: FeaturesPerSplit) -> Self {
        match f {
            FeaturesPerSplit::All => FeaturesRepr::Rule("all".into()),
            FeaturesPerSplit::Third => FeaturesRepr::Rule("third".into()),
            FeaturesPerSplit::Sqrt => FeaturesRepr::Rule("sqrt".into()),
            FeaturesPerSplit::Count(k) => FeaturesRepr::Count(k),
        }
    }
}

impl std::str::FromStr for FeaturesPerSplit {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "all" => Ok(FeaturesPerSplit::All),
            "third" => Ok(FeaturesPerSplit::Third),
            "sqrt" => Ok(FeaturesPerSplit::Sqrt),
            other => match other.parse::<usize>() {
                Ok(k) if k > 0 => Ok(FeaturesPerSplit::Count(k)),
                _ => Err(format!("unknown features_per_split rule {other:?}")),
            },
        }
    }
}

impl FeaturesPerSplit {
    pub fn resolve(self, d: usize) -> usize {
        let k = match self {
            FeaturesPerSplit::All => d,
            FeaturesPerSplit::Third => d.div_ceil(3),
            FeaturesPerSplit::Sqrt => (d as f64).sqrt().floor() as usize,
            FeaturesPerSplit::Count(k) => k,
        };
        k.clamp(1, d.max(1))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub max_depth: Option<usize>,
    pub min_samples_leaf: usize,
    pub features_per_split: FeaturesPerSplit,
    pub bootstrap: bool,
    pub rng_seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig {
            n_trees: 200,
            max_depth: None,
            min_samples_leaf: 2,
            features_per_split: FeaturesPerSplit::Third,
            bootstrap: true,
            rng_seed: 0,
        }
    }
}

impl ForestConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_trees == 0 {
            return Err(ForestError::InvalidConfig("n_trees must be at least 1".into()));
        }
        if self.min_samples_leaf == 0 {
            return Err(ForestError::InvalidConfig("min_samples_leaf must be at least 1".into()));
        }
        if self.features_per_split == FeaturesPerSplit::Count(0) {
            return Err(ForestError::InvalidConfig("features_per_split must be at least 1".into()));
        }
        Ok(())
    }
}

/// Rows with `x ≤ threshold` go left.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum TreeNode<T> {
    Split {
        feature: usize,
        threshold: T,
        left: usize,
        right: usize,
        n_samples: usize,
        impurity: T,
    },
    Leaf {
        value: T,
        n_samples: usize,
        impurity: T,
    },
}

impl<T: Scalar> TreeNode<T> {
    pub fn n_samples(&self) -> usize {
        match self {
            TreeNode::Split { n_samples, .. } | TreeNode::Leaf { n_samples, .. } => *n_samples,
        }
    }

    /// Mean squared deviation of the node's targets.
    pub fn impurity(&self) -> T {
        match self {
            TreeNode::Split { impurity, .. } | TreeNode::Leaf { impurity, .. } => *impurity,
        }
    }
}

/// A flattened tree; node 0 is the root.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tree<T> {
    pub nodes: Vec<TreeNode<T>>,
}

impl<T: Scalar> Tree<T> {
    pub fn root(&self) -> &TreeNode<T> {
        &self.nodes[0]
    }

    pub fn predict(&self, row: &[T]) -> T {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                TreeNode::Leaf { value, .. } => return *value,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => at = if row[*feature] <= *threshold { *left } else { *right },
            }
        }
    }

    pub fn depth(&self) -> usize {
        let mut best = 0;
        let mut stack = vec![(0usize, 0usize)];
        while let Some((at, d)) = stack.pop() {
            best = best.max(d);
            if let TreeNode::Split { left, right, .. } = &self.nodes[at] {
                stack.push((*left, d + 1));
                stack.push((*right, d + 1));
            }
        }
        best
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RandomForest<T> {
    pub config: ForestConfig,
    pub schema: FeatureSchema,
    pub trees: Vec<Tree<T>>,
    /// Normalized importances, one per schema feature.
    pub mdi: Vec<T>,
}

/// Column-major training data.
struct Columns<T> {
    n: usize,
    cols: Vec<Vec<T>>,
    y: Vec<T>,
    /// Per feature, row indices sorted by value (ties by row index).
    sorted: Vec<Vec<u32>>,
}

impl<T: Scalar> Columns<T> {
    fn new(x: &[Vec<T>], y: &[T], d: usize) -> Result<Self> {
        if x.is_empty() {
            return Err(ForestError::Empty);
        }
        if x.len() != y.len() {
            return Err(ForestError::InvalidConfig(format!("{} rows but {} targets", x.len(), y.len())));
        }
        let n = x.len();
        let mut cols = vec![Vec::with_capacity(n); d];
        for (i, row) in x.iter().enumerate() {
            if row.len() != d {
                return Err(ForestError::DimensionMismatch {
                    row: i,
                    expected: d,
                    found: row.len(),
                });
            }
            if !y[i].is_finite() || row.iter().any(|v| !v.is_finite()) {
                return Err(ForestError::NonFinite(i));
            }
            for (f, v) in row.iter().enumerate() {
                cols[f].push(*v);
            }
        }
        let sorted = cols
            .iter()
            .map(|col| {
                let mut idx: Vec<u32> = (0..n as u32).collect();
                idx.sort_by(|&a, &b| col[a as usize].partial_cmp(&col[b as usize]).unwrap().then(a.cmp(&b)));
                idx
            })
            .collect();
        Ok(Columns {
            n,
            cols,
            y: y.to_vec(),
            sorted,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct SplitChoice<T> {
    feature: usize,
    threshold: T,
    /// Position within the node range of the last left sample.
    cut: usize,
    gain: T,
}

struct TreeBuilder<'a, T> {
    data: &'a Columns<T>,
    config: &'a ForestConfig,
    k_features: usize,
    rng: ChaCha8Rng,
    /// Bootstrap position -> data row.
    rows: Vec<u32>,
    /// Per feature, positions sorted by value, followed by one list in
    /// position order for node statistics that must not depend on column
    /// order. Every node owns the same `[start, end)` slice in each of them.
    orders: Vec<Vec<u32>>,
    go_left: Vec<bool>,
    scratch: Vec<u32>,
    nodes: Vec<TreeNode<T>>,
    importance: Vec<T>,
}

/// Best variance-reduction split over `features` for the samples whose
/// positions are listed (sorted by each feature) in `orders[f][range]`.
/// Candidates are midpoints between distinct consecutive values; ties go to
/// the lowest feature, then the lowest threshold.
#[allow(clippy::too_many_arguments)]
fn best_split<T: Scalar>(
    data: &Columns<T>,
    rows: &[u32],
    orders: &[Vec<u32>],
    start: usize,
    end: usize,
    features: &[usize],
    min_leaf: usize,
    mean: T,
    sse: T,
) -> Option<SplitChoice<T>> {
    let n = end - start;
    let nt = T::of_usize(n);
    let tol = sse * T::of(1e-12);
    let mut best: Option<SplitChoice<T>> = None;
    for &f in features {
        let order = &orders[f][start..end];
        let col = &data.cols[f];
        let value = |p: u32| col[rows[p as usize] as usize];
        let total: T = order.iter().map(|&p| data.y[rows[p as usize] as usize] - mean).sum();
        let mut s_left = T::zero();
        for i in 0..n - 1 {
            let p = order[i];
            s_left += data.y[rows[p as usize] as usize] - mean;
            let n_left = i + 1;
            if n_left < min_leaf {
                continue;
            }
            if n - n_left < min_leaf {
                break;
            }
            let (lo, hi) = (value(p), value(order[i + 1]));
            if lo == hi {
                continue;
            }
            let s_right = total - s_left;
            let gain = s_left * s_left / T::of_usize(n_left) + s_right * s_right / T::of_usize(n - n_left)
                - total * total / nt;
            let better = match &best {
                None => gain > tol,
                Some(b) => gain > b.gain + tol,
            };
            if better {
                let mut threshold = (lo + hi) / T::of(2.0);
                if threshold >= hi {
                    threshold = lo;
                }
                best = Some(SplitChoice {
                    feature: f,
                    threshold,
                    cut: i,
                    gain,
                });
            }
        }
    }
    best
}

impl<'a, T: Scalar> TreeBuilder<'a, T> {
    fn new(data: &'a Columns<T>, config: &'a ForestConfig, tree_index: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed.wrapping_add(tree_index as u64));
        let n = data.n;
        let d = data.cols.len();
        let rows: Vec<u32> = if config.bootstrap {
            let mut r: Vec<u32> = (0..n).map(|_| rng.random_range(0..n as u32)).collect();
            r.sort_unstable();
            r
        } else {
            (0..n as u32).collect()
        };
        // positions of each data row within `rows`, in CSR form
        let mut offsets = vec![0usize; n + 1];
        for &r in &rows {
            offsets[r as usize + 1] += 1;
        }
        for i in 0..n {
            offsets[i + 1] += offsets[i];
        }
        let mut orders: Vec<Vec<u32>> = data
            .sorted
            .iter()
            .map(|sorted| {
                sorted
                    .iter()
                    .flat_map(|&r| (offsets[r as usize]..offsets[r as usize + 1]).map(|p| p as u32))
                    .collect()
            })
            .collect();
        orders.push((0..rows.len() as u32).collect());
        TreeBuilder {
            data,
            config,
            k_features: config.features_per_split.resolve(d),
            rng,
            go_left: vec![false; rows.len()],
            scratch: Vec::with_capacity(rows.len()),
            rows,
            orders,
            nodes: Vec::new(),
            importance: vec![T::zero(); d],
        }
    }

    fn target(&self, position: u32) -> T {
        self.data.y[self.rows[position as usize] as usize]
    }

    fn feature_subset(&mut self) -> Vec<usize> {
        let d = self.data.cols.len();
        if self.k_features >= d {
            return (0..d).collect();
        }
        let mut f = sample(&mut self.rng, d, self.k_features).into_vec();
        f.sort_unstable();
        f
    }

    fn partition(&mut self, start: usize, end: usize) {
        for order in self.orders.iter_mut() {
            self.scratch.clear();
            let mut w = start;
            for i in start..end {
                let p = order[i];
                if self.go_left[p as usize] {
                    order[w] = p;
                    w += 1;
                } else {
                    self.scratch.push(p);
                }
            }
            order[w..end].copy_from_slice(&self.scratch);
        }
    }

    fn build(mut self) -> (Tree<T>, Vec<T>) {
        let min_leaf = self.config.min_samples_leaf;
        // (node slot, start, end, depth)
        let mut stack = vec![(0usize, 0usize, self.rows.len(), 0usize)];
        self.nodes.push(TreeNode::Leaf {
            value: T::zero(),
            n_samples: 0,
            impurity: T::zero(),
        });
        while let Some((slot, start, end, depth)) = stack.pop() {
            let n = end - start;
            let nt = T::of_usize(n);
            let positions = &self.orders[self.data.cols.len()][start..end];
            let mean = running_mean(positions.iter().map(|&p| self.target(p)));
            let (mut lo, mut hi) = (T::infinity(), T::neg_infinity());
            let mut sse = T::zero();
            for &p in positions {
                let y = self.target(p);
                lo = lo.min(y);
                hi = hi.max(y);
                sse += (y - mean) * (y - mean);
            }
            let leaf = TreeNode::Leaf {
                value: mean,
                n_samples: n,
                impurity: sse / nt,
            };
            let depth_exhausted = self.config.max_depth.is_some_and(|m| depth >= m);
            if n < 2 * min_leaf || depth_exhausted || lo == hi {
                self.nodes[slot] = leaf;
                continue;
            }
            let features = self.feature_subset();
            let Some(choice) = best_split(
                self.data, &self.rows, &self.orders, start, end, &features, min_leaf, mean, sse,
            ) else {
                self.nodes[slot] = leaf;
                continue;
            };
            let order = &self.orders[choice.feature];
            for (i, &p) in order[start..end].iter().enumerate() {
                self.go_left[p as usize] = i <= choice.cut;
            }
            self.partition(start, end);
            self.importance[choice.feature] += choice.gain.max(T::zero());
            let mid = start + choice.cut + 1;
            let (left, right) = (self.nodes.len(), self.nodes.len() + 1);
            for _ in 0..2 {
                self.nodes.push(TreeNode::Leaf {
                    value: T::zero(),
                    n_samples: 0,
                    impurity: T::zero(),
                });
            }
            self.nodes[slot] = TreeNode::Split {
                feature: choice.feature,
                threshold: choice.threshold,
                left,
                right,
                n_samples: n,
                impurity: sse / nt,
            };
            stack.push((right, mid, end, depth + 1));
            stack.push((left, start, mid, depth + 1));
        }
        (Tree { nodes: self.nodes }, self.importance)
    }
}

/// Incremental mean; exact when all values are equal.
fn running_mean<T: Scalar>(values: impl Iterator<Item = T>) -> T {
    let mut mean = T::zero();
    for (k, v) in values.enumerate() {
        mean += (v - mean) / T::of_usize(k + 1);
    }
    mean
}

/// Normalizes raw importances to sum to one; all-zero input becomes uniform.
pub fn normalize_importances<T: Scalar>(raw: &[T]) -> Vec<T> {
    let total: T = raw.iter().copied().sum();
    if raw.is_empty() {
        return vec![];
    }
    if total <= T::zero() {
        return vec![T::one() / T::of_usize(raw.len()); raw.len()];
    }
    raw.iter().map(|v| *v / total).collect()
}

impl<T: Scalar> RandomForest<T> {
    /// Fits on the row-major matrix `x` with targets `y`; `x` must have
    /// `schema.len()` columns.
    pub fn fit(x: &[Vec<T>], y: &[T], schema: FeatureSchema, config: &ForestConfig) -> Result<Self> {
        config.validate()?;
        let d = schema.len();
        if d == 0 {
            return Err(ForestError::InvalidConfig("schema has no features".into()));
        }
        let data = Columns::new(x, y, d)?;
        let grown: Vec<(Tree<T>, Vec<T>)> = (0..config.n_trees)
            .into_par_iter()
            .map(|t| TreeBuilder::new(&data, config, t).build())
            .collect();
        let mut raw = vec![T::zero(); d];
        let mut trees = Vec::with_capacity(grown.len());
        for (tree, imp) in grown {
            for (r, v) in raw.iter_mut().zip(imp) {
                *r += v;
            }
            trees.push(tree);
        }
        Ok(RandomForest {
            config: config.clone(),
            schema,
            trees,
            mdi: normalize_importances(&raw),
        })
    }

    /// Fits on labeled feature rows.
    pub fn fit_rows(rows: &[FeatureRow], schema: FeatureSchema, config: &ForestConfig) -> Result<Self> {
        let mut x = Vec::with_capacity(rows.len());
        let mut y = Vec::with_capacity(rows.len());
        for (i, row) in rows.iter().enumerate() {
            let target = row.target_p.ok_or_else(|| ForestError::InvalidConfig(format!("row {i} has no target")))?;
            x.push(row.values.iter().map(|v| T::of(*v)).collect());
            y.push(T::of(target));
        }
        Self::fit(&x, &y, schema, config)
    }

    /// Mean tree output clamped to `[0, 1]`.
    pub fn predict(&self, row: &[T]) -> Result<T> {
        if row.len() != self.schema.len() {
            return Err(ForestError::DimensionMismatch {
                row: 0,
                expected: self.schema.len(),
                found: row.len(),
            });
        }
        let mean = running_mean(self.trees.iter().map(|t| t.predict(row)));
        Ok(mean.max(T::zero()).min(T::one()))
    }

    /// Like [`predict`](Self::predict), but first checks that the rows were
    /// built under this model's schema.
    pub fn predict_with_schema(&self, row: &[T], schema: &FeatureSchema) -> Result<T> {
        self.check_schema(schema)?;
        self.predict(row)
    }

    pub fn check_schema(&self, schema: &FeatureSchema) -> Result<()> {
        if &self.schema != schema {
            return Err(ForestError::SchemaMismatch {
                expected: self.schema.fingerprint(),
                found: schema.fingerprint(),
            });
        }
        Ok(())
    }

    /// `(feature name, importance)` sorted by decreasing importance.
    pub fn ranked_importances(&self) -> Vec<(String, T)> {
        let mut out: Vec<(String, T)> = self
            .schema
            .features
            .iter()
            .zip(&self.mdi)
            .map(|(f, v)| (f.name.clone(), *v))
            .collect();
        out.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then_with(|| a.0.cmp(&b.0)));
        out
    }

    pub fn to_json(&self) -> String {
        let file = ModelFile {
            format: MODEL_FORMAT.to_string(),
            version: MODEL_VERSION,
            scalar: std::any::type_name::<T>().to_string(),
            schema_hash: self.schema.fingerprint(),
            config: self.config.clone(),
            schema: self.schema.clone(),
            mdi: self.mdi.clone(),
            trees: self.trees.clone(),
        };
        serde_json::to_string(&file).expect("model serializes")
    }

    pub fn from_json(text: &str, origin: &str) -> Result<Self> {
        let corrupt = |message: String| ForestError::Corrupt {
            path: origin.to_string(),
            message,
        };
        let header: serde_json::Value = serde_json::from_str(text).map_err(|e| corrupt(e.to_string()))?;
        let format = header.get("format").and_then(|v| v.as_str());
        if format != Some(MODEL_FORMAT) {
            return Err(ForestError::Version(format!("format {format:?}, expected {MODEL_FORMAT:?}")));
        }
        let version = header.get("version").and_then(|v| v.as_u64());
        if version != Some(MODEL_VERSION as u64) {
            return Err(ForestError::Version(format!("version {version:?}, expected {MODEL_VERSION}")));
        }
        let scalar = header.get("scalar").and_then(|v| v.as_str());
        if scalar != Some(std::any::type_name::<T>()) {
            return Err(ForestError::Version(format!(
                "scalar type {scalar:?}, expected {}",
                std::any::type_name::<T>()
            )));
        }
        let file: ModelFile<T> = serde_json::from_value(header).map_err(|e| corrupt(e.to_string()))?;
        if file.schema.fingerprint() != file.schema_hash {
            return Err(corrupt("schema hash does not match schema".into()));
        }
        if file.mdi.len() != file.schema.len() || file.trees.is_empty() {
            return Err(corrupt("inconsistent importances or empty forest".into()));
        }
        for tree in &file.trees {
            validate_tree(tree, file.schema.len()).map_err(corrupt)?;
        }
        Ok(RandomForest {
            config: file.config,
            schema: file.schema,
            trees: file.trees,
            mdi: file.mdi,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let io = |e: std::io::Error| ForestError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        };
        let mut out = BufWriter::new(File::create(path).map_err(io)?);
        out.write_all(self.to_json().as_bytes()).map_err(io)?;
        out.write_all(b"\n").map_err(io)?;
        out.flush().map_err(io)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut text = String::new();
        std::io::Read::read_to_string(
            &mut BufReader::new(File::open(path).map_err(|e| ForestError::Io {
                path: path.display().to_string(),
                message: e.to_string(),
            })?),
            &mut text,
        )
        .map_err(|e| ForestError::Corrupt {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::from_json(&text, &path.display().to_string())
    }
}

/// Children must point forward and features must be in range, so that
/// prediction on a loaded model always terminates.
fn validate_tree<T: Scalar>(tree: &Tree<T>, d: usize) -> Result<(), String> {
    if tree.nodes.is_empty() {
        return Err("empty tree".into());
    }
    for (i, node) in tree.nodes.iter().enumerate() {
        if let TreeNode::Split {
            feature, left, right, ..
        } = node
        {
            if *feature >= d || *left <= i || *right <= i || *left >= tree.nodes.len() || *right >= tree.nodes.len() {
                return Err(format!("node {i} has invalid links"));
            }
        }
    }
    Ok(())
}

#[derive(Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
struct ModelFile<T> {
    format: String,
    version: u32,
    scalar: String,
    schema_hash: String,
    config: ForestConfig,
    schema: FeatureSchema,
    mdi: Vec<T>,
    trees: Vec<Tree<T>>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::Variant;

    fn schema(d: usize) -> FeatureSchema {
        FeatureSchema::new(Variant::RandomEdge, vec![], 0, d)
    }

    fn single_tree() -> ForestConfig {
        ForestConfig {
            n_trees: 1,
            min_samples_leaf: 1,
            features_per_split: FeaturesPerSplit::All,
            bootstrap: false,
            ..Default::default()
        }
    }

    #[test]
    fn step_function_split() {
        let x: Vec<Vec<f64>> = (0..4).map(|i| vec![i as f64]).collect();
        let y = vec![0.0, 0.0, 1.0, 1.0];
        let config = ForestConfig {
            max_depth: Some(1),
            ..single_tree()
        };
        let model = RandomForest::fit(&x, &y, schema(1), &config).unwrap();
        match model.trees[0].root() {
            TreeNode::Split { feature, threshold, .. } => {
                assert_eq!(*feature, 0);
                assert!(*threshold > 1.0 && *threshold <= 2.0);
            }
            other => panic!("expected split, got {other:?}"),
        }
        assert_eq!(model.predict(&[0.0]).unwrap(), 0.0);
        assert_eq!(model.predict(&[3.0]).unwrap(), 1.0);
    }

    #[test]
    fn constant_targets() {
        let x: Vec<Vec<f64>> = (0..30).map(|i| vec![i as f64, (i * 7 % 5) as f64]).collect();
        let y = vec![0.7; 30];
        let model = RandomForest::fit(&x, &y, schema(2), &ForestConfig { n_trees: 5, ..Default::default() }).unwrap();
        assert!(model.trees.iter().all(|t| t.nodes.len() == 1));
        assert_eq!(model.predict(&[100.0, -4.0]).unwrap(), 0.7);
        assert_eq!(model.mdi, vec![0.5, 0.5]);
    }

    #[test]
    fn clamps_corrupted_leaf() {
        let x = vec![vec![0.0], vec![1.0]];
        let mut model = RandomForest::fit(&x, &[0.2, 0.4], schema(1), &single_tree()).unwrap();
        model.trees[0] = Tree {
            nodes: vec![TreeNode::Leaf {
                value: 1.3,
                n_samples: 2,
                impurity: 0.0,
            }],
        };
        assert_eq!(model.predict(&[0.5]).unwrap(), 1.0);
        assert!(matches!(model.predict(&[0.5, 1.0]), Err(ForestError::DimensionMismatch { .. })));
    }

    #[test]
    fn min_leaf_and_depth_respected() {
        let x: Vec<Vec<f64>> = (0..200).map(|i| vec![((i * 37) % 101) as f64, (i % 13) as f64]).collect();
        let y: Vec<f64> = x.iter().map(|r| (r[0] / 101.0 + r[1] / 26.0) / 1.5).collect();
        let config = ForestConfig {
            n_trees: 10,
            min_samples_leaf: 5,
            max_depth: Some(4),
            rng_seed: 9,
            ..Default::default()
        };
        let model = RandomForest::fit(&x, &y, schema(2), &config).unwrap();
        for tree in &model.trees {
            assert!(tree.depth() <= 4);
            for node in &tree.nodes {
                if let TreeNode::Leaf { n_samples, .. } = node {
                    assert!(*n_samples >= 5);
                }
            }
        }
    }

    #[test]
    fn features_per_split_rules() {
        assert_eq!(FeaturesPerSplit::Third.resolve(10), 4);
        assert_eq!(FeaturesPerSplit::Third.resolve(1), 1);
        assert_eq!(FeaturesPerSplit::Sqrt.resolve(10), 3);
        assert_eq!(FeaturesPerSplit::Count(50).resolve(10), 10);
        assert_eq!(FeaturesPerSplit::All.resolve(7), 7);
        let parsed: ForestConfig = serde_json::from_str(r#"{"features_per_split": 3}"#).unwrap();
        assert_eq!(parsed.features_per_split, FeaturesPerSplit::Count(3));
        let parsed: ForestConfig = serde_json::from_str(r#"{"features_per_split": "sqrt"}"#).unwrap();
        assert_eq!(parsed.features_per_split, FeaturesPerSplit::Sqrt);
        assert!(serde_json::from_str::<ForestConfig>(r#"{"features_per_split": 0}"#).is_err());
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(
            RandomForest::<f64>::fit(&[], &[], schema(1), &single_tree()),
            Err(ForestError::Empty)
        ));
        let ragged = vec![vec![0.0], vec![1.0, 2.0]];
        assert!(matches!(
            RandomForest::fit(&ragged, &[0.0, 1.0], schema(1), &single_tree()),
            Err(ForestError::DimensionMismatch { row: 1, .. })
        ));
        let nan = vec![vec![f64::NAN], vec![1.0]];
        assert!(matches!(
            RandomForest::fit(&nan, &[0.0, 1.0], schema(1), &single_tree()),
            Err(ForestError::NonFinite(0))
        ));
    }

    #[test]
    fn json_round_trip_and_errors() {
        let x: Vec<Vec<f64>> = (0..50).map(|i| vec![(i as f64).sin(), (i as f64 * 0.3).cos()]).collect();
        let y: Vec<f64> = x.iter().map(|r| (r[0] + 1.0) / 2.0).collect();
        let model = RandomForest::fit(&x, &y, schema(2), &ForestConfig { n_trees: 4, ..Default::default() }).unwrap();
        let text = model.to_json();
        let back = RandomForest::<f64>::from_json(&text, "mem").unwrap();
        assert_eq!(back, model);
        assert!(matches!(
            RandomForest::<f64>::from_json(&text[..text.len() / 2], "mem"),
            Err(ForestError::Corrupt { .. })
        ));
        assert!(matches!(
            RandomForest::<f32>::from_json(&text, "mem"),
            Err(ForestError::Version(_))
        ));
        let bumped = text.replacen("\"version\":1", "\"version\":2", 1);
        assert!(matches!(RandomForest::<f64>::from_json(&bumped, "mem"), Err(ForestError::Version(_))));
        assert!(matches!(
            model.check_schema(&schema(3)),
            Err(ForestError::SchemaMismatch { .. })
        ));
    }

    #[test]
    fn single_precision_fit() {
        let x: Vec<Vec<f32>> = (0..40).map(|i| vec![i as f32]).collect();
        let y: Vec<f32> = (0..40).map(|i| if i < 20 { 0.1 } else { 0.9 }).collect();
        let model = RandomForest::fit(&x, &y, schema(1), &single_tree()).unwrap();
        assert!((model.predict(&[3.0]).unwrap() - 0.1).abs() < 1e-6);
        assert!((model.predict(&[30.0]).unwrap() - 0.9).abs() < 1e-6);
    }
}
