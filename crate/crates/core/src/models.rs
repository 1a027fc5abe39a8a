//! The estimator roster: two heuristics and the six forest variants behind
//! one `predict_edge` interface.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{
    build_rows, usable_policy, FeatureConfig, FeatureError, FeatureSchema, Featurizer, Variant,
};
use crate::forest::{ForestConfig, ForestError, RandomForest};
use crate::graph::{ChannelGraph, ChannelTarget, DirectedEdge, GraphError};
use crate::seed;
use crate::spectral::{self, PositionalTable, SpectralConfig, SpectralError};

/// Fewest labeled channels `train_variant` accepts.
pub const MIN_TRAINING_CHANNELS: usize = 10;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("need at least {needed} labeled channels, got {got}")]
    InsufficientData { needed: usize, got: usize },
    #[error("no usable training rows")]
    NoRows,
    #[error("unknown estimator {0:?}")]
    UnknownKind(String),
    #[error("bundle {path}: {message}")]
    Bundle { path: String, message: String },
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Forest(#[from] ForestError),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
}

pub type Result<T, E = ModelError> = std::result::Result<T, E>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EstimatorKind {
    EqualSplit,
    LocalMaxHtlc,
    Forest(Variant),
}

impl EstimatorKind {
    /// The heuristics first, then the forest variants.
    pub const ALL: [EstimatorKind; 8] = [
        EstimatorKind::EqualSplit,
        EstimatorKind::LocalMaxHtlc,
        EstimatorKind::Forest(Variant::RandomEdge),
        EstimatorKind::Forest(Variant::NodeWise),
        EstimatorKind::Forest(Variant::EdgeWise),
        EstimatorKind::Forest(Variant::Concatenated),
        EstimatorKind::Forest(Variant::Shallow),
        EstimatorKind::Forest(Variant::Joint),
    ];

    pub fn name(self) -> &'static str {
        match self {
            EstimatorKind::EqualSplit => "equal-split",
            EstimatorKind::LocalMaxHtlc => "local-max-htlc",
            EstimatorKind::Forest(v) => v.name(),
        }
    }

    pub fn variant(self) -> Option<Variant> {
        match self {
            EstimatorKind::Forest(v) => Some(v),
            _ => None,
        }
    }
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EstimatorKind {
    type Err = ModelError;
    fn from_str(s: &str) -> Result<Self> {
        EstimatorKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| ModelError::UnknownKind(s.to_string()))
    }
}

impl Serialize for EstimatorKind {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for EstimatorKind {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Everything a trained forest variant needs for standalone inference.
#[derive(Clone, Debug, PartialEq)]
pub struct ForestEstimator {
    pub model: RandomForest<f64>,
    pub encodings: Option<PositionalTable<f64>>,
    pub features: FeatureConfig,
    /// Seed of the random-edge features.
    pub feature_seed: u64,
}

impl ForestEstimator {
    pub fn variant(&self) -> Variant {
        self.model.schema.variant
    }

    fn featurizer<'a>(&'a self, graph: &'a ChannelGraph) -> Result<Featurizer<'a>> {
        Ok(Featurizer::new(
            graph,
            &self.model.schema,
            &self.features,
            self.encodings.as_ref(),
            self.feature_seed,
        )?)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Estimator {
    EqualSplit,
    LocalMaxHtlc,
    Forest(Box<ForestEstimator>),
}

impl Estimator {
    pub fn kind(&self) -> EstimatorKind {
        match self {
            Estimator::EqualSplit => EstimatorKind::EqualSplit,
            Estimator::LocalMaxHtlc => EstimatorKind::LocalMaxHtlc,
            Estimator::Forest(f) => EstimatorKind::Forest(f.variant()),
        }
    }

    pub fn forest(&self) -> Option<&ForestEstimator> {
        match self {
            Estimator::Forest(f) => Some(f),
            _ => None,
        }
    }

    /// `p̂` for `edge`, or `None` when the estimator is undefined there
    /// (no usable policy). Unknown edges are an error.
    pub fn predict_edge(&self, graph: &ChannelGraph, edge: &DirectedEdge) -> Result<Option<f64>> {
        Ok(self.predict_edges(graph, std::slice::from_ref(edge))?.remove(0))
    }

    /// Batched [`predict_edge`](Self::predict_edge); node features are
    /// computed once per node.
    pub fn predict_edges(&self, graph: &ChannelGraph, edges: &[DirectedEdge]) -> Result<Vec<Option<f64>>> {
        for edge in edges {
            if graph.channel_of(edge).is_none() {
                return Err(GraphError::UnknownChannel(edge.channel_id.clone()).into());
            }
        }
        match self {
            Estimator::EqualSplit => Ok(vec![Some(0.5); edges.len()]),
            Estimator::LocalMaxHtlc => Ok(edges.iter().map(|e| local_max_htlc(graph, e)).collect()),
            Estimator::Forest(f) => {
                let mut featurizer = f.featurizer(graph)?;
                edges
                    .iter()
                    .map(|edge| {
                        if usable_policy(graph, edge, &f.features).is_none() {
                            return Ok(None);
                        }
                        let row = featurizer.row(edge)?;
                        Ok(Some(f.model.predict(&row)?))
                    })
                    .collect()
            }
        }
    }
}

/// `min(1, max_htlc_msat / (capacity · 1000))`; undefined without a policy
/// or without an advertised maximum.
pub fn local_max_htlc(graph: &ChannelGraph, edge: &DirectedEdge) -> Option<f64> {
    let policy = graph.policy(edge)?;
    let max = policy.max_htlc_msat?;
    let capacity_msat = graph.capacity_of(edge)? as f64 * 1000.0;
    Some((max as f64 / capacity_msat).min(1.0))
}

/// Settings shared by every forest variant.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub forest: ForestConfig,
    pub features: FeatureConfig,
    pub spectral: SpectralConfig,
}

impl TrainConfig {
    pub fn k_pe(&self) -> usize {
        self.spectral.k
    }
}

/// Positional encodings of `graph` under the seed's `spectral` stream.
pub fn encodings_for(graph: &ChannelGraph, config: &SpectralConfig, rng_seed: u64) -> Result<PositionalTable<f64>> {
    Ok(spectral::laplacian_encodings(graph, config, seed::derive(rng_seed, "spectral"))?)
}

/// Fits `variant` on the labeled channels `targets` of `graph`.
///
/// Encodings are computed from the whole graph topology unless `encodings`
/// is supplied; they carry no label information.
pub fn train_variant(
    variant: Variant,
    graph: &ChannelGraph,
    targets: &[ChannelTarget],
    config: &TrainConfig,
    encodings: Option<&PositionalTable<f64>>,
    rng_seed: u64,
) -> Result<Estimator> {
    if targets.len() < MIN_TRAINING_CHANNELS {
        return Err(ModelError::InsufficientData {
            needed: MIN_TRAINING_CHANNELS,
            got: targets.len(),
        });
    }
    let encodings = match (variant.needs_encodings(), encodings) {
        (false, _) => None,
        (true, Some(t)) => Some(t.clone()),
        (true, None) => Some(encodings_for(graph, &config.spectral, rng_seed)?),
    };
    let k_pe = if variant.needs_encodings() { config.k_pe() } else { 0 };
    let schema = FeatureSchema::for_graph(variant, graph, k_pe, &config.features);
    let feature_seed = seed::derive(rng_seed, "random-features");
    let rows = build_rows(graph, targets, &schema, &config.features, encodings.as_ref(), feature_seed)?;
    if rows.is_empty() {
        return Err(ModelError::NoRows);
    }
    let forest_config = ForestConfig {
        rng_seed: seed::derive(rng_seed, &format!("forest/{variant}")),
        ..config.forest.clone()
    };
    let model = RandomForest::fit_rows(&rows, schema, &forest_config)?;
    log::info!(
        "trained {variant} on {} rows ({} features, {} trees)",
        rows.len(),
        model.schema.len(),
        model.trees.len()
    );
    Ok(Estimator::Forest(Box::new(ForestEstimator {
        model,
        encodings,
        features: config.features.clone(),
        feature_seed,
    })))
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    kind: EstimatorKind,
    features: Option<FeatureConfig>,
    feature_seed: Option<u64>,
    model: Option<String>,
    schema: Option<String>,
    encodings: Option<String>,
}

const MANIFEST: &str = "estimator.json";

/// Writes an estimator bundle into `dir`: a manifest plus, for forest
/// variants, the model file, its schema and the encodings cache.
pub fn save_bundle(estimator: &Estimator, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    let err = |message: String| ModelError::Bundle {
        path: dir.display().to_string(),
        message,
    };
    std::fs::create_dir_all(dir).map_err(|e| err(e.to_string()))?;
    let mut manifest = Manifest {
        kind: estimator.kind(),
        features: None,
        feature_seed: None,
        model: None,
        schema: None,
        encodings: None,
    };
    if let Estimator::Forest(f) = estimator {
        f.model.save(dir.join("model.json"))?;
        f.model.schema.save(dir.join("schema.json"))?;
        manifest.model = Some("model.json".into());
        manifest.schema = Some("schema.json".into());
        manifest.features = Some(f.features.clone());
        manifest.feature_seed = Some(f.feature_seed);
        if let Some(table) = &f.encodings {
            spectral::save_encodings(table, dir.join("encodings.csv"))?;
            manifest.encodings = Some("encodings.csv".into());
        }
    }
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    std::fs::write(dir.join(MANIFEST), text + "\n").map_err(|e| err(e.to_string()))
}

pub fn load_bundle(dir: impl AsRef<Path>) -> Result<Estimator> {
    let dir = dir.as_ref();
    let err = |message: String| ModelError::Bundle {
        path: dir.display().to_string(),
        message,
    };
    let text = std::fs::read_to_string(dir.join(MANIFEST)).map_err(|e| err(e.to_string()))?;
    let manifest: Manifest = serde_json::from_str(&text).map_err(|e| err(e.to_string()))?;
    let variant = match manifest.kind {
        EstimatorKind::EqualSplit => return Ok(Estimator::EqualSplit),
        EstimatorKind::LocalMaxHtlc => return Ok(Estimator::LocalMaxHtlc),
        EstimatorKind::Forest(v) => v,
    };
    let missing = |what: &str| err(format!("manifest lacks {what}"));
    let model = RandomForest::<f64>::load(dir.join(manifest.model.ok_or_else(|| missing("model"))?))?;
    let schema = FeatureSchema::load(dir.join(manifest.schema.ok_or_else(|| missing("schema"))?))?;
    model.check_schema(&schema)?;
    if model.schema.variant != variant {
        return Err(err(format!("manifest says {variant}, model is {}", model.schema.variant)));
    }
    let encodings = match manifest.encodings {
        Some(file) => Some(spectral::load_encodings(dir.join(file))?),
        None if variant.needs_encodings() => return Err(missing("encodings")),
        None => None,
    };
    Ok(Estimator::Forest(Box::new(ForestEstimator {
        model,
        encodings,
        features: manifest.features.ok_or_else(|| missing("feature config"))?,
        feature_seed: manifest.feature_seed.ok_or_else(|| missing("feature seed"))?,
    })))
}
