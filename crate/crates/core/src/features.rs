//! Design-matrix construction: node features `x_u`, edge features `e_(u,v)`,
//! positional encodings `z_u` and their per-variant concatenation.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{ChannelGraph, ChannelPolicy, ChannelTarget, DirectedEdge, GraphError, NodeId};
use crate::seed;
use crate::spectral::PositionalTable;

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("edge {0} has no usable policy")]
    MissingPolicy(DirectedEdge),
    #[error("variant {0} needs positional encodings")]
    MissingEncodings(Variant),
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("unknown variant {0:?}")]
    UnknownVariant(String),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error(transparent)]
    Graph(#[from] GraphError),
}

pub type Result<T, E = FeatureError> = std::result::Result<T, E>;

/// The six learned variants, named after what they feed the forest.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    /// `r_(u,v)`, isotropic Gaussian noise per directed edge.
    RandomEdge,
    /// `x_u`
    NodeWise,
    /// `e_(u,v)`
    EdgeWise,
    /// `x_u ‖ x_v ‖ e_(u,v)`
    Concatenated,
    /// `z_u ‖ z_v`
    Shallow,
    /// `x_u ‖ z_u ‖ x_v ‖ z_v ‖ e_(u,v)`
    Joint,
}

impl Variant {
    pub const ALL: [Variant; 6] = [
        Variant::RandomEdge,
        Variant::NodeWise,
        Variant::EdgeWise,
        Variant::Concatenated,
        Variant::Shallow,
        Variant::Joint,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::RandomEdge => "random-edge",
            Variant::NodeWise => "node-wise",
            Variant::EdgeWise => "edge-wise",
            Variant::Concatenated => "concatenated",
            Variant::Shallow => "shallow",
            Variant::Joint => "joint",
        }
    }

    pub fn needs_encodings(self) -> bool {
        matches!(self, Variant::Shallow | Variant::Joint)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = FeatureError;
    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| FeatureError::UnknownVariant(s.to_string()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeatureSource {
    NodeLocal,
    NodeRemote,
    Edge,
    Positional,
    Random,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub name: String,
    pub source: FeatureSource,
}

/// Which way the per-node fee ratio is taken.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum FeeRatioDirection {
    /// mean incoming fee rate / mean outgoing fee rate
    #[default]
    Drain,
    /// mean outgoing fee rate / mean incoming fee rate
    OutgoingOverIncoming,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureConfig {
    /// Value used for `x / 0` fee ratios; also an upper bound on the ratio.
    pub ratio_cap: f64,
    pub fee_ratio: FeeRatioDirection,
    /// Treat disabled policies as usable.
    pub include_disabled: bool,
    /// Dimension of the random-edge features.
    pub random_dim: usize,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            ratio_cap: 100.0,
            fee_ratio: FeeRatioDirection::Drain,
            include_disabled: false,
            random_dim: 8,
        }
    }
}

pub const EDGE_FEATURE_NAMES: [&str; 5] = [
    "time_lock_delta",
    "log_min_htlc_msat",
    "max_htlc_fraction",
    "log_fee_rate_ppm",
    "log_fee_base_msat",
];

/// Ordered feature layout, frozen when a model is fit.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub variant: Variant,
    pub features: Vec<FeatureSpec>,
    /// Sorted feature bits taken from the training graph.
    pub feature_bits: Vec<u16>,
    pub k_pe: usize,
    pub random_dim: usize,
}

fn node_feature_names(bits: &[u16]) -> Vec<String> {
    bits.iter()
        .map(|b| format!("feat_{b}.is_known"))
        .chain(["capacity_centrality".to_string(), "fee_ratio".to_string()])
        .collect()
}

impl FeatureSchema {
    pub fn new(variant: Variant, feature_bits: Vec<u16>, k_pe: usize, random_dim: usize) -> Self {
        let node = |prefix: &str, source: FeatureSource| -> Vec<FeatureSpec> {
            node_feature_names(&feature_bits)
                .into_iter()
                .map(|n| FeatureSpec {
                    name: format!("{prefix}_{n}"),
                    source,
                })
                .collect()
        };
        let pe = |prefix: &str| -> Vec<FeatureSpec> {
            (0..k_pe)
                .map(|i| FeatureSpec {
                    name: format!("{prefix}_pe_{i}"),
                    source: FeatureSource::Positional,
                })
                .collect()
        };
        let edge = || -> Vec<FeatureSpec> {
            EDGE_FEATURE_NAMES
                .iter()
                .map(|n| FeatureSpec {
                    name: n.to_string(),
                    source: FeatureSource::Edge,
                })
                .collect()
        };
        let local = || node("local", FeatureSource::NodeLocal);
        let remote = || node("remote", FeatureSource::NodeRemote);
        let features = match variant {
            Variant::RandomEdge => (0..random_dim)
                .map(|i| FeatureSpec {
                    name: format!("random_{i}"),
                    source: FeatureSource::Random,
                })
                .collect(),
            Variant::NodeWise => local(),
            Variant::EdgeWise => edge(),
            Variant::Concatenated => [local(), remote(), edge()].concat(),
            Variant::Shallow => [pe("local"), pe("remote")].concat(),
            Variant::Joint => [local(), pe("local"), remote(), pe("remote"), edge()].concat(),
        };
        FeatureSchema {
            variant,
            features,
            feature_bits,
            k_pe,
            random_dim,
        }
    }

    /// Schema for `variant` fit on `graph`.
    pub fn for_graph(variant: Variant, graph: &ChannelGraph, k_pe: usize, config: &FeatureConfig) -> Self {
        FeatureSchema::new(variant, feature_vocabulary(graph), k_pe, config.random_dim)
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn names(&self) -> Vec<&str> {
        self.features.iter().map(|f| f.name.as_str()).collect()
    }

    /// Content hash used to pair models with the rows they accept.
    pub fn fingerprint(&self) -> String {
        seed::sha256_hex(serde_json::to_string(self).expect("schema serializes").as_bytes())
    }

    pub fn ensure_matches(&self, other: &FeatureSchema) -> Result<()> {
        if self == other {
            return Ok(());
        }
        Err(FeatureError::SchemaMismatch(format!(
            "expected {} ({} features), found {} ({} features)",
            &self.fingerprint()[..12],
            self.len(),
            &other.fingerprint()[..12],
            other.len()
        )))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self).expect("schema serializes");
        std::fs::write(path, text + "\n").map_err(|e| FeatureError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let io = |message: String| FeatureError::Io {
            path: path.display().to_string(),
            message,
        };
        let file = File::open(path).map_err(|e| io(e.to_string()))?;
        serde_json::from_reader(BufReader::new(file)).map_err(|e| io(e.to_string()))
    }
}

/// Sorted set of feature bits announced by any node of `graph`.
pub fn feature_vocabulary(graph: &ChannelGraph) -> Vec<u16> {
    graph
        .nodes()
        .flat_map(|n| n.feature_bits.iter().copied())
        .collect::<BTreeSet<u16>>()
        .into_iter()
        .collect()
}

/// Policy of `edge` when present and (unless configured otherwise) enabled.
pub fn usable_policy<'g>(graph: &'g ChannelGraph, edge: &DirectedEdge, config: &FeatureConfig) -> Option<&'g ChannelPolicy> {
    graph
        .policy(edge)
        .filter(|p| config.include_disabled || !p.disabled)
}

/// A channel contributes rows only when both directions have usable policies.
pub fn featurizable(graph: &ChannelGraph, channel_id: &str, config: &FeatureConfig) -> bool {
    graph.channel(channel_id).is_some_and(|c| {
        let forward = c.forward_edge();
        usable_policy(graph, &forward, config).is_some() && usable_policy(graph, &forward.reversed(), config).is_some()
    })
}

fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

/// Ratio of a node's mean incoming to mean outgoing fee rate (or the inverse,
/// per `config.fee_ratio`). `0/0` and nodes without policies give `1`;
/// `x/0` gives `ratio_cap`; the result never exceeds `ratio_cap`.
pub fn fee_ratio(graph: &ChannelGraph, node: &NodeId, config: &FeatureConfig) -> Result<f64> {
    if graph.node(node).is_none() {
        return Err(FeatureError::UnknownNode(node.clone()));
    }
    let mut outgoing = Vec::new();
    let mut incoming = Vec::new();
    for edge in graph.adjacency(node) {
        if let Some(p) = usable_policy(graph, edge, config) {
            outgoing.push(p.fee_rate_ppm as f64);
        }
        if let Some(p) = usable_policy(graph, &edge.reversed(), config) {
            incoming.push(p.fee_rate_ppm as f64);
        }
    }
    let incoming = mean(&incoming).unwrap_or(0.0);
    let outgoing = mean(&outgoing).unwrap_or(0.0);
    let (num, den) = match config.fee_ratio {
        FeeRatioDirection::Drain => (incoming, outgoing),
        FeeRatioDirection::OutgoingOverIncoming => (outgoing, incoming),
    };
    Ok(match (num == 0.0, den == 0.0) {
        (true, true) => 1.0,
        (false, true) => config.ratio_cap,
        _ => (num / den).min(config.ratio_cap),
    })
}

/// `[bit indicators over vocabulary] ++ [capacity_centrality, fee_ratio]`.
/// Bits outside the vocabulary are ignored.
pub fn node_features(graph: &ChannelGraph, node: &NodeId, feature_bits: &[u16], config: &FeatureConfig) -> Result<Vec<f64>> {
    let info = graph.node(node).ok_or_else(|| FeatureError::UnknownNode(node.clone()))?;
    let mut out: Vec<f64> = feature_bits
        .iter()
        .map(|b| if info.feature_bits.contains(b) { 1.0 } else { 0.0 })
        .collect();
    out.push(graph.capacity_centrality(node)?);
    out.push(fee_ratio(graph, node, config)?);
    Ok(out)
}

/// `[time_lock_delta, log10(1+min_htlc), max_htlc/capacity (≤ 1),
/// log10(1+fee_rate_ppm), log10(1+fee_base_msat)]`, or `None` without a
/// usable policy. A policy without `max_htlc_msat` is uncapped (fraction 1).
pub fn edge_features(graph: &ChannelGraph, edge: &DirectedEdge, config: &FeatureConfig) -> Option<[f64; 5]> {
    let policy = usable_policy(graph, edge, config)?;
    let capacity_msat = graph.capacity_of(edge)? as f64 * 1000.0;
    let max_htlc_fraction = policy
        .max_htlc_msat
        .map_or(1.0, |m| (m as f64 / capacity_msat).min(1.0));
    Some([
        policy.time_lock_delta as f64,
        (1.0 + policy.min_htlc_msat as f64).log10(),
        max_htlc_fraction,
        (1.0 + policy.fee_rate_ppm as f64).log10(),
        (1.0 + policy.fee_base_msat as f64).log10(),
    ])
}

/// Isotropic standard-normal features, seeded per directed edge.
pub fn random_features(rng_seed: u64, edge: &DirectedEdge, dim: usize) -> Vec<f64> {
    let component = format!("random-edge/{}/{}", edge.channel_id, edge.src);
    let mut rng = ChaCha8Rng::seed_from_u64(seed::derive(rng_seed, &component));
    (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect()
}

/// One row of the design matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureRow {
    pub edge: DirectedEdge,
    pub values: Vec<f64>,
    /// Absent at inference.
    pub target_p: Option<f64>,
}

/// Assembles rows for one schema, caching per-node features.
pub struct Featurizer<'a> {
    graph: &'a ChannelGraph,
    schema: &'a FeatureSchema,
    config: &'a FeatureConfig,
    encodings: Option<&'a PositionalTable<f64>>,
    rng_seed: u64,
    node_cache: HashMap<NodeId, Vec<f64>>,
}

impl<'a> Featurizer<'a> {
    pub fn new(
        graph: &'a ChannelGraph,
        schema: &'a FeatureSchema,
        config: &'a FeatureConfig,
        encodings: Option<&'a PositionalTable<f64>>,
        rng_seed: u64,
    ) -> Result<Self> {
        if schema.variant.needs_encodings() {
            match encodings {
                None => return Err(FeatureError::MissingEncodings(schema.variant)),
                Some(t) if t.k != schema.k_pe => {
                    return Err(FeatureError::SchemaMismatch(format!(
                        "encodings have k = {}, schema expects {}",
                        t.k, schema.k_pe
                    )))
                }
                Some(_) => {}
            }
        }
        Ok(Featurizer {
            graph,
            schema,
            config,
            encodings,
            rng_seed,
            node_cache: HashMap::new(),
        })
    }

    fn node(&mut self, id: &NodeId) -> Result<Vec<f64>> {
        if let Some(v) = self.node_cache.get(id) {
            return Ok(v.clone());
        }
        let v = node_features(self.graph, id, &self.schema.feature_bits, self.config)?;
        self.node_cache.insert(id.clone(), v.clone());
        Ok(v)
    }

    fn positional(&self, id: &NodeId) -> Vec<f64> {
        self.encodings.expect("checked in constructor").get_or_zero(id)
    }

    fn edge(&self, edge: &DirectedEdge) -> Result<Vec<f64>> {
        edge_features(self.graph, edge, self.config)
            .map(|e| e.to_vec())
            .ok_or_else(|| FeatureError::MissingPolicy(edge.clone()))
    }

    /// Feature vector of `edge` under the schema's variant.
    pub fn row(&mut self, edge: &DirectedEdge) -> Result<Vec<f64>> {
        if self.graph.channel_of(edge).is_none() {
            return Err(GraphError::UnknownChannel(edge.channel_id.clone()).into());
        }
        let (u, v) = (&edge.src, &edge.dst);
        let values = match self.schema.variant {
            Variant::RandomEdge => random_features(self.rng_seed, edge, self.schema.random_dim),
            Variant::NodeWise => self.node(u)?,
            Variant::EdgeWise => self.edge(edge)?,
            Variant::Concatenated => [self.node(u)?, self.node(v)?, self.edge(edge)?].concat(),
            Variant::Shallow => [self.positional(u), self.positional(v)].concat(),
            Variant::Joint => [
                self.node(u)?,
                self.positional(u),
                self.node(v)?,
                self.positional(v),
                self.edge(edge)?,
            ]
            .concat(),
        };
        debug_assert_eq!(values.len(), self.schema.len());
        Ok(values)
    }
}

/// Training rows for the labeled channels in `targets`: both directions of
/// every featurizable channel, with targets `p` and `1 - p`.
pub fn build_rows(
    graph: &ChannelGraph,
    targets: &[ChannelTarget],
    schema: &FeatureSchema,
    config: &FeatureConfig,
    encodings: Option<&PositionalTable<f64>>,
    rng_seed: u64,
) -> Result<Vec<FeatureRow>> {
    let mut featurizer = Featurizer::new(graph, schema, config, encodings, rng_seed)?;
    let mut rows = Vec::with_capacity(2 * targets.len());
    for target in targets {
        let channel = graph
            .channel(&target.channel_id)
            .ok_or_else(|| GraphError::UnknownChannel(target.channel_id.clone()))?;
        if !featurizable(graph, &channel.channel_id, config) {
            log::debug!("channel {} lacks usable policies; skipped", channel.channel_id);
            continue;
        }
        let forward = channel.forward_edge();
        let backward = forward.reversed();
        rows.push(FeatureRow {
            values: featurizer.row(&forward)?,
            edge: forward,
            target_p: Some(target.p_forward),
        });
        rows.push(FeatureRow {
            values: featurizer.row(&backward)?,
            edge: backward,
            target_p: Some(1.0 - target.p_forward),
        });
    }
    Ok(rows)
}

/// Writes rows as CSV: `channel_id,src_pub,dst_pub,<schema names>,target_p`.
pub fn write_matrix_csv(rows: &[FeatureRow], schema: &FeatureSchema, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let io = |message: String| FeatureError::Io {
        path: path.display().to_string(),
        message,
    };
    let file = File::create(path).map_err(|e| io(e.to_string()))?;
    let mut out = BufWriter::new(file);
    let mut write = || -> std::io::Result<()> {
        let mut header = vec!["channel_id", "src_pub", "dst_pub"];
        header.extend(schema.names());
        header.push("target_p");
        writeln!(out, "{}", header.join(","))?;
        for row in rows {
            let mut cells = vec![
                row.edge.channel_id.clone(),
                row.edge.src.to_string(),
                row.edge.dst.to_string(),
            ];
            cells.extend(row.values.iter().map(|v| v.to_string()));
            cells.push(row.target_p.map(|t| t.to_string()).unwrap_or_default());
            writeln!(out, "{}", cells.join(","))?;
        }
        out.flush()
    };
    write().map_err(|e| io(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::fixtures::{channel, node, policy, triangle};
    use crate::graph::{ChannelGraph, NodeInfo};

    fn hub_graph() -> ChannelGraph {
        // node 0 with two neighbours; incoming fees 100 and 300, outgoing 100.
        let mut c1 = channel("1", 0, 1, 1_000_000);
        c1.policy_b_to_a = Some(policy(1_000, 100));
        let mut c2 = channel("2", 0, 2, 1_000_000);
        c2.policy_b_to_a = Some(policy(1_000, 300));
        let mut info = NodeInfo::new(node(0));
        info.feature_bits.insert(19);
        ChannelGraph::new(vec![info], vec![c1, c2]).unwrap()
    }

    #[test]
    fn wumbo_bit_indicator() {
        let g = hub_graph();
        let x = node_features(&g, &node(0), &[19], &FeatureConfig::default()).unwrap();
        assert_eq!(x[0], 1.0);
        let y = node_features(&g, &node(1), &[19], &FeatureConfig::default()).unwrap();
        assert_eq!(y[0], 0.0);
    }

    #[test]
    fn fee_ratio_cases() {
        let g = hub_graph();
        let cfg = FeatureConfig::default();
        assert_eq!(fee_ratio(&g, &node(0), &cfg).unwrap(), 2.0);
        let inverse = FeatureConfig {
            fee_ratio: FeeRatioDirection::OutgoingOverIncoming,
            ..cfg.clone()
        };
        assert_eq!(fee_ratio(&g, &node(0), &inverse).unwrap(), 0.5);
        assert_eq!(fee_ratio(&triangle(), &node(1), &cfg).unwrap(), 1.0);

        let mut zero = channel("1", 0, 1, 1_000);
        zero.policy_a_to_b = Some(policy(1_000, 0));
        zero.policy_b_to_a = Some(policy(1_000, 0));
        let g = ChannelGraph::new(vec![], vec![zero.clone()]).unwrap();
        assert_eq!(fee_ratio(&g, &node(0), &cfg).unwrap(), 1.0);
        zero.policy_b_to_a = Some(policy(1_000, 50));
        let g = ChannelGraph::new(vec![], vec![zero]).unwrap();
        assert_eq!(fee_ratio(&g, &node(0), &cfg).unwrap(), 100.0);
        assert!(matches!(fee_ratio(&g, &node(7), &cfg), Err(FeatureError::UnknownNode(_))));
    }

    #[test]
    fn edge_feature_cases() {
        let cfg = FeatureConfig::default();
        let mut c = channel("1", 0, 1, 1_000_000);
        c.policy_a_to_b = Some(ChannelPolicy {
            max_htlc_msat: Some(1_000_000_000),
            fee_rate_ppm: 999,
            ..ChannelPolicy::default()
        });
        c.policy_b_to_a = Some(ChannelPolicy {
            max_htlc_msat: Some(0),
            ..ChannelPolicy::default()
        });
        let g = ChannelGraph::new(vec![], vec![c]).unwrap();
        let fwd = g.edge("1", &node(0)).unwrap();
        let e = edge_features(&g, &fwd, &cfg).unwrap();
        assert_eq!(e[2], 1.0);
        assert!((e[3] - 3.0).abs() < 1e-15);
        assert_eq!(edge_features(&g, &fwd.reversed(), &cfg).unwrap(), [0.0; 5]);
    }

    #[test]
    fn disabled_and_missing_policies() {
        let mut c = channel("1", 0, 1, 1_000);
        c.policy_a_to_b.as_mut().unwrap().disabled = true;
        c.policy_b_to_a = None;
        let g = ChannelGraph::new(vec![], vec![c]).unwrap();
        let fwd = g.edge("1", &node(0)).unwrap();
        let cfg = FeatureConfig::default();
        assert!(edge_features(&g, &fwd, &cfg).is_none());
        let incl = FeatureConfig {
            include_disabled: true,
            ..cfg.clone()
        };
        assert!(edge_features(&g, &fwd, &incl).is_some());
        assert!(!featurizable(&g, "1", &incl));
        let targets = vec![ChannelTarget {
            channel_id: "1".into(),
            p_forward: 0.3,
        }];
        let schema = FeatureSchema::new(Variant::NodeWise, vec![], 0, 8);
        assert!(build_rows(&g, &targets, &schema, &cfg, None, 1).unwrap().is_empty());
    }

    #[test]
    fn every_variant_doubles_rows() {
        let g = triangle();
        let targets = vec![ChannelTarget {
            channel_id: "2".into(),
            p_forward: 0.3,
        }];
        let cfg = FeatureConfig::default();
        let table = crate::spectral::laplacian_encodings::<f64>(
            &g,
            &crate::spectral::SpectralConfig {
                k: 1,
                ..Default::default()
            },
            1,
        )
        .unwrap();
        for variant in Variant::ALL {
            let schema = FeatureSchema::new(variant, vec![9, 19], 1, 4);
            let rows = build_rows(&g, &targets, &schema, &cfg, Some(&table), 3).unwrap();
            assert_eq!(rows.len(), 2);
            assert_eq!(rows[0].edge.reversed(), rows[1].edge);
            assert_eq!(rows[0].target_p.unwrap() + rows[1].target_p.unwrap(), 1.0);
            assert!(rows.iter().all(|r| r.values.len() == schema.len()));
        }
    }

    #[test]
    fn variant_widths() {
        let (bits, k, r) = (vec![1, 5, 19], 4, 6);
        let nx = bits.len() + 2;
        let ne = EDGE_FEATURE_NAMES.len();
        let width = |v| FeatureSchema::new(v, bits.clone(), k, r).len();
        assert_eq!(width(Variant::RandomEdge), r);
        assert_eq!(width(Variant::NodeWise), nx);
        assert_eq!(width(Variant::EdgeWise), ne);
        assert_eq!(width(Variant::Concatenated), 2 * nx + ne);
        assert_eq!(width(Variant::Shallow), 2 * k);
        assert_eq!(width(Variant::Joint), 2 * nx + 2 * k + ne);
        let names = FeatureSchema::new(Variant::Joint, vec![19], 1, 0);
        assert_eq!(names.names()[0], "local_feat_19.is_known");
        let unique: BTreeSet<_> = names.names().into_iter().collect();
        assert_eq!(unique.len(), names.len());
    }

    #[test]
    fn encodings_required_for_positional_variants() {
        let g = triangle();
        let schema = FeatureSchema::new(Variant::Shallow, vec![], 2, 0);
        let err = build_rows(&g, &[], &schema, &FeatureConfig::default(), None, 0).unwrap_err();
        assert!(matches!(err, FeatureError::MissingEncodings(Variant::Shallow)));
    }

    #[test]
    fn random_rows_are_deterministic() {
        let g = triangle();
        let targets = g
            .channels()
            .map(|c| ChannelTarget {
                channel_id: c.channel_id.clone(),
                p_forward: 0.5,
            })
            .collect::<Vec<_>>();
        let schema = FeatureSchema::new(Variant::RandomEdge, vec![], 0, 8);
        let cfg = FeatureConfig::default();
        let a = build_rows(&g, &targets, &schema, &cfg, None, 11).unwrap();
        let b = build_rows(&g, &targets, &schema, &cfg, None, 11).unwrap();
        assert_eq!(a, b);
        assert_ne!(a[0].values, a[1].values);
    }

    #[test]
    fn schema_mismatch_detected() {
        let a = FeatureSchema::new(Variant::Joint, vec![19], 4, 8);
        let b = FeatureSchema::new(Variant::Joint, vec![9, 19], 4, 8);
        assert!(a.ensure_matches(&a.clone()).is_ok());
        assert!(matches!(a.ensure_matches(&b), Err(FeatureError::SchemaMismatch(_))));
        assert_ne!(a.fingerprint(), b.fingerprint());
        assert_eq!("joint".parse::<Variant>().unwrap(), Variant::Joint);
        assert!("bogus".parse::<Variant>().is_err());
    }
}
