//! Channel graph model and snapshot/label file I/O.
//!
//! Every physical channel is stored once, with its endpoints in canonical
//! order (`node_a < node_b`), and exposed as two [`DirectedEdge`]s. Policies
//! are resolved per direction: the policy announced by `node_a` governs
//! forwarding `node_a -> node_b`.
//!
//! Units: capacities and balances are satoshis, HTLC limits and base fees are
//! millisatoshis, proportional fees are parts-per-million.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Deserializer, Serialize};
use thiserror::Error;

/// Feature bits at or above this value are rejected.
pub const MAX_FEATURE_BIT: u16 = 1024;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: malformed file: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("invalid node id {0:?}: expected 66 hex characters")]
    InvalidNodeId(String),
    #[error("duplicate node {0}")]
    DuplicateNode(NodeId),
    #[error("feature bit {bit} on node {node} is out of range")]
    FeatureBitOutOfRange { node: NodeId, bit: u32 },
    #[error("duplicate channel {0}")]
    DuplicateChannel(String),
    #[error("channel {0} is a self-loop")]
    SelfLoop(String),
    #[error("channel {0} has zero capacity")]
    ZeroCapacity(String),
    #[error("channel {channel_id}: invalid policy: {reason}")]
    InvalidPolicy { channel_id: String, reason: String },
    #[error("graph has no channels")]
    EmptyNetwork,
    #[error("unknown node {0}")]
    UnknownNode(String),
    #[error("unknown channel {0}")]
    UnknownChannel(String),
    #[error("node {node} is not an endpoint of channel {channel_id}")]
    NotAnEndpoint { channel_id: String, node: String },
    #[error("channel {channel_id}: balance {y_sat} sat exceeds capacity {capacity_sat} sat")]
    BalanceExceedsCapacity {
        channel_id: String,
        y_sat: u64,
        capacity_sat: u64,
    },
    #[error("conflicting labels for channel {channel_id} (source {src})")]
    ConflictingLabel { channel_id: String, src: NodeId },
}

pub type Result<T, E = GraphError> = std::result::Result<T, E>;

/// A node's 33-byte public key as 66 lowercase hex characters.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct NodeId(String);

impl NodeId {
    pub fn parse(key: &str) -> Result<Self> {
        if key.len() != 66 || !key.bytes().all(|b| b.is_ascii_hexdigit()) {
            return Err(GraphError::InvalidNodeId(key.to_string()));
        }
        Ok(NodeId(key.to_ascii_lowercase()))
    }

    /// Deterministic synthetic key; keys sort in index order.
    pub fn from_index(index: u64) -> Self {
        NodeId(format!("02{index:064x}"))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// Abbreviated form for logs and tables.
    pub fn short(&self) -> &str {
        &self.0[..12]
    }
}

impl TryFrom<String> for NodeId {
    type Error = GraphError;
    fn try_from(value: String) -> Result<Self> {
        NodeId::parse(&value)
    }
}

impl From<NodeId> for String {
    fn from(id: NodeId) -> String {
        id.0
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NodeInfo {
    pub id: NodeId,
    /// Announced feature bits the snapshot marks as known.
    pub feature_bits: BTreeSet<u16>,
    pub alias: Option<String>,
}

impl NodeInfo {
    pub fn new(id: NodeId) -> Self {
        NodeInfo {
            id,
            feature_bits: BTreeSet::new(),
            alias: None,
        }
    }
}

/// Routing policy one endpoint announces for forwarding over a channel.
#[derive(Clone, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ChannelPolicy {
    pub time_lock_delta: u32,
    pub min_htlc_msat: u64,
    /// `None` when the announcement omits the field.
    pub max_htlc_msat: Option<u64>,
    pub fee_base_msat: u64,
    pub fee_rate_ppm: u64,
    pub disabled: bool,
}

impl ChannelPolicy {
    fn validate(&self, channel_id: &str) -> Result<()> {
        if let Some(max) = self.max_htlc_msat {
            if self.min_htlc_msat > 0 && max > 0 && self.min_htlc_msat > max {
                return Err(GraphError::InvalidPolicy {
                    channel_id: channel_id.to_string(),
                    reason: format!("min_htlc {} msat > max_htlc {max} msat", self.min_htlc_msat),
                });
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Channel {
    pub channel_id: String,
    pub node_a: NodeId,
    pub node_b: NodeId,
    pub capacity_sat: u64,
    pub policy_a_to_b: Option<ChannelPolicy>,
    pub policy_b_to_a: Option<ChannelPolicy>,
}

impl Channel {
    /// Policy governing forwarding out of `src`.
    pub fn policy_from(&self, src: &NodeId) -> Option<&ChannelPolicy> {
        if *src == self.node_a {
            self.policy_a_to_b.as_ref()
        } else if *src == self.node_b {
            self.policy_b_to_a.as_ref()
        } else {
            None
        }
    }

    pub fn has_endpoint(&self, node: &NodeId) -> bool {
        *node == self.node_a || *node == self.node_b
    }

    pub fn forward_edge(&self) -> DirectedEdge {
        DirectedEdge {
            src: self.node_a.clone(),
            dst: self.node_b.clone(),
            channel_id: self.channel_id.clone(),
        }
    }

    pub fn backward_edge(&self) -> DirectedEdge {
        self.forward_edge().reversed()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct DirectedEdge {
    pub src: NodeId,
    pub dst: NodeId,
    pub channel_id: String,
}

impl DirectedEdge {
    pub fn reversed(&self) -> DirectedEdge {
        DirectedEdge {
            src: self.dst.clone(),
            dst: self.src.clone(),
            channel_id: self.channel_id.clone(),
        }
    }
}

impl fmt::Display for DirectedEdge {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}->{}", self.channel_id, self.src.short(), self.dst.short())
    }
}

/// Observed local balance of one direction.
#[derive(Clone, Debug, PartialEq)]
pub struct BalanceLabel {
    pub edge: DirectedEdge,
    pub y_sat: u64,
    /// `y_sat / capacity_sat`.
    pub p: f64,
}

/// Balance proportion of a labeled channel, expressed for `node_a -> node_b`.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelTarget {
    pub channel_id: String,
    pub p_forward: f64,
}

/// The payment channel network `G = (V, E)`. Immutable once built.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelGraph {
    nodes: BTreeMap<NodeId, NodeInfo>,
    channels: BTreeMap<String, Channel>,
    adjacency: BTreeMap<NodeId, Vec<DirectedEdge>>,
    labels: BTreeMap<DirectedEdge, BalanceLabel>,
    total_capacity_sat: u64,
}

impl ChannelGraph {
    /// Builds a validated graph. Channel endpoints missing from `nodes` are
    /// added with no announced features.
    pub fn new(nodes: Vec<NodeInfo>, channels: Vec<Channel>) -> Result<Self> {
        let mut node_map = BTreeMap::new();
        for info in nodes {
            if let Some(bit) = info.feature_bits.iter().find(|b| **b >= MAX_FEATURE_BIT) {
                return Err(GraphError::FeatureBitOutOfRange {
                    node: info.id.clone(),
                    bit: *bit as u32,
                });
            }
            if node_map.contains_key(&info.id) {
                return Err(GraphError::DuplicateNode(info.id));
            }
            node_map.insert(info.id.clone(), info);
        }

        let mut channel_map = BTreeMap::new();
        let mut total: u64 = 0;
        for mut channel in channels {
            if channel.node_a == channel.node_b {
                return Err(GraphError::SelfLoop(channel.channel_id));
            }
            if channel.capacity_sat == 0 {
                return Err(GraphError::ZeroCapacity(channel.channel_id));
            }
            if channel_map.contains_key(&channel.channel_id) {
                return Err(GraphError::DuplicateChannel(channel.channel_id));
            }
            for policy in [&channel.policy_a_to_b, &channel.policy_b_to_a].into_iter().flatten() {
                policy.validate(&channel.channel_id)?;
            }
            if channel.node_a > channel.node_b {
                std::mem::swap(&mut channel.node_a, &mut channel.node_b);
                std::mem::swap(&mut channel.policy_a_to_b, &mut channel.policy_b_to_a);
            }
            for end in [&channel.node_a, &channel.node_b] {
                if !node_map.contains_key(end) {
                    log::debug!("channel {} references unannounced node {}", channel.channel_id, end);
                    node_map.insert(end.clone(), NodeInfo::new(end.clone()));
                }
            }
            total += channel.capacity_sat;
            channel_map.insert(channel.channel_id.clone(), channel);
        }
        if channel_map.is_empty() {
            return Err(GraphError::EmptyNetwork);
        }

        let mut adjacency: BTreeMap<NodeId, Vec<DirectedEdge>> =
            node_map.keys().map(|id| (id.clone(), Vec::new())).collect();
        for channel in channel_map.values() {
            let forward = channel.forward_edge();
            let backward = forward.reversed();
            adjacency.get_mut(&channel.node_a).expect("endpoint registered").push(forward);
            adjacency.get_mut(&channel.node_b).expect("endpoint registered").push(backward);
        }
        for edges in adjacency.values_mut() {
            edges.sort();
        }

        Ok(ChannelGraph {
            nodes: node_map,
            channels: channel_map,
            adjacency,
            labels: BTreeMap::new(),
            total_capacity_sat: total,
        })
    }

    pub fn nodes(&self) -> impl Iterator<Item = &NodeInfo> {
        self.nodes.values()
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn node(&self, id: &NodeId) -> Option<&NodeInfo> {
        self.nodes.get(id)
    }

    /// Node ids in ascending order; the row order used by matrix code.
    pub fn node_ids(&self) -> Vec<NodeId> {
        self.nodes.keys().cloned().collect()
    }

    pub fn channels(&self) -> impl Iterator<Item = &Channel> {
        self.channels.values()
    }

    pub fn channel_count(&self) -> usize {
        self.channels.len()
    }

    pub fn channel(&self, channel_id: &str) -> Option<&Channel> {
        self.channels.get(channel_id)
    }

    pub fn adjacency(&self, node: &NodeId) -> &[DirectedEdge] {
        self.adjacency.get(node).map(Vec::as_slice).unwrap_or(&[])
    }

    /// All directed edges, grouped by source node.
    pub fn edges(&self) -> impl Iterator<Item = &DirectedEdge> {
        self.adjacency.values().flatten()
    }

    pub fn total_capacity_sat(&self) -> u64 {
        self.total_capacity_sat
    }

    /// Directed edge leaving `src` over `channel_id`.
    pub fn edge(&self, channel_id: &str, src: &NodeId) -> Result<DirectedEdge> {
        let channel = self
            .channel(channel_id)
            .ok_or_else(|| GraphError::UnknownChannel(channel_id.to_string()))?;
        if *src == channel.node_a {
            Ok(channel.forward_edge())
        } else if *src == channel.node_b {
            Ok(channel.backward_edge())
        } else {
            Err(GraphError::NotAnEndpoint {
                channel_id: channel_id.to_string(),
                node: src.to_string(),
            })
        }
    }

    pub fn channel_of(&self, edge: &DirectedEdge) -> Option<&Channel> {
        self.channels
            .get(&edge.channel_id)
            .filter(|c| c.has_endpoint(&edge.src) && c.has_endpoint(&edge.dst))
    }

    pub fn capacity_of(&self, edge: &DirectedEdge) -> Option<u64> {
        self.channel_of(edge).map(|c| c.capacity_sat)
    }

    pub fn policy(&self, edge: &DirectedEdge) -> Option<&ChannelPolicy> {
        self.channel_of(edge).and_then(|c| c.policy_from(&edge.src))
    }

    /// Sum of capacities of the channels incident to `node`, in satoshis.
    pub fn node_capacity_sat(&self, node: &NodeId) -> Result<u64> {
        let edges = self
            .adjacency
            .get(node)
            .ok_or_else(|| GraphError::UnknownNode(node.to_string()))?;
        Ok(edges
            .iter()
            .map(|e| self.channels[&e.channel_id].capacity_sat)
            .sum())
    }

    /// Fraction of the network's capacity incident to `node`.
    pub fn capacity_centrality(&self, node: &NodeId) -> Result<f64> {
        let incident = self.node_capacity_sat(node)?;
        Ok(incident as f64 / self.total_capacity_sat as f64)
    }

    pub fn labels(&self) -> impl Iterator<Item = &BalanceLabel> {
        self.labels.values()
    }

    pub fn label_count(&self) -> usize {
        self.labels.len()
    }

    pub fn label(&self, edge: &DirectedEdge) -> Option<&BalanceLabel> {
        self.labels.get(edge)
    }

    /// Attaches an observed balance to one direction.
    pub fn add_label(&mut self, edge: DirectedEdge, y_sat: u64) -> Result<()> {
        let channel = self
            .channel_of(&edge)
            .ok_or_else(|| GraphError::UnknownChannel(edge.channel_id.clone()))?;
        let capacity = channel.capacity_sat;
        if y_sat > capacity {
            return Err(GraphError::BalanceExceedsCapacity {
                channel_id: edge.channel_id.clone(),
                y_sat,
                capacity_sat: capacity,
            });
        }
        let conflict = || GraphError::ConflictingLabel {
            channel_id: edge.channel_id.clone(),
            src: edge.src.clone(),
        };
        if let Some(existing) = self.labels.get(&edge) {
            if existing.y_sat != y_sat {
                return Err(conflict());
            }
            return Ok(());
        }
        if let Some(opposite) = self.labels.get(&edge.reversed()) {
            if opposite.y_sat + y_sat != capacity {
                return Err(conflict());
            }
        }
        let p = y_sat as f64 / capacity as f64;
        self.labels.insert(edge.clone(), BalanceLabel { edge, y_sat, p });
        Ok(())
    }

    /// One target per labeled channel, oriented `node_a -> node_b`. The
    /// complement of a single observed direction is derived, not stored.
    pub fn channel_targets(&self) -> Vec<ChannelTarget> {
        let mut targets: BTreeMap<&str, f64> = BTreeMap::new();
        for label in self.labels.values() {
            let channel = &self.channels[&label.edge.channel_id];
            let p_forward = if label.edge.src == channel.node_a {
                label.p
            } else {
                1.0 - label.p
            };
            targets.entry(channel.channel_id.as_str()).or_insert(p_forward);
        }
        targets
            .into_iter()
            .map(|(id, p)| ChannelTarget {
                channel_id: id.to_string(),
                p_forward: p,
            })
            .collect()
    }
}

// ---------------------------------------------------------------------------
// Snapshot file (describegraph-style JSON)

#[derive(Serialize, Deserialize)]
struct RawGraph {
    nodes: Vec<RawNode>,
    edges: Vec<RawEdge>,
}

#[derive(Serialize, Deserialize)]
struct RawNode {
    pub_key: String,
    #[serde(default)]
    alias: String,
    #[serde(default)]
    features: BTreeMap<String, RawFeature>,
}

#[derive(Serialize, Deserialize)]
struct RawFeature {
    #[serde(default)]
    is_known: bool,
}

#[derive(Serialize, Deserialize)]
struct RawEdge {
    #[serde(deserialize_with = "string_or_int")]
    channel_id: String,
    #[serde(deserialize_with = "u64_string_or_int")]
    capacity: u64,
    node1_pub: String,
    node2_pub: String,
    #[serde(default)]
    node1_policy: Option<RawPolicy>,
    #[serde(default)]
    node2_policy: Option<RawPolicy>,
}

#[derive(Serialize, Deserialize)]
struct RawPolicy {
    #[serde(default, deserialize_with = "u32_string_or_int")]
    time_lock_delta: u32,
    #[serde(default, deserialize_with = "u64_string_or_int")]
    min_htlc: u64,
    #[serde(default, deserialize_with = "opt_u64_string_or_int", skip_serializing_if = "Option::is_none")]
    max_htlc_msat: Option<u64>,
    #[serde(default, deserialize_with = "u64_string_or_int")]
    fee_base_msat: u64,
    #[serde(default, deserialize_with = "u64_string_or_int")]
    fee_rate_milli_msat: u64,
    #[serde(default)]
    disabled: bool,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum NumRepr {
    Int(u64),
    Str(String),
}

impl NumRepr {
    fn into_u64<E: serde::de::Error>(self) -> std::result::Result<u64, E> {
        match self {
            NumRepr::Int(v) => Ok(v),
            NumRepr::Str(s) => s.trim().parse().map_err(|_| E::custom(format!("not an integer: {s:?}"))),
        }
    }
}

fn string_or_int<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<String, D::Error> {
    Ok(match NumRepr::deserialize(d)? {
        NumRepr::Int(v) => v.to_string(),
        NumRepr::Str(s) => s,
    })
}

fn u64_string_or_int<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<u64, D::Error> {
    NumRepr::deserialize(d)?.into_u64()
}

fn u32_string_or_int<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<u32, D::Error> {
    let v = NumRepr::deserialize(d)?.into_u64::<D::Error>()?;
    u32::try_from(v).map_err(|_| serde::de::Error::custom(format!("value {v} out of range")))
}

fn opt_u64_string_or_int<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Option<u64>, D::Error> {
    Option::<NumRepr>::deserialize(d)?.map(NumRepr::into_u64).transpose()
}

impl From<RawPolicy> for ChannelPolicy {
    fn from(raw: RawPolicy) -> Self {
        ChannelPolicy {
            time_lock_delta: raw.time_lock_delta,
            min_htlc_msat: raw.min_htlc,
            max_htlc_msat: raw.max_htlc_msat,
            fee_base_msat: raw.fee_base_msat,
            fee_rate_ppm: raw.fee_rate_milli_msat,
            disabled: raw.disabled,
        }
    }
}

impl From<&ChannelPolicy> for RawPolicy {
    fn from(p: &ChannelPolicy) -> Self {
        RawPolicy {
            time_lock_delta: p.time_lock_delta,
            min_htlc: p.min_htlc_msat,
            max_htlc_msat: p.max_htlc_msat,
            fee_base_msat: p.fee_base_msat,
            fee_rate_milli_msat: p.fee_rate_ppm,
            disabled: p.disabled,
        }
    }
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|source| GraphError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn create(path: &Path) -> Result<File> {
    File::create(path).map_err(|source| GraphError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Parses a snapshot from JSON text.
pub fn parse_snapshot(text: &str) -> Result<ChannelGraph> {
    let raw: RawGraph = serde_json::from_str(text).map_err(|e| GraphError::Parse {
        path: PathBuf::from("<memory>"),
        message: e.to_string(),
    })?;
    from_raw(raw)
}

pub fn load_snapshot(path: impl AsRef<Path>) -> Result<ChannelGraph> {
    let path = path.as_ref();
    let raw: RawGraph = serde_json::from_reader(BufReader::new(open(path)?)).map_err(|e| {
        GraphError::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        }
    })?;
    from_raw(raw)
}

fn from_raw(raw: RawGraph) -> Result<ChannelGraph> {
    let mut nodes = Vec::with_capacity(raw.nodes.len());
    for rn in raw.nodes {
        let id = NodeId::parse(&rn.pub_key)?;
        let mut feature_bits = BTreeSet::new();
        for (key, feature) in rn.features {
            let bit: u32 = key.parse().map_err(|_| GraphError::Parse {
                path: PathBuf::from(id.as_str()),
                message: format!("feature key {key:?} is not a bit number"),
            })?;
            if bit >= MAX_FEATURE_BIT as u32 {
                return Err(GraphError::FeatureBitOutOfRange { node: id, bit });
            }
            if feature.is_known {
                feature_bits.insert(bit as u16);
            }
        }
        let alias = (!rn.alias.is_empty()).then_some(rn.alias);
        nodes.push(NodeInfo {
            id,
            feature_bits,
            alias,
        });
    }
    let mut channels = Vec::with_capacity(raw.edges.len());
    for re in raw.edges {
        channels.push(Channel {
            node_a: NodeId::parse(&re.node1_pub)?,
            node_b: NodeId::parse(&re.node2_pub)?,
            channel_id: re.channel_id,
            capacity_sat: re.capacity,
            policy_a_to_b: re.node1_policy.map(Into::into),
            policy_b_to_a: re.node2_policy.map(Into::into),
        });
    }
    ChannelGraph::new(nodes, channels)
}

/// Serializes the graph topology and policies (labels are not part of a
/// snapshot).
pub fn snapshot_json(graph: &ChannelGraph) -> String {
    let raw = RawGraph {
        nodes: graph
            .nodes()
            .map(|n| RawNode {
                pub_key: n.id.to_string(),
                alias: n.alias.clone().unwrap_or_default(),
                features: n
                    .feature_bits
                    .iter()
                    .map(|b| (b.to_string(), RawFeature { is_known: true }))
                    .collect(),
            })
            .collect(),
        edges: graph
            .channels()
            .map(|c| RawEdge {
                channel_id: c.channel_id.clone(),
                capacity: c.capacity_sat,
                node1_pub: c.node_a.to_string(),
                node2_pub: c.node_b.to_string(),
                node1_policy: c.policy_a_to_b.as_ref().map(Into::into),
                node2_policy: c.policy_b_to_a.as_ref().map(Into::into),
            })
            .collect(),
    };
    serde_json::to_string_pretty(&raw).expect("snapshot serializes")
}

pub fn save_snapshot(graph: &ChannelGraph, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = BufWriter::new(create(path)?);
    out.write_all(snapshot_json(graph).as_bytes())
        .and_then(|_| out.write_all(b"\n"))
        .and_then(|_| out.flush())
        .map_err(|source| GraphError::Io {
            path: path.to_path_buf(),
            source,
        })
}

// ---------------------------------------------------------------------------
// Labels file: `channel_id,src_pub,y_sat`

#[derive(Serialize, Deserialize)]
struct LabelRecord {
    channel_id: String,
    src_pub: String,
    y_sat: u64,
}

fn csv_error(path: &Path, e: csv::Error) -> GraphError {
    GraphError::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

/// Returns a copy of `graph` with the labels in `path` attached.
pub fn load_labels(graph: &ChannelGraph, path: impl AsRef<Path>) -> Result<ChannelGraph> {
    let path = path.as_ref();
    let mut reader = csv::Reader::from_reader(BufReader::new(open(path)?));
    let mut labeled = graph.clone();
    for record in reader.deserialize::<LabelRecord>() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let src = NodeId::parse(&record.src_pub)?;
        let edge = labeled.edge(&record.channel_id, &src)?;
        labeled.add_label(edge, record.y_sat)?;
    }
    Ok(labeled)
}

pub fn save_labels<'a>(
    labels: impl IntoIterator<Item = &'a BalanceLabel>,
    path: impl AsRef<Path>,
) -> Result<()> {
    let path = path.as_ref();
    let mut writer = csv::Writer::from_writer(BufWriter::new(create(path)?));
    for label in labels {
        writer
            .serialize(LabelRecord {
                channel_id: label.edge.channel_id.clone(),
                src_pub: label.edge.src.to_string(),
                y_sat: label.y_sat,
            })
            .map_err(|e| csv_error(path, e))?;
    }
    writer.flush().map_err(|source| GraphError::Io {
        path: path.to_path_buf(),
        source,
    })
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;

    pub fn node(i: u64) -> NodeId {
        NodeId::from_index(i)
    }

    pub fn policy(max_htlc_msat: u64, fee_rate_ppm: u64) -> ChannelPolicy {
        ChannelPolicy {
            time_lock_delta: 40,
            min_htlc_msat: 1_000,
            max_htlc_msat: Some(max_htlc_msat),
            fee_base_msat: 1_000,
            fee_rate_ppm,
            disabled: false,
        }
    }

    pub fn channel(id: &str, a: u64, b: u64, capacity_sat: u64) -> Channel {
        Channel {
            channel_id: id.to_string(),
            node_a: node(a),
            node_b: node(b),
            capacity_sat,
            policy_a_to_b: Some(policy(capacity_sat * 500, 100)),
            policy_b_to_a: Some(policy(capacity_sat * 500, 100)),
        }
    }

    pub fn triangle() -> ChannelGraph {
        ChannelGraph::new(
            vec![],
            vec![
                channel("1", 0, 1, 1_000_000),
                channel("2", 1, 2, 1_000_000),
                channel("3", 0, 2, 1_000_000),
            ],
        )
        .unwrap()
    }
}

#[cfg(test)]
mod tests {
    use super::fixtures::*;
    use super::*;

    fn key(c: char) -> String {
        format!("02{}", c.to_string().repeat(64))
    }

    fn snapshot(edges: &str) -> String {
        format!(
            r#"{{"nodes": [
                {{"pub_key": "{a}", "alias": "alice", "features": {{"19": {{"is_known": true}}, "5": {{"is_known": false}}}}}},
                {{"pub_key": "{b}", "alias": "", "features": {{}}}}
            ], "edges": [{edges}]}}"#,
            a = key('a'),
            b = key('b')
        )
    }

    #[test]
    fn smallest_valid_graph() {
        let edge = format!(
            r#"{{"channel_id": "123", "capacity": "1000000", "node1_pub": "{}", "node2_pub": "{}",
                "node1_policy": {{"time_lock_delta": 40, "min_htlc": "1000", "max_htlc_msat": "990000000",
                  "fee_base_msat": "1000", "fee_rate_milli_msat": "1", "disabled": false}},
                "node2_policy": null}}"#,
            key('b'),
            key('a')
        );
        let g = parse_snapshot(&snapshot(&edge)).unwrap();
        assert_eq!(g.node_count(), 2);
        assert_eq!(g.channel_count(), 1);
        assert_eq!(g.edges().count(), 2);
        let ch = g.channel("123").unwrap();
        // canonical order swaps the endpoints and their policies together
        assert_eq!(ch.node_a.as_str(), key('a'));
        assert!(ch.policy_a_to_b.is_none());
        assert_eq!(ch.policy_b_to_a.as_ref().unwrap().max_htlc_msat, Some(990_000_000));
        let alice = g.node(&NodeId::parse(&key('a')).unwrap()).unwrap();
        assert_eq!(alice.feature_bits.iter().copied().collect::<Vec<_>>(), vec![19]);
        assert_eq!(alice.alias.as_deref(), Some("alice"));
    }

    #[test]
    fn integer_capacity_accepted() {
        let edge = format!(
            r#"{{"channel_id": 77, "capacity": 5000, "node1_pub": "{}", "node2_pub": "{}"}}"#,
            key('a'),
            key('b')
        );
        let g = parse_snapshot(&snapshot(&edge)).unwrap();
        assert_eq!(g.channel("77").unwrap().capacity_sat, 5000);
    }

    #[test]
    fn self_loop_rejected() {
        let edge = format!(
            r#"{{"channel_id": "9", "capacity": "10", "node1_pub": "{a}", "node2_pub": "{a}"}}"#,
            a = key('a')
        );
        let err = parse_snapshot(&snapshot(&edge)).unwrap_err();
        assert!(matches!(err, GraphError::SelfLoop(ref id) if id == "9"), "{err}");
    }

    #[test]
    fn zero_capacity_and_duplicates_rejected() {
        let zero = format!(
            r#"{{"channel_id": "9", "capacity": "0", "node1_pub": "{}", "node2_pub": "{}"}}"#,
            key('a'),
            key('b')
        );
        assert!(matches!(parse_snapshot(&snapshot(&zero)), Err(GraphError::ZeroCapacity(_))));
        let one = format!(
            r#"{{"channel_id": "9", "capacity": "5", "node1_pub": "{}", "node2_pub": "{}"}}"#,
            key('a'),
            key('b')
        );
        let twice = format!("{one},{one}");
        assert!(matches!(
            parse_snapshot(&snapshot(&twice)),
            Err(GraphError::DuplicateChannel(_))
        ));
    }

    #[test]
    fn malformed_json_is_parse_error() {
        assert!(matches!(parse_snapshot("{\"nodes\": ["), Err(GraphError::Parse { .. })));
        assert!(matches!(NodeId::parse("02zz"), Err(GraphError::InvalidNodeId(_))));
    }

    #[test]
    fn triangle_adjacency() {
        let g = triangle();
        for id in g.node_ids() {
            assert_eq!(g.adjacency(&id).len(), 2);
        }
        for edge in g.edges() {
            assert!(g.adjacency(&edge.dst).contains(&edge.reversed()));
        }
    }

    #[test]
    fn capacity_centrality_cases() {
        let g = triangle();
        for id in g.node_ids() {
            assert!((g.capacity_centrality(&id).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        }
        let single = ChannelGraph::new(
            vec![NodeInfo::new(node(9))],
            vec![channel("1", 0, 1, 500)],
        )
        .unwrap();
        assert_eq!(single.capacity_centrality(&node(0)).unwrap(), 1.0);
        assert_eq!(single.capacity_centrality(&node(1)).unwrap(), 1.0);
        assert_eq!(single.capacity_centrality(&node(9)).unwrap(), 0.0);
        assert!(matches!(
            single.capacity_centrality(&node(5)),
            Err(GraphError::UnknownNode(_))
        ));
    }

    #[test]
    fn labels_and_complement() {
        let mut g = triangle();
        let e = g.edge("1", &node(0)).unwrap();
        g.add_label(e.clone(), 250_000).unwrap();
        assert_eq!(g.label(&e).unwrap().p, 0.25);
        // complement is derivable but not materialized
        assert!(g.label(&e.reversed()).is_none());
        assert_eq!(g.channel_targets()[0].p_forward, 0.25);

        let f = g.edge("2", &node(2)).unwrap();
        g.add_label(f.clone(), 1_000_000).unwrap();
        assert_eq!(g.label(&f).unwrap().p, 1.0);
        let targets = g.channel_targets();
        assert_eq!(targets[1].p_forward, 0.0);

        let err = g.add_label(g.edge("3", &node(0)).unwrap(), 1_000_001).unwrap_err();
        assert!(matches!(err, GraphError::BalanceExceedsCapacity { .. }));
        assert!(matches!(g.add_label(e.clone(), 1), Err(GraphError::ConflictingLabel { .. })));
        assert!(matches!(
            g.add_label(e.reversed(), 1),
            Err(GraphError::ConflictingLabel { .. })
        ));
        g.add_label(e.reversed(), 750_000).unwrap();
        let lp = g.label(&e).unwrap().p + g.label(&e.reversed()).unwrap().p;
        assert!((lp - 1.0).abs() < 1e-9);
    }

    #[test]
    fn label_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut g = triangle();
        g.add_label(g.edge("1", &node(1)).unwrap(), 10).unwrap();
        let path = dir.path().join("labels.csv");
        save_labels(g.labels(), &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("channel_id,src_pub,y_sat\n"));
        let reloaded = load_labels(&triangle(), &path).unwrap();
        assert_eq!(reloaded, g);

        std::fs::write(&path, format!("channel_id,src_pub,y_sat\nnope,{},5\n", node(0))).unwrap();
        assert!(matches!(load_labels(&triangle(), &path), Err(GraphError::UnknownChannel(_))));
    }

    #[test]
    fn snapshot_round_trip() {
        let mut ch = channel("1", 0, 1, 1_000);
        ch.policy_b_to_a = None;
        let mut info = NodeInfo::new(node(0));
        info.feature_bits.extend([9, 19]);
        info.alias = Some("x".into());
        let g = ChannelGraph::new(vec![info], vec![ch, channel("2", 1, 2, 7)]).unwrap();
        let again = parse_snapshot(&snapshot_json(&g)).unwrap();
        assert_eq!(again, g);
    }
}
