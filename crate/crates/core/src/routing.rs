//! Reliability routing on predicted balances and a payment-retry simulator.
//!
//! An edge with predicted local share `p̂` costs `-ln p̂`; edges whose
//! effective balance `p̂ · capacity` cannot carry the amount are pruned.
//! The cheapest path is therefore the one whose hops are jointly most likely
//! to hold the liquidity, treating hops as independent.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap};
use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{ChannelGraph, DirectedEdge, NodeId};
use crate::models::{Estimator, ModelError};
use crate::seed;

#[derive(Debug, Error)]
pub enum RoutingError {
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("source and destination are both {0}")]
    SameEndpoints(NodeId),
    #[error("amount must be positive")]
    ZeroAmount,
    #[error("edge {0} has no ground-truth balance")]
    MissingTruth(DirectedEdge),
    #[error("invalid workload: {0}")]
    InvalidWorkload(String),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error(transparent)]
    Model(#[from] ModelError),
}

pub type Result<T, E = RoutingError> = std::result::Result<T, E>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RoutingConfig {
    /// Estimates at or below this are treated as empty channels.
    pub p_floor: f64,
}

impl Default for RoutingConfig {
    fn default() -> Self {
        RoutingConfig { p_floor: 1e-6 }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RouteQuery {
    pub src: NodeId,
    pub dest: NodeId,
    pub amount_sat: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RoutingResult {
    pub path: Vec<DirectedEdge>,
    pub per_hop_p: Vec<f64>,
    pub total_cost: f64,
    pub found: bool,
}

impl RoutingResult {
    fn not_found() -> Self {
        RoutingResult {
            path: vec![],
            per_hop_p: vec![],
            total_cost: f64::INFINITY,
            found: false,
        }
    }
}

/// Index-based view of a channel graph for repeated path searches. Node
/// indices follow node id order, so comparing index sequences compares
/// node id sequences.
pub struct RoutingNetwork {
    ids: Vec<NodeId>,
    index: BTreeMap<NodeId, usize>,
    edges: Vec<DirectedEdge>,
    src: Vec<usize>,
    dst: Vec<usize>,
    capacity: Vec<u64>,
    /// Enabled policy present.
    routable: Vec<bool>,
    out: Vec<Vec<usize>>,
    edge_index: BTreeMap<DirectedEdge, usize>,
}

/// Per-edge cost and the probability it stands for; pruned edges carry
/// `f64::INFINITY`.
#[derive(Clone, Debug, PartialEq)]
pub struct EdgeCosts {
    pub cost: Vec<f64>,
    pub p: Vec<f64>,
}

impl EdgeCosts {
    pub fn prune(&mut self, edge: usize) {
        self.cost[edge] = f64::INFINITY;
    }
}

/// Cost of one edge under the estimate `p_hat`, or `None` when pruned.
pub fn balance_cost(p_hat: f64, capacity_sat: u64, amount_sat: u64, config: &RoutingConfig) -> Option<f64> {
    if p_hat <= config.p_floor || p_hat * (capacity_sat as f64) < amount_sat as f64 {
        return None;
    }
    Some(-p_hat.max(config.p_floor).ln())
}

/// `P(balance ≥ amount)` when the balance is uniform on `0..=capacity`.
pub fn capacity_uniform_p(capacity_sat: u64, amount_sat: u64) -> Option<f64> {
    (amount_sat <= capacity_sat).then(|| (capacity_sat + 1 - amount_sat) as f64 / (capacity_sat + 1) as f64)
}

#[derive(Clone, Debug, PartialEq, Eq)]
struct Label {
    cost: OrderedCost,
    hops: usize,
    path: Vec<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct OrderedCost(f64);

impl Eq for OrderedCost {}

impl PartialOrd for OrderedCost {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for OrderedCost {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

impl Ord for Label {
    fn cmp(&self, other: &Self) -> Ordering {
        self.cost
            .cmp(&other.cost)
            .then(self.hops.cmp(&other.hops))
            .then_with(|| self.path.cmp(&other.path))
    }
}

impl PartialOrd for Label {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

struct Queued {
    label: Label,
    node: usize,
    /// Edge indices along the path.
    via: Vec<usize>,
}

impl PartialEq for Queued {
    fn eq(&self, other: &Self) -> bool {
        self.label == other.label
    }
}
impl Eq for Queued {}
impl PartialOrd for Queued {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Queued {
    fn cmp(&self, other: &Self) -> Ordering {
        other.label.cmp(&self.label)
    }
}

impl RoutingNetwork {
    pub fn new(graph: &ChannelGraph) -> Self {
        let ids = graph.node_ids();
        let index: BTreeMap<NodeId, usize> = ids.iter().cloned().enumerate().map(|(i, id)| (id, i)).collect();
        let mut net = RoutingNetwork {
            out: vec![Vec::new(); ids.len()],
            ids,
            index,
            edges: Vec::new(),
            src: Vec::new(),
            dst: Vec::new(),
            capacity: Vec::new(),
            routable: Vec::new(),
            edge_index: BTreeMap::new(),
        };
        for edge in graph.edges() {
            let e = net.edges.len();
            let (s, d) = (net.index[&edge.src], net.index[&edge.dst]);
            net.src.push(s);
            net.dst.push(d);
            net.capacity.push(graph.capacity_of(edge).expect("edge of graph"));
            net.routable.push(graph.policy(edge).is_some_and(|p| !p.disabled));
            net.out[s].push(e);
            net.edge_index.insert(edge.clone(), e);
            net.edges.push(edge.clone());
        }
        net
    }

    pub fn edges(&self) -> &[DirectedEdge] {
        &self.edges
    }

    pub fn edge_index(&self, edge: &DirectedEdge) -> Option<usize> {
        self.edge_index.get(edge).copied()
    }

    pub fn capacity(&self, edge: usize) -> u64 {
        self.capacity[edge]
    }

    fn node(&self, id: &NodeId) -> Result<usize> {
        self.index.get(id).copied().ok_or_else(|| RoutingError::UnknownNode(id.clone()))
    }

    /// Costs from per-edge estimates (aligned with [`edges`](Self::edges));
    /// undefined estimates and unroutable edges are pruned.
    pub fn balance_costs(&self, p_hat: &[Option<f64>], amount_sat: u64, config: &RoutingConfig) -> EdgeCosts {
        let mut cost = vec![f64::INFINITY; self.edges.len()];
        let mut p = vec![0.0; self.edges.len()];
        for e in 0..self.edges.len() {
            if !self.routable[e] {
                continue;
            }
            if let Some(ph) = p_hat[e] {
                if let Some(c) = balance_cost(ph, self.capacity[e], amount_sat, config) {
                    cost[e] = c;
                    p[e] = ph;
                }
            }
        }
        EdgeCosts { cost, p }
    }

    /// Costs assuming every balance is uniform on `0..=capacity`.
    pub fn capacity_costs(&self, amount_sat: u64) -> EdgeCosts {
        let mut cost = vec![f64::INFINITY; self.edges.len()];
        let mut p = vec![0.0; self.edges.len()];
        for e in 0..self.edges.len() {
            if !self.routable[e] {
                continue;
            }
            if let Some(q) = capacity_uniform_p(self.capacity[e], amount_sat) {
                cost[e] = -q.ln();
                p[e] = q;
            }
        }
        EdgeCosts { cost, p }
    }

    /// Cheapest path by Dijkstra; ties go to fewer hops, then to the
    /// lexicographically smallest node sequence. The total is summed in
    /// path order.
    pub fn find_path(&self, costs: &EdgeCosts, src: &NodeId, dest: &NodeId) -> Result<RoutingResult> {
        let s = self.node(src)?;
        let t = self.node(dest)?;
        if s == t {
            return Err(RoutingError::SameEndpoints(src.clone()));
        }
        let mut best: Vec<Option<Label>> = vec![None; self.ids.len()];
        let mut done = vec![false; self.ids.len()];
        let mut heap = BinaryHeap::new();
        let start = Label {
            cost: OrderedCost(0.0),
            hops: 0,
            path: vec![s],
        };
        best[s] = Some(start.clone());
        heap.push(Queued {
            label: start,
            node: s,
            via: vec![],
        });
        while let Some(Queued { label, node, via }) = heap.pop() {
            if done[node] {
                continue;
            }
            done[node] = true;
            if node == t {
                let per_hop_p = via.iter().map(|&e| costs.p[e]).collect();
                return Ok(RoutingResult {
                    path: via.iter().map(|&e| self.edges[e].clone()).collect(),
                    per_hop_p,
                    total_cost: label.cost.0,
                    found: true,
                });
            }
            for &e in &self.out[node] {
                let c = costs.cost[e];
                let next = self.dst[e];
                if !c.is_finite() || done[next] {
                    continue;
                }
                let mut path = label.path.clone();
                path.push(next);
                let candidate = Label {
                    cost: OrderedCost(label.cost.0 + c),
                    hops: label.hops + 1,
                    path,
                };
                if best[next].as_ref().is_none_or(|b| candidate < *b) {
                    best[next] = Some(candidate.clone());
                    let mut v = via.clone();
                    v.push(e);
                    heap.push(Queued {
                        label: candidate,
                        node: next,
                        via: v,
                    });
                }
            }
        }
        Ok(RoutingResult::not_found())
    }
}

/// Per-edge costs for `estimator` at `amount_sat`; pruned edges map to
/// infinity.
pub fn edge_costs(
    graph: &ChannelGraph,
    estimator: &Estimator,
    amount_sat: u64,
    config: &RoutingConfig,
) -> Result<BTreeMap<DirectedEdge, f64>> {
    let net = RoutingNetwork::new(graph);
    let p_hat = estimator.predict_edges(graph, net.edges())?;
    let costs = net.balance_costs(&p_hat, amount_sat, config);
    Ok(net.edges.iter().cloned().zip(costs.cost).collect())
}

/// Cheapest path under explicit per-edge costs (missing edges are pruned).
pub fn find_path(graph: &ChannelGraph, costs: &BTreeMap<DirectedEdge, f64>, query: &RouteQuery) -> Result<RoutingResult> {
    if query.amount_sat == 0 {
        return Err(RoutingError::ZeroAmount);
    }
    let net = RoutingNetwork::new(graph);
    let cost: Vec<f64> = net
        .edges
        .iter()
        .map(|e| costs.get(e).copied().unwrap_or(f64::INFINITY))
        .collect();
    let p = cost.iter().map(|c| (-c).exp()).collect();
    net.find_path(&EdgeCosts { cost, p }, &query.src, &query.dest)
}

/// Routes `query` with `estimator`'s predictions.
pub fn route(graph: &ChannelGraph, estimator: &Estimator, query: &RouteQuery, config: &RoutingConfig) -> Result<RoutingResult> {
    if query.amount_sat == 0 {
        return Err(RoutingError::ZeroAmount);
    }
    let net = RoutingNetwork::new(graph);
    let p_hat = estimator.predict_edges(graph, net.edges())?;
    net.find_path(&net.balance_costs(&p_hat, query.amount_sat, config), &query.src, &query.dest)
}

// ---------------------------------------------------------------------------
// Simulation

/// How a simulated sender prices edges.
pub enum Strategy<'a> {
    /// Predictions of a trained or heuristic estimator.
    Model(&'a Estimator),
    /// The current true balances.
    Oracle,
    /// Balances assumed uniform on `0..=capacity`.
    CapacityUniform,
}

impl Strategy<'_> {
    pub fn name(&self) -> String {
        match self {
            Strategy::Model(e) => e.kind().to_string(),
            Strategy::Oracle => "oracle".into(),
            Strategy::CapacityUniform => "capacity-uniform".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub n_payments: usize,
    pub max_retries: usize,
    /// Amounts are log-uniform on `[min_amount_sat, max_amount_sat]`.
    pub min_amount_sat: u64,
    pub max_amount_sat: u64,
    /// Move liquidity along successful paths.
    pub shift_balances: bool,
    pub routing: RoutingConfig,
    pub rng_seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            n_payments: 500,
            max_retries: 20,
            min_amount_sat: 10_000,
            max_amount_sat: 1_000_000,
            shift_balances: false,
            routing: RoutingConfig::default(),
            rng_seed: 7,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Payment {
    pub src: NodeId,
    pub dest: NodeId,
    pub amount_sat: u64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PaymentOutcome {
    /// Paths tried; zero when no path existed at all.
    pub attempts: usize,
    pub success: bool,
}

impl PaymentOutcome {
    /// Failed attempts before success; failed payments count as
    /// `max_retries`.
    pub fn retries(&self, max_retries: usize) -> usize {
        if self.success {
            self.attempts - 1
        } else {
            max_retries
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StrategySummary {
    pub name: String,
    pub outcomes: Vec<PaymentOutcome>,
    pub successes: usize,
    pub success_rate: f64,
    pub median_retries: f64,
    pub mean_retries: f64,
    /// Mean attempts over successful payments.
    pub attempts_per_success: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimReport {
    pub payments: Vec<Payment>,
    pub max_retries: usize,
    pub strategies: Vec<StrategySummary>,
}

fn median(values: &mut [usize]) -> f64 {
    values.sort_unstable();
    let n = values.len();
    if n == 0 {
        return 0.0;
    }
    if n % 2 == 1 {
        values[n / 2] as f64
    } else {
        (values[n / 2 - 1] + values[n / 2]) as f64 / 2.0
    }
}

/// Seeded workload over the nodes that have channels.
pub fn draw_payments(graph: &ChannelGraph, config: &SimConfig) -> Result<Vec<Payment>> {
    if config.min_amount_sat == 0 || config.min_amount_sat > config.max_amount_sat {
        return Err(RoutingError::InvalidWorkload(format!(
            "amount range [{}, {}]",
            config.min_amount_sat, config.max_amount_sat
        )));
    }
    let active: Vec<NodeId> = graph
        .node_ids()
        .into_iter()
        .filter(|id| !graph.adjacency(id).is_empty())
        .collect();
    if active.len() < 2 {
        return Err(RoutingError::InvalidWorkload("fewer than two connected nodes".into()));
    }
    let mut rng = seed::rng(config.rng_seed, "payments");
    let (lo, hi) = ((config.min_amount_sat as f64).ln(), (config.max_amount_sat as f64).ln());
    Ok((0..config.n_payments)
        .map(|_| {
            let s = rng.random_range(0..active.len());
            let mut d = rng.random_range(0..active.len() - 1);
            if d >= s {
                d += 1;
            }
            let amount = if hi > lo { rng.random_range(lo..=hi).exp() } else { lo.exp() };
            Payment {
                src: active[s].clone(),
                dest: active[d].clone(),
                amount_sat: (amount.round() as u64).clamp(config.min_amount_sat, config.max_amount_sat),
            }
        })
        .collect())
}

struct Simulator<'a> {
    net: &'a RoutingNetwork,
    config: &'a SimConfig,
}

impl Simulator<'_> {
    fn costs(&self, strategy: &Strategy, predictions: &[Option<f64>], balances: &[u64], amount: u64) -> EdgeCosts {
        match strategy {
            Strategy::Model(_) => self.net.balance_costs(predictions, amount, &self.config.routing),
            Strategy::CapacityUniform => self.net.capacity_costs(amount),
            Strategy::Oracle => {
                let p: Vec<Option<f64>> = balances
                    .iter()
                    .enumerate()
                    .map(|(e, y)| Some(*y as f64 / self.net.capacity[e] as f64))
                    .collect();
                self.net.balance_costs(&p, amount, &self.config.routing)
            }
        }
    }

    /// Trial and error against the true balances: a failing hop is pruned
    /// for the rest of this payment.
    fn pay(&self, strategy: &Strategy, predictions: &[Option<f64>], balances: &mut [u64], payment: &Payment) -> PaymentOutcome {
        let mut costs = self.costs(strategy, predictions, balances, payment.amount_sat);
        let mut attempts = 0;
        while attempts < self.config.max_retries {
            let result = self
                .net
                .find_path(&costs, &payment.src, &payment.dest)
                .expect("workload endpoints are distinct graph nodes");
            if !result.found {
                break;
            }
            attempts += 1;
            let hops: Vec<usize> = result
                .path
                .iter()
                .map(|e| self.net.edge_index(e).expect("path edge in network"))
                .collect();
            match hops.iter().find(|&&e| balances[e] < payment.amount_sat) {
                Some(&failed) => costs.prune(failed),
                None => {
                    if self.config.shift_balances {
                        for &e in &hops {
                            balances[e] -= payment.amount_sat;
                            let back = self.net.edge_index(&self.net.edges[e].reversed()).expect("reverse edge");
                            balances[back] += payment.amount_sat;
                        }
                    }
                    return PaymentOutcome { attempts, success: true };
                }
            }
        }
        PaymentOutcome { attempts, success: false }
    }
}

/// Runs the same seeded workload once per strategy against the true
/// balances carried by `graph`'s labels.
pub fn simulate(graph: &ChannelGraph, strategies: &[Strategy], config: &SimConfig) -> Result<SimReport> {
    if config.max_retries == 0 {
        return Err(RoutingError::InvalidWorkload("max_retries must be at least 1".into()));
    }
    let net = RoutingNetwork::new(graph);
    let truth: Vec<u64> = net
        .edges
        .iter()
        .map(|e| {
            graph
                .label(e)
                .map(|l| l.y_sat)
                .or_else(|| graph.label(&e.reversed()).map(|l| graph.capacity_of(e).unwrap_or(0) - l.y_sat))
                .ok_or_else(|| RoutingError::MissingTruth(e.clone()))
        })
        .collect::<Result<_>>()?;
    let payments = draw_payments(graph, config)?;
    let sim = Simulator { net: &net, config };

    let mut summaries = Vec::with_capacity(strategies.len());
    for strategy in strategies {
        let predictions = match strategy {
            Strategy::Model(est) => est.predict_edges(graph, &net.edges)?,
            _ => vec![],
        };
        let outcomes: Vec<PaymentOutcome> = if config.shift_balances {
            let mut balances = truth.clone();
            payments
                .iter()
                .map(|p| sim.pay(strategy, &predictions, &mut balances, p))
                .collect()
        } else {
            payments
                .par_iter()
                .map(|p| sim.pay(strategy, &predictions, &mut truth.clone(), p))
                .collect()
        };
        let successes = outcomes.iter().filter(|o| o.success).count();
        let mut retries: Vec<usize> = outcomes.iter().map(|o| o.retries(config.max_retries)).collect();
        let mean_retries = retries.iter().sum::<usize>() as f64 / retries.len().max(1) as f64;
        let success_attempts: usize = outcomes.iter().filter(|o| o.success).map(|o| o.attempts).sum();
        summaries.push(StrategySummary {
            name: strategy.name(),
            successes,
            success_rate: successes as f64 / outcomes.len().max(1) as f64,
            median_retries: median(&mut retries),
            mean_retries,
            attempts_per_success: (successes > 0).then(|| success_attempts as f64 / successes as f64),
            outcomes,
        });
        log::info!("simulated {} payments with {}", payments.len(), strategy.name());
    }
    Ok(SimReport {
        payments,
        max_retries: config.max_retries,
        strategies: summaries,
    })
}

impl SimReport {
    pub fn summary_csv(&self) -> String {
        let mut out =
            String::from("strategy,n_payments,successes,success_rate,median_retries,mean_retries,attempts_per_success\n");
        for s in &self.strategies {
            let _ = writeln!(
                out,
                "{},{},{},{:.6},{:.1},{:.6},{}",
                s.name,
                s.outcomes.len(),
                s.successes,
                s.success_rate,
                s.median_retries,
                s.mean_retries,
                s.attempts_per_success.map_or(String::new(), |v| format!("{v:.6}"))
            );
        }
        out
    }

    pub fn payments_csv(&self) -> String {
        let mut out = String::from("payment,strategy,src_pub,dst_pub,amount_sat,attempts,success\n");
        for s in &self.strategies {
            for (i, (p, o)) in self.payments.iter().zip(&s.outcomes).enumerate() {
                let _ = writeln!(
                    out,
                    "{i},{},{},{},{},{},{}",
                    s.name, p.src, p.dest, p.amount_sat, o.attempts, o.success
                );
            }
        }
        out
    }

    /// Writes `simulation.csv` (summary) and `payments.csv` into `dir`.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        let io = |e: std::io::Error| RoutingError::Io {
            path: dir.display().to_string(),
            message: e.to_string(),
        };
        std::fs::create_dir_all(dir).map_err(io)?;
        std::fs::write(dir.join("simulation.csv"), self.summary_csv()).map_err(io)?;
        std::fs::write(dir.join("payments.csv"), self.payments_csv()).map_err(io)
    }
}
