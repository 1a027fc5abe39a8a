//! Laplacian-eigenvector positional encodings.
//!
//! Encodings are eigenvectors of the symmetric normalized Laplacian
//! `L = I - D^{-1/2} A D^{-1/2}` of the undirected channel skeleton, taken
//! for the `k` smallest nonzero eigenvalues. One zero eigenvalue per connected
//! component is dropped; isolated nodes get all-zero vectors.
//!
//! Two solvers share the same output contract: a dense Householder/QL solve
//! and a Lanczos iteration with full reorthogonalization and locking. `Auto`
//! picks the dense path below [`SpectralConfig::dense_threshold`] nodes.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{ChannelGraph, NodeId};
use crate::linalg::{symmetric_eigen, tridiagonal_eigen, tridiagonal_eigen_last_row};
use crate::scalar::Scalar;

#[derive(Debug, Error)]
pub enum SpectralError {
    #[error("k = {k} out of range: graph supports 1..={max} nontrivial eigenvectors")]
    KOutOfRange { k: usize, max: usize },
    #[error("eigensolver did not converge: {0}")]
    NotConverged(String),
    #[error("{path}: {message}")]
    Cache { path: PathBuf, message: String },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Weighting {
    /// 0/1 adjacency; parallel channels collapse to one edge.
    #[default]
    Unweighted,
    /// Adjacency weight = summed capacity of the channels between two nodes.
    Capacity,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Solver {
    #[default]
    Auto,
    Dense,
    Lanczos,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpectralConfig {
    pub k: usize,
    pub weighting: Weighting,
    pub solver: Solver,
    pub dense_threshold: usize,
}

impl Default for SpectralConfig {
    fn default() -> Self {
        SpectralConfig {
            k: 16,
            weighting: Weighting::Unweighted,
            solver: Solver::Auto,
            dense_threshold: 500,
        }
    }
}

/// Per-node positional encodings `z_u` of dimension `k`.
#[derive(Clone, Debug, PartialEq)]
pub struct PositionalTable<T> {
    pub k: usize,
    pub vectors: BTreeMap<NodeId, Vec<T>>,
    /// Ascending; empty when loaded from a cache without eigenvalues.
    pub eigenvalues: Vec<T>,
}

impl<T: Scalar> PositionalTable<T> {
    pub fn get(&self, node: &NodeId) -> Option<&[T]> {
        self.vectors.get(node).map(Vec::as_slice)
    }

    /// Encoding of `node`, or zeros for nodes unknown to the table.
    pub fn get_or_zero(&self, node: &NodeId) -> Vec<T> {
        self.get(node)
            .map(<[T]>::to_vec)
            .unwrap_or_else(|| vec![T::zero(); self.k])
    }
}

/// Sparse symmetric normalized Laplacian over the non-isolated nodes.
#[derive(Clone, Debug)]
pub struct NormalizedLaplacian<T> {
    n: usize,
    row_start: Vec<usize>,
    cols: Vec<usize>,
    /// Entries of `D^{-1/2} A D^{-1/2}`.
    vals: Vec<T>,
    degree: Vec<T>,
}

impl<T: Scalar> NormalizedLaplacian<T> {
    /// Builds from an undirected weighted edge list over `n` nodes, all of
    /// which must have positive degree.
    pub fn from_edges(n: usize, edges: &BTreeMap<(usize, usize), T>) -> Self {
        let mut degree = vec![T::zero(); n];
        let mut rows: Vec<Vec<(usize, T)>> = vec![Vec::new(); n];
        for (&(i, j), &w) in edges {
            degree[i] += w;
            degree[j] += w;
            rows[i].push((j, w));
            rows[j].push((i, w));
        }
        let mut row_start = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        for (i, row) in rows.iter_mut().enumerate() {
            row.sort_by_key(|(j, _)| *j);
            row_start.push(cols.len());
            for &(j, w) in row.iter() {
                cols.push(j);
                vals.push(w / (degree[i] * degree[j]).sqrt());
            }
        }
        row_start.push(cols.len());
        NormalizedLaplacian {
            n,
            row_start,
            cols,
            vals,
            degree,
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// `out = L x`.
    pub fn apply(&self, x: &[T], out: &mut [T]) {
        for i in 0..self.n {
            let mut acc = T::zero();
            for idx in self.row_start[i]..self.row_start[i + 1] {
                acc += self.vals[idx] * x[self.cols[idx]];
            }
            out[i] = x[i] - acc;
        }
    }

    pub fn to_dense(&self) -> Vec<T> {
        let n = self.n;
        let mut m = vec![T::zero(); n * n];
        for i in 0..n {
            m[i * n + i] = T::one();
            for idx in self.row_start[i]..self.row_start[i + 1] {
                m[i * n + self.cols[idx]] -= self.vals[idx];
            }
        }
        m
    }

    /// `‖L v - λ v‖₂`.
    pub fn residual(&self, lambda: T, v: &[T]) -> T {
        let mut lv = vec![T::zero(); self.n];
        self.apply(v, &mut lv);
        lv.iter()
            .zip(v)
            .map(|(a, b)| (*a - lambda * *b).powi(2))
            .sum::<T>()
            .sqrt()
    }

    /// Connected components as lists of row indices, in first-index order.
    pub fn components(&self) -> Vec<Vec<usize>> {
        let mut seen = vec![false; self.n];
        let mut out = Vec::new();
        for start in 0..self.n {
            if seen[start] {
                continue;
            }
            seen[start] = true;
            let mut comp = vec![start];
            let mut cursor = 0;
            while cursor < comp.len() {
                let i = comp[cursor];
                cursor += 1;
                for idx in self.row_start[i]..self.row_start[i + 1] {
                    let j = self.cols[idx];
                    if !seen[j] {
                        seen[j] = true;
                        comp.push(j);
                    }
                }
            }
            comp.sort_unstable();
            out.push(comp);
        }
        out
    }

    /// Orthonormal basis of the null space: `D^{1/2} 1` restricted to each
    /// component.
    pub fn null_space(&self) -> Vec<Vec<T>> {
        self.components()
            .into_iter()
            .map(|comp| {
                let mut v = vec![T::zero(); self.n];
                let norm = comp.iter().map(|&i| self.degree[i]).sum::<T>().sqrt();
                for &i in &comp {
                    v[i] = self.degree[i].sqrt() / norm;
                }
                v
            })
            .collect()
    }
}

/// Eigenpairs of the Laplacian, ascending.
#[derive(Clone, Debug)]
pub struct EigenPairs<T> {
    pub values: Vec<T>,
    pub vectors: Vec<Vec<T>>,
}

/// The `k` smallest nonzero eigenpairs by dense decomposition.
pub fn dense_smallest<T: Scalar>(lap: &NormalizedLaplacian<T>, k: usize) -> EigenPairs<T> {
    let n = lap.dim();
    let zeros = lap.components().len();
    let eig = symmetric_eigen(&lap.to_dense(), n);
    let picked = zeros..(zeros + k).min(n);
    EigenPairs {
        values: picked.clone().map(|j| eig.values[j]).collect(),
        vectors: picked.map(|j| eig.vector(j)).collect(),
    }
}

fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(x, y)| *x * *y).sum()
}

fn norm<T: Scalar>(a: &[T]) -> T {
    dot(a, a).sqrt()
}

/// Classical Gram-Schmidt, applied twice.
fn orthogonalize<T: Scalar>(w: &mut [T], basis: &[Vec<T>]) {
    for _ in 0..2 {
        for q in basis {
            let c = dot(w, q);
            for (wi, qi) in w.iter_mut().zip(q) {
                *wi -= c * *qi;
            }
        }
    }
}

/// Result of one Lanczos sweep: Krylov basis plus tridiagonal coefficients.
struct Sweep<T> {
    basis: Vec<Vec<T>>,
    alpha: Vec<T>,
    beta: Vec<T>,
    exhausted: bool,
}

/// Smallest eigenpairs of `L` in the orthogonal complement of `locked`,
/// via Lanczos with full reorthogonalization. Returns Ritz pairs whose true
/// residual is within `tol`, in ascending order, at most `want` of them.
fn lanczos_sweep<T: Scalar>(
    lap: &NormalizedLaplacian<T>,
    locked: &[Vec<T>],
    want: usize,
    max_dim: usize,
    tol: T,
    rng: &mut ChaCha8Rng,
) -> Option<EigenPairs<T>> {
    let n = lap.dim();
    let mut start: Vec<T> = (0..n)
        .map(|_| T::of(StandardNormal.sample(rng)))
        .collect();
    orthogonalize(&mut start, locked);
    let s = norm(&start);
    if s <= T::epsilon() * T::of_usize(n) {
        return None;
    }
    start.iter_mut().for_each(|x| *x /= s);

    let mut sweep = Sweep {
        basis: vec![start],
        alpha: Vec::new(),
        beta: Vec::new(),
        exhausted: false,
    };
    let mut w = vec![T::zero(); n];
    let mut next_check = (2 * want + 10).min(max_dim);
    let breakdown = T::epsilon().sqrt();
    loop {
        let j = sweep.alpha.len();
        let q = &sweep.basis[j];
        lap.apply(q, &mut w);
        let a = dot(&w, q);
        sweep.alpha.push(a);
        // Locked directions go last so the basis cannot carry them back in.
        for _ in 0..2 {
            orthogonalize(&mut w, &sweep.basis);
            orthogonalize(&mut w, locked);
        }
        let b = norm(&w);
        let m = j + 1;
        if b <= breakdown {
            sweep.exhausted = true;
        }
        let check = sweep.exhausted || m >= max_dim || m >= next_check;
        if check {
            let off = &sweep.beta[..];
            let (theta, last) = tridiagonal_eigen_last_row(&sweep.alpha, off);
            let converged = theta
                .iter()
                .zip(&last)
                .take(want)
                .take_while(|(_, s)| b * s.abs() <= tol * T::of(0.1))
                .count();
            if converged >= want.min(m) || sweep.exhausted || m >= max_dim {
                return Some(ritz_pairs(lap, &sweep, converged, tol));
            }
            next_check = (m + m / 2 + 1).min(max_dim);
        }
        sweep.beta.push(b);
        sweep.basis.push(w.iter().map(|x| *x / b).collect());
    }
}

fn ritz_pairs<T: Scalar>(
    lap: &NormalizedLaplacian<T>,
    sweep: &Sweep<T>,
    count: usize,
    tol: T,
) -> EigenPairs<T> {
    let m = sweep.alpha.len();
    let n = lap.dim();
    let tri = tridiagonal_eigen(&sweep.alpha, &sweep.beta[..m - 1]);
    let mut out = EigenPairs {
        values: Vec::new(),
        vectors: Vec::new(),
    };
    for i in 0..count.min(m) {
        let mut x = vec![T::zero(); n];
        for (j, q) in sweep.basis.iter().take(m).enumerate() {
            let c = tri.vectors[j * m + i];
            for (xi, qi) in x.iter_mut().zip(q) {
                *xi += c * *qi;
            }
        }
        let s = norm(&x);
        x.iter_mut().for_each(|v| *v /= s);
        // Rayleigh quotient refines the Ritz value.
        let mut lx = vec![T::zero(); n];
        lap.apply(&x, &mut lx);
        let theta = dot(&x, &lx);
        if lap.residual(theta, &x) > tol {
            break;
        }
        out.values.push(theta);
        out.vectors.push(x);
    }
    out
}

/// The `k` smallest nonzero eigenpairs by Lanczos with locking.
pub fn lanczos_smallest<T: Scalar>(
    lap: &NormalizedLaplacian<T>,
    k: usize,
    seed: u64,
) -> Result<EigenPairs<T>, SpectralError> {
    let n = lap.dim();
    let tol = T::eig_tolerance();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let null = lap.null_space();
    let free = n - null.len();
    let k = k.min(free);
    let mut found: Vec<(T, Vec<T>)> = Vec::new();
    let mut max_dim = (4 * k + 40).max(120).min(free);
    let mut stalls = 0;

    let locked_basis = |found: &[(T, Vec<T>)]| -> Vec<Vec<T>> {
        null.iter().cloned().chain(found.iter().map(|(_, v)| v.clone())).collect()
    };

    while found.len() < k {
        let basis = locked_basis(&found);
        let want = k - found.len();
        let dim = max_dim.min(n - basis.len());
        let pairs = lanczos_sweep(lap, &basis, want, dim, tol, &mut rng)
            .ok_or_else(|| SpectralError::NotConverged("Krylov space exhausted".into()))?;
        if pairs.values.is_empty() {
            stalls += 1;
            if stalls > 8 || max_dim >= free {
                return Err(SpectralError::NotConverged(format!(
                    "{} of {k} eigenpairs after {stalls} stalled sweeps",
                    found.len()
                )));
            }
            max_dim = (max_dim * 2).min(free);
            continue;
        }
        found.extend(pairs.values.into_iter().zip(pairs.vectors));
        sort_found(&mut found);
    }

    // Completeness pass: a copy of a repeated eigenvalue can be invisible to
    // a single Krylov sequence. Search the complement once more and swap in
    // anything below the largest locked value.
    for _ in 0..(2 * k + 4) {
        let basis = locked_basis(&found);
        if basis.len() >= n {
            break;
        }
        let dim = max_dim.min(n - basis.len());
        let Some(pairs) = lanczos_sweep(lap, &basis, 1, dim, tol, &mut rng) else {
            break;
        };
        let Some(&candidate) = pairs.values.first() else {
            break;
        };
        let largest = found.last().map(|(v, _)| *v).unwrap_or(T::zero());
        if candidate >= largest - tol {
            break;
        }
        found.pop();
        found.push((candidate, pairs.vectors.into_iter().next().expect("vector for value")));
        sort_found(&mut found);
    }

    Ok(EigenPairs {
        values: found.iter().map(|(v, _)| *v).collect(),
        vectors: found.into_iter().map(|(_, v)| v).collect(),
    })
}

fn sort_found<T: Scalar>(found: &mut [(T, Vec<T>)]) {
    found.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite eigenvalues"));
}

/// Flips each vector so its largest-magnitude entry is positive; among
/// entries tied in magnitude the lowest index (lowest node id) decides.
pub fn fix_signs<T: Scalar>(vectors: &mut [Vec<T>]) {
    for v in vectors.iter_mut() {
        let max = v.iter().fold(T::zero(), |m, x| m.max(x.abs()));
        if max == T::zero() {
            continue;
        }
        let cutoff = max * (T::one() - T::of(1e-9));
        if let Some(pivot) = v.iter().find(|x| x.abs() >= cutoff) {
            if *pivot < T::zero() {
                v.iter_mut().for_each(|x| *x = -*x);
            }
        }
    }
}

/// Builds the Laplacian of the graph's non-isolated nodes. Returns it with
/// the node id of every row.
pub fn graph_laplacian<T: Scalar>(
    graph: &ChannelGraph,
    weighting: Weighting,
) -> (NormalizedLaplacian<T>, Vec<NodeId>) {
    let ids = graph.node_ids();
    let active: Vec<NodeId> = ids
        .into_iter()
        .filter(|id| !graph.adjacency(id).is_empty())
        .collect();
    let index: BTreeMap<&NodeId, usize> = active.iter().enumerate().map(|(i, id)| (id, i)).collect();
    let mut edges: BTreeMap<(usize, usize), T> = BTreeMap::new();
    for channel in graph.channels() {
        let a = index[&channel.node_a];
        let b = index[&channel.node_b];
        let key = (a.min(b), a.max(b));
        match weighting {
            Weighting::Unweighted => {
                edges.insert(key, T::one());
            }
            Weighting::Capacity => {
                *edges.entry(key).or_insert(T::zero()) += T::of(channel.capacity_sat as f64);
            }
        }
    }
    (NormalizedLaplacian::from_edges(active.len(), &edges), active)
}

/// Positional encodings for every node of `graph`.
pub fn laplacian_encodings<T: Scalar>(
    graph: &ChannelGraph,
    config: &SpectralConfig,
    seed: u64,
) -> Result<PositionalTable<T>, SpectralError> {
    let (lap, active) = graph_laplacian::<T>(graph, config.weighting);
    let zeros = lap.components().len();
    let max = lap.dim() - zeros;
    if config.k == 0 || config.k > max || config.k >= graph.node_count() {
        return Err(SpectralError::KOutOfRange { k: config.k, max });
    }
    let dense = match config.solver {
        Solver::Dense => true,
        Solver::Lanczos => false,
        Solver::Auto => lap.dim() < config.dense_threshold,
    };
    let mut pairs = if dense {
        dense_smallest(&lap, config.k)
    } else {
        lanczos_smallest(&lap, config.k, seed)?
    };
    if pairs.values.len() < config.k {
        return Err(SpectralError::NotConverged(format!(
            "found {} of {} eigenpairs",
            pairs.values.len(),
            config.k
        )));
    }
    fix_signs(&mut pairs.vectors);

    let mut vectors: BTreeMap<NodeId, Vec<T>> = graph
        .node_ids()
        .into_iter()
        .map(|id| (id, vec![T::zero(); config.k]))
        .collect();
    for (row, id) in active.iter().enumerate() {
        let z = vectors.get_mut(id).expect("active node present");
        for (c, vec) in pairs.vectors.iter().enumerate() {
            z[c] = vec[row];
        }
    }
    Ok(PositionalTable {
        k: config.k,
        vectors,
        eigenvalues: pairs.values,
    })
}

// ---------------------------------------------------------------------------
// Cache file: `pub_key,z_0,...,z_{k-1}`; an optional `lambda` row carries the
// eigenvalues.

const EIGENVALUE_ROW: &str = "lambda";

pub fn save_encodings<T: Scalar>(table: &PositionalTable<T>, path: impl AsRef<Path>) -> Result<(), SpectralError> {
    let path = path.as_ref();
    let err = |message: String| SpectralError::Cache {
        path: path.to_path_buf(),
        message,
    };
    let file = File::create(path).map_err(|e| err(e.to_string()))?;
    let mut out = BufWriter::new(file);
    let mut write = || -> std::io::Result<()> {
        let header: Vec<String> = std::iter::once("pub_key".to_string())
            .chain((0..table.k).map(|i| format!("z_{i}")))
            .collect();
        writeln!(out, "{}", header.join(","))?;
        if table.eigenvalues.len() == table.k {
            let vals: Vec<String> = table.eigenvalues.iter().map(|v| v.to_string()).collect();
            writeln!(out, "{EIGENVALUE_ROW},{}", vals.join(","))?;
        }
        for (id, z) in &table.vectors {
            let vals: Vec<String> = z.iter().map(|v| v.to_string()).collect();
            writeln!(out, "{id},{}", vals.join(","))?;
        }
        out.flush()
    };
    write().map_err(|e| err(e.to_string()))
}

pub fn load_encodings<T: Scalar>(path: impl AsRef<Path>) -> Result<PositionalTable<T>, SpectralError> {
    let path = path.as_ref();
    let err = |message: String| SpectralError::Cache {
        path: path.to_path_buf(),
        message,
    };
    let file = File::open(path).map_err(|e| err(e.to_string()))?;
    let mut reader = csv::Reader::from_reader(BufReader::new(file));
    let k = reader.headers().map_err(|e| err(e.to_string()))?.len().saturating_sub(1);
    let mut table = PositionalTable {
        k,
        vectors: BTreeMap::new(),
        eigenvalues: Vec::new(),
    };
    for record in reader.records() {
        let record = record.map_err(|e| err(e.to_string()))?;
        if record.len() != k + 1 {
            return Err(err(format!("row has {} columns, expected {}", record.len(), k + 1)));
        }
        let values = record
            .iter()
            .skip(1)
            .map(|s| s.parse::<T>().map_err(|_| err(format!("bad number {s:?}"))))
            .collect::<Result<Vec<T>, _>>()?;
        if &record[0] == EIGENVALUE_ROW {
            table.eigenvalues = values;
        } else {
            let id = NodeId::parse(&record[0]).map_err(|e| err(e.to_string()))?;
            table.vectors.insert(id, values);
        }
    }
    Ok(table)
}
