//! Network rigidity via the Fisher information matrix of a 2-D range network.
//!
//! Each range measurement between nodes i and j contributes one row to the
//! measurement matrix A; the Fisher information matrix is F = A^T A, positive
//! semidefinite by construction. In two dimensions F has three trivial zero
//! eigenvalues (the rigid-body translations and rotation), so the network
//! rigidity is the fourth-smallest eigenvalue: zero for an infinitesimally
//! flexible network, positive for a rigid one. A configuration is accepted by
//! the planner when that eigenvalue meets a minimum-rigidity threshold.

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Point;
use crate::linalg;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RigidityError {
    #[error("nodes {i} and {j} coincide; the range measurement is degenerate")]
    CoincidentNodes { i: usize, j: usize },
    #[error("matrix is not symmetric within tolerance")]
    NotSymmetric,
    #[error("rigidity eigenvalue needs at least 3 nodes, got {0}")]
    TooFewNodes(usize),
    #[error("configuration must be a non-empty list of finite positions")]
    InvalidConfiguration,
    #[error("noise sigma must be positive and finite, got {0}")]
    InvalidSigma(f64),
    #[error("edge ({i}, {j}) is invalid for a {n}-node configuration")]
    InvalidEdge { i: usize, j: usize, n: usize },
    #[error(transparent)]
    Linalg(#[from] linalg::LinalgError),
}

/// Node positions at one timestep; index is the node id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Configuration {
    positions: Vec<Point>,
}

impl Configuration {
    pub fn new(positions: Vec<Point>) -> Result<Self, RigidityError> {
        if positions.is_empty() || positions.iter().any(|p| !p.is_finite()) {
            return Err(RigidityError::InvalidConfiguration);
        }
        Ok(Configuration { positions })
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn position(&self, id: usize) -> Point {
        self.positions[id]
    }

    pub fn positions(&self) -> &[Point] {
        &self.positions
    }
}

/// Whether range noise is additive (sigma in length units) or multiplicative
/// (sigma dimensionless). The choice sets the exponent on edge length in the
/// measurement rows: alpha = 1 additive, 2 multiplicative.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseKind {
    Additive,
    Multiplicative,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawNoiseModel", into = "RawNoiseModel")]
pub struct NoiseModel {
    pub kind: NoiseKind,
    sigma: f64,
}

#[derive(Serialize, Deserialize)]
struct RawNoiseModel {
    kind: NoiseKind,
    sigma: f64,
}

impl TryFrom<RawNoiseModel> for NoiseModel {
    type Error = RigidityError;
    fn try_from(raw: RawNoiseModel) -> Result<Self, Self::Error> {
        NoiseModel::new(raw.kind, raw.sigma)
    }
}

impl From<NoiseModel> for RawNoiseModel {
    fn from(m: NoiseModel) -> Self {
        RawNoiseModel {
            kind: m.kind,
            sigma: m.sigma,
        }
    }
}

impl NoiseModel {
    pub fn new(kind: NoiseKind, sigma: f64) -> Result<Self, RigidityError> {
        if sigma <= 0.0 || !sigma.is_finite() {
            return Err(RigidityError::InvalidSigma(sigma));
        }
        Ok(NoiseModel { kind, sigma })
    }

    pub fn additive(sigma: f64) -> Result<Self, RigidityError> {
        NoiseModel::new(NoiseKind::Additive, sigma)
    }

    pub fn multiplicative(sigma: f64) -> Result<Self, RigidityError> {
        NoiseModel::new(NoiseKind::Multiplicative, sigma)
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// L^alpha with alpha = 1 (additive) or 2 (multiplicative).
    fn length_power(&self, len: f64) -> f64 {
        match self.kind {
            NoiseKind::Additive => len,
            NoiseKind::Multiplicative => len * len,
        }
    }
}

/// Undirected measurement edges over a configuration, all sharing one noise
/// model. Edges are stored as (i, j) with i < j, sorted and deduplicated.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementGraph {
    edges: Vec<(usize, usize)>,
    noise: NoiseModel,
}

impl MeasurementGraph {
    pub fn new(
        edges: impl IntoIterator<Item = (usize, usize)>,
        noise: NoiseModel,
        node_count: usize,
    ) -> Result<Self, RigidityError> {
        let mut normalized: Vec<(usize, usize)> = Vec::new();
        for (a, b) in edges {
            if a == b || a >= node_count || b >= node_count {
                return Err(RigidityError::InvalidEdge {
                    i: a,
                    j: b,
                    n: node_count,
                });
            }
            normalized.push((a.min(b), a.max(b)));
        }
        normalized.sort_unstable();
        normalized.dedup();
        Ok(MeasurementGraph {
            edges: normalized,
            noise,
        })
    }

    /// Edges induced by a sensing radius (inclusive boundary) over `config`.
    pub fn from_sensing(
        config: &Configuration,
        sensing_radius: f64,
        noise: NoiseModel,
    ) -> MeasurementGraph {
        MeasurementGraph {
            edges: sensing_edges(config, sensing_radius),
            noise,
        }
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn noise(&self) -> NoiseModel {
        self.noise
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }
}

/// All node pairs within the sensing radius of each other, boundary inclusive.
pub fn sensing_edges(config: &Configuration, sensing_radius: f64) -> Vec<(usize, usize)> {
    let n = config.len();
    let r_sq = sensing_radius * sensing_radius;
    let mut edges = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            if config.position(i).distance_sq(config.position(j)) <= r_sq {
                edges.push((i, j));
            }
        }
    }
    edges
}

/// One measurement's row of the matrix A: entries (dx, dy) at indices
/// (2i, 2i+1) and (-dx, -dy) at (2j, 2j+1), scaled by 1 / (sigma L^alpha).
pub fn fim_row(
    config: &Configuration,
    i: usize,
    j: usize,
    noise: NoiseModel,
) -> Result<Vec<f64>, RigidityError> {
    let n = config.len();
    if i == j || i >= n || j >= n {
        return Err(RigidityError::InvalidEdge { i, j, n });
    }
    let pi = config.position(i);
    let pj = config.position(j);
    let dx = pi.x - pj.x;
    let dy = pi.y - pj.y;
    let len = (dx * dx + dy * dy).sqrt();
    if len == 0.0 {
        return Err(RigidityError::CoincidentNodes { i, j });
    }
    let scale = 1.0 / (noise.sigma() * noise.length_power(len));
    let mut row = vec![0.0; 2 * n];
    row[2 * i] = dx * scale;
    row[2 * i + 1] = dy * scale;
    row[2 * j] = -dx * scale;
    row[2 * j + 1] = -dy * scale;
    Ok(row)
}

/// Dense symmetric 2n x 2n Fisher information matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct FisherMatrix {
    entries: Vec<f64>,
    node_count: usize,
}

impl FisherMatrix {
    pub fn dim(&self) -> usize {
        2 * self.node_count
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.entries[r * self.dim() + c]
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn eigenvalues(&self) -> Result<Vec<f64>, RigidityError> {
        Ok(linalg::symmetric_eigenvalues(&self.entries, self.dim())?)
    }
}

/// F = A^T A accumulated edge by edge. Each row touches only four entries, so
/// the outer product is applied on the 4x4 sub-block directly.
pub fn build_fim(
    config: &Configuration,
    graph: &MeasurementGraph,
) -> Result<FisherMatrix, RigidityError> {
    let n = config.len();
    let dim = 2 * n;
    let mut entries = vec![0.0; dim * dim];
    for &(i, j) in graph.edges() {
        if i >= n || j >= n {
            return Err(RigidityError::InvalidEdge { i, j, n });
        }
        let pi = config.position(i);
        let pj = config.position(j);
        let dx = pi.x - pj.x;
        let dy = pi.y - pj.y;
        let len = (dx * dx + dy * dy).sqrt();
        if len == 0.0 {
            return Err(RigidityError::CoincidentNodes { i, j });
        }
        let scale = 1.0 / (graph.noise().sigma() * graph.noise().length_power(len));
        let idx = [2 * i, 2 * i + 1, 2 * j, 2 * j + 1];
        let val = [dx * scale, dy * scale, -dx * scale, -dy * scale];
        for a in 0..4 {
            for b in 0..4 {
                entries[idx[a] * dim + idx[b]] += val[a] * val[b];
            }
        }
    }
    Ok(FisherMatrix {
        entries,
        node_count: n,
    })
}

/// Full real spectrum of a dense symmetric matrix, ascending.
///
/// Rejects input whose asymmetry exceeds 1e-9 relative to the largest entry.
pub fn eigenvalues_symmetric(matrix: &[f64], dim: usize) -> Result<Vec<f64>, RigidityError> {
    if matrix.len() != dim * dim {
        return Err(RigidityError::Linalg(linalg::LinalgError::ShapeMismatch {
            len: matrix.len(),
            dim,
        }));
    }
    let scale = matrix.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    for r in 0..dim {
        for c in (r + 1)..dim {
            if (matrix[r * dim + c] - matrix[c * dim + r]).abs() > 1e-9 * scale {
                return Err(RigidityError::NotSymmetric);
            }
        }
    }
    Ok(linalg::symmetric_eigenvalues(matrix, dim)?)
}

/// The fourth-smallest eigenvalue of the network's Fisher matrix, clamped to
/// zero within the PSD floating-point slack. Needs at least 3 nodes.
pub fn rigidity_eigenvalue(
    config: &Configuration,
    graph: &MeasurementGraph,
) -> Result<f64, RigidityError> {
    if config.len() < 3 {
        return Err(RigidityError::TooFewNodes(config.len()));
    }
    let fim = build_fim(config, graph)?;
    let eigenvalues = fim.eigenvalues()?;
    let lambda_max = eigenvalues.last().copied().unwrap_or(0.0);
    let value = eigenvalues[3];
    let tol = 1e-9 * lambda_max.max(1.0);
    if value < 0.0 {
        debug_assert!(value >= -tol, "PSD violation: eigenvalue {value}");
        Ok(0.0)
    } else {
        Ok(value)
    }
}

/// Outcome of a minimum-rigidity test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RigidityVerdict {
    pub rigidity_eigenvalue: f64,
    pub is_rigid: bool,
    pub threshold: f64,
}

/// Tests a configuration against a minimum-rigidity threshold. Coincident
/// nodes yield a non-rigid verdict rather than an error; the planner already
/// forbids co-located agents, so a degenerate measurement simply means the
/// configuration is unusable.
pub fn check_rigidity(
    config: &Configuration,
    graph: &MeasurementGraph,
    threshold: f64,
) -> Result<RigidityVerdict, RigidityError> {
    match rigidity_eigenvalue(config, graph) {
        Ok(value) => Ok(RigidityVerdict {
            rigidity_eigenvalue: value,
            is_rigid: value >= threshold,
            threshold,
        }),
        Err(RigidityError::CoincidentNodes { .. }) => Ok(RigidityVerdict {
            rigidity_eigenvalue: 0.0,
            is_rigid: 0.0 >= threshold,
            threshold,
        }),
        Err(e) => Err(e),
    }
}

/// Cache key for rigidity verdicts over planning-graph configurations.
///
/// Keys are exact: node ids are integers and the scalar parameters are hashed
/// by their bit patterns. The node multiset is stored sorted so permutations
/// of the same configuration hit the same entry (eigenvalues are invariant
/// under node relabeling).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CacheKey {
    nodes: Vec<u32>,
    threshold_bits: u64,
    sigma_bits: u64,
    kind: NoiseKind,
    radius_bits: u64,
}

impl CacheKey {
    pub fn new(
        node_ids: impl IntoIterator<Item = usize>,
        threshold: f64,
        noise: NoiseModel,
        sensing_radius: f64,
    ) -> CacheKey {
        let mut nodes: Vec<u32> = node_ids.into_iter().map(|id| id as u32).collect();
        nodes.sort_unstable();
        CacheKey {
            nodes,
            threshold_bits: threshold.to_bits(),
            sigma_bits: noise.sigma().to_bits(),
            kind: noise.kind,
            radius_bits: sensing_radius.to_bits(),
        }
    }
}

/// Shared rigidity-verdict cache. Most planner time goes into rigidity
/// checks, and the same candidate configurations recur across timesteps and
/// replanning episodes, so memoizing verdicts pays for itself quickly.
///
/// Concurrent read/insert is safe; values for equal keys are identical, so a
/// racing double-compute just wastes one evaluation (last write wins).
#[derive(Debug, Default)]
pub struct RigidityCache {
    map: Mutex<HashMap<CacheKey, RigidityVerdict>>,
    hits: AtomicU64,
    misses: AtomicU64,
}

impl RigidityCache {
    pub fn new() -> Self {
        Self::default()
    }

    /// Returns the stored verdict for `key`, or computes, stores and returns.
    pub fn check(
        &self,
        key: CacheKey,
        compute: impl FnOnce() -> RigidityVerdict,
    ) -> RigidityVerdict {
        if let Some(v) = self.map.lock().unwrap().get(&key) {
            self.hits.fetch_add(1, Ordering::Relaxed);
            return *v;
        }
        let verdict = compute();
        self.misses.fetch_add(1, Ordering::Relaxed);
        self.map.lock().unwrap().insert(key, verdict);
        verdict
    }

    pub fn hits(&self) -> u64 {
        self.hits.load(Ordering::Relaxed)
    }

    pub fn misses(&self) -> u64 {
        self.misses.load(Ordering::Relaxed)
    }

    pub fn hit_rate(&self) -> f64 {
        let h = self.hits() as f64;
        let m = self.misses() as f64;
        if h + m == 0.0 {
            0.0
        } else {
            h / (h + m)
        }
    }

    pub fn len(&self) -> usize {
        self.map.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
