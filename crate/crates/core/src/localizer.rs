//! Trajectory evaluation by simulated range-only localization.
//!
//! At each timestep the true agent positions induce a sensing graph; noisy
//! range measurements are drawn for its edges, three agents are picked as
//! anchors with known positions, and the remaining positions are estimated by
//! anchored nonlinear least squares (Levenberg-Marquardt on the range
//! residuals). Localization error against ground truth is what ultimately
//! distinguishes rigid trajectories from flexible ones.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::geometry::Point;
use crate::linalg::cholesky_solve;
use crate::rigidity::{check_rigidity, Configuration, MeasurementGraph, NoiseKind, NoiseModel};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LocalizeError {
    #[error("anchored localization needs at least 3 anchors, got {0}")]
    InsufficientAnchors(usize),
    #[error("estimate diverged: residual norm {0:.3e}")]
    DivergedEstimate(f64),
    #[error("sample references node {0} outside the configuration")]
    BadSample(usize),
}

/// One simulated range measurement between nodes i and j.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RangeSample {
    pub i: usize,
    pub j: usize,
    pub measured: f64,
    pub truth: f64,
}

/// Draws one noisy range per measurement edge. Additive noise perturbs the
/// distance by N(0, sigma^2); multiplicative scales it by (1 + N(0, sigma^2)).
/// Negative draws clamp to zero. Deterministic per seed.
pub fn simulate_ranges(
    config: &Configuration,
    graph: &MeasurementGraph,
    seed: u64,
) -> Vec<RangeSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sigma = graph.noise().sigma();
    graph
        .edges()
        .iter()
        .map(|&(i, j)| {
            let truth = config.position(i).distance(config.position(j));
            let z: f64 = rng.sample(StandardNormal);
            let measured = match graph.noise().kind {
                NoiseKind::Additive => truth + sigma * z,
                NoiseKind::Multiplicative => truth * (1.0 + sigma * z),
            };
            RangeSample {
                i,
                j,
                measured: measured.max(0.0),
                truth,
            }
        })
        .collect()
}

/// Output of one anchored localization solve.
#[derive(Debug, Clone)]
pub struct LocalizationResult {
    pub estimated: Configuration,
    pub anchors: Vec<usize>,
    pub per_node_error: Vec<f64>,
    /// Mean Euclidean error over non-anchor nodes.
    pub mean_error: f64,
    /// Max Euclidean error over non-anchor nodes.
    pub max_error: f64,
    pub converged: bool,
}

const LM_MAX_ITERATIONS: usize = 200;
const LM_GRADIENT_TOL: f64 = 1e-8;
const LM_LAMBDA_INIT: f64 = 1e-3;
const LM_LAMBDA_MIN: f64 = 1e-12;
const LM_LAMBDA_MAX: f64 = 1e6;
const LM_DIVERGENCE_COST: f64 = 1e6;

/// Anchored nonlinear least squares: minimizes the squared range residuals
/// over the non-anchor positions, holding anchors at their true positions.
/// `truth` supplies the ground truth for the error report, `initial` the
/// starting guess for the free nodes.
pub fn localize(
    samples: &[RangeSample],
    anchors: &BTreeMap<usize, Point>,
    truth: &Configuration,
    initial: &Configuration,
) -> Result<LocalizationResult, LocalizeError> {
    if anchors.len() < 3 {
        return Err(LocalizeError::InsufficientAnchors(anchors.len()));
    }
    let n = truth.len();
    for s in samples {
        if s.i >= n || s.j >= n {
            return Err(LocalizeError::BadSample(s.i.max(s.j)));
        }
    }
    let free: Vec<usize> = (0..n).filter(|id| !anchors.contains_key(id)).collect();
    let index_of: BTreeMap<usize, usize> =
        free.iter().enumerate().map(|(k, &id)| (id, k)).collect();
    let dim = 2 * free.len();

    let mut positions: Vec<Point> = (0..n)
        .map(|id| {
            anchors
                .get(&id)
                .copied()
                .unwrap_or_else(|| initial.position(id))
        })
        .collect();

    let cost_of = |pos: &[Point]| -> f64 {
        samples
            .iter()
            .map(|s| {
                let r = pos[s.i].distance(pos[s.j]) - s.measured;
                r * r
            })
            .sum()
    };

    let mut lambda = LM_LAMBDA_INIT;
    let mut cost = cost_of(&positions);
    let mut converged = false;

    for _ in 0..LM_MAX_ITERATIONS {
        if cost > LM_DIVERGENCE_COST {
            return Err(LocalizeError::DivergedEstimate(cost));
        }
        if dim == 0 {
            converged = true;
            break;
        }
        // Normal equations J^T J and gradient J^T r built sample by sample;
        // each residual touches at most two free nodes.
        let mut jtj = vec![0.0; dim * dim];
        let mut jtr = vec![0.0; dim];
        for s in samples {
            let d = positions[s.i].distance(positions[s.j]).max(1e-12);
            let r = d - s.measured;
            let ux = (positions[s.i].x - positions[s.j].x) / d;
            let uy = (positions[s.i].y - positions[s.j].y) / d;
            let mut cols: Vec<(usize, f64)> = Vec::with_capacity(4);
            if let Some(&k) = index_of.get(&s.i) {
                cols.push((2 * k, ux));
                cols.push((2 * k + 1, uy));
            }
            if let Some(&k) = index_of.get(&s.j) {
                cols.push((2 * k, -ux));
                cols.push((2 * k + 1, -uy));
            }
            for &(a, va) in &cols {
                jtr[a] += va * r;
                for &(b, vb) in &cols {
                    jtj[a * dim + b] += va * vb;
                }
            }
        }
        let grad_norm = jtr.iter().map(|g| g * g).sum::<f64>().sqrt();
        if grad_norm < LM_GRADIENT_TOL {
            converged = true;
            break;
        }

        // Damped step: (J^T J + lambda I) delta = -J^T r.
        let mut a = jtj.clone();
        for k in 0..dim {
            a[k * dim + k] += lambda;
        }
        let mut delta: Vec<f64> = jtr.iter().map(|g| -g).collect();
        if !cholesky_solve(&mut a, &mut delta, dim) {
            lambda = (lambda * 10.0).min(LM_LAMBDA_MAX);
            continue;
        }
        let mut trial = positions.clone();
        for (k, &id) in free.iter().enumerate() {
            trial[id].x += delta[2 * k];
            trial[id].y += delta[2 * k + 1];
        }
        let trial_cost = cost_of(&trial);
        if trial_cost < cost {
            positions = trial;
            cost = trial_cost;
            lambda = (lambda / 10.0).max(LM_LAMBDA_MIN);
        } else {
            lambda = (lambda * 10.0).min(LM_LAMBDA_MAX);
        }
    }

    let estimated = Configuration::new(positions)
        .map_err(|_| LocalizeError::DivergedEstimate(f64::INFINITY))?;
    let per_node_error: Vec<f64> = (0..n)
        .map(|id| estimated.position(id).distance(truth.position(id)))
        .collect();
    let free_errors: Vec<f64> = free.iter().map(|&id| per_node_error[id]).collect();
    let mean_error = if free_errors.is_empty() {
        0.0
    } else {
        free_errors.iter().sum::<f64>() / free_errors.len() as f64
    };
    let max_error = free_errors.iter().fold(0.0f64, |m, &e| m.max(e));

    Ok(LocalizationResult {
        estimated,
        anchors: anchors.keys().copied().collect(),
        per_node_error,
        mean_error,
        max_error,
        converged,
    })
}

/// Continuous per-agent positions over a common horizon. Graph trajectories
/// convert into this for evaluation; the RRT baseline produces it directly.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSet {
    agents: Vec<Vec<Point>>,
}

impl PathSet {
    pub fn new(agents: Vec<Vec<Point>>) -> Result<Self, String> {
        if agents.is_empty() || agents[0].is_empty() {
            return Err("path set must contain at least one non-empty path".into());
        }
        let horizon = agents[0].len();
        if agents.iter().any(|a| a.len() != horizon) {
            return Err("all paths must share one horizon".into());
        }
        Ok(PathSet { agents })
    }

    /// Pads ragged paths to the longest by repeating final positions.
    pub fn from_ragged(mut agents: Vec<Vec<Point>>) -> Result<Self, String> {
        let horizon = agents.iter().map(|a| a.len()).max().unwrap_or(0);
        for a in &mut agents {
            let last = *a.last().ok_or("empty path")?;
            a.resize(horizon, last);
        }
        PathSet::new(agents)
    }

    pub fn agent_count(&self) -> usize {
        self.agents.len()
    }

    pub fn horizon(&self) -> usize {
        self.agents[0].len()
    }

    pub fn makespan(&self) -> usize {
        self.horizon() - 1
    }

    pub fn position(&self, agent: usize, t: usize) -> Point {
        self.agents[agent][t]
    }

    pub fn paths(&self) -> &[Vec<Point>] {
        &self.agents
    }

    pub fn config_at(&self, t: usize) -> Configuration {
        Configuration::new(self.agents.iter().map(|a| a[t]).collect())
            .expect("trajectory positions are finite and non-empty")
    }
}

/// Parameters for localization evaluation of a trajectory set.
#[derive(Debug, Clone, Copy)]
pub struct EvalParams {
    pub sensing_radius: f64,
    pub noise: NoiseModel,
    /// Independent noise/anchor realizations per timestep.
    pub num_seeds: u32,
    pub base_seed: u64,
}

#[derive(Debug, Clone, Default)]
pub struct EvaluationSummary {
    /// Mean error over all non-anchor nodes, timesteps and seeds.
    pub avg_error: f64,
    /// Max error over the same population.
    pub max_error: f64,
    /// Per-realization max errors, one per (timestep, seed), for seed-level
    /// statistics.
    pub per_run_max: Vec<f64>,
    /// (timestep, seed) pairs whose localization failed outright.
    pub failures: Vec<(usize, u32)>,
    pub samples_evaluated: u64,
}

fn mix_seed(base: u64, a: u64, b: u64) -> u64 {
    // splitmix64 over the packed inputs; cheap and stable.
    let mut z = base ^ a.wrapping_mul(0x9E3779B97F4A7C15) ^ b.wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

/// Per timestep and seed: build the sensing graph from true positions, draw
/// noisy ranges, pick 3 random anchors, localize from a truth-adjacent guess
/// (perturbation scale sigma), and accumulate non-anchor errors. Failures are
/// recorded and skipped rather than aborting the evaluation.
pub fn evaluate_trajectories(paths: &PathSet, params: &EvalParams) -> EvaluationSummary {
    let n = paths.agent_count();
    let sigma = params.noise.sigma();
    let mut summary = EvaluationSummary::default();
    let mut total = 0.0;
    let mut count = 0u64;

    for t in 0..paths.horizon() {
        let config = paths.config_at(t);
        let graph = MeasurementGraph::from_sensing(&config, params.sensing_radius, params.noise);
        for s in 0..params.num_seeds {
            let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(params.base_seed, t as u64, s as u64));
            let samples = simulate_ranges(&config, &graph, rng.gen());

            let mut anchors = BTreeMap::new();
            for idx in rand::seq::index::sample(&mut rng, n, 3.min(n)) {
                anchors.insert(idx, config.position(idx));
            }

            let initial = Configuration::new(
                (0..n)
                    .map(|id| {
                        let p = config.position(id);
                        let dx: f64 = rng.sample(StandardNormal);
                        let dy: f64 = rng.sample(StandardNormal);
                        Point::new(p.x + sigma * dx, p.y + sigma * dy)
                    })
                    .collect(),
            )
            .expect("perturbed guess is finite");

            match localize(&samples, &anchors, &config, &initial) {
                Ok(result) => {
                    for (id, &err) in result.per_node_error.iter().enumerate() {
                        if !anchors.contains_key(&id) {
                            total += err;
                            count += 1;
                            summary.max_error = summary.max_error.max(err);
                        }
                    }
                    summary.per_run_max.push(result.max_error);
                }
                Err(_) => summary.failures.push((t, s)),
            }
        }
    }
    summary.avg_error = if count == 0 {
        0.0
    } else {
        total / count as f64
    };
    summary.samples_evaluated = count;
    summary
}

/// Percentage of timesteps whose full-network rigidity eigenvalue meets the
/// minimum.
pub fn percent_rigid(
    paths: &PathSet,
    sensing_radius: f64,
    noise: NoiseModel,
    min_rigidity: f64,
) -> f64 {
    let horizon = paths.horizon();
    let mut rigid = 0usize;
    for t in 0..horizon {
        let config = paths.config_at(t);
        if config.len() < 3 {
            if min_rigidity <= 0.0 {
                rigid += 1;
            }
            continue;
        }
        let graph = MeasurementGraph::from_sensing(&config, sensing_radius, noise);
        match check_rigidity(&config, &graph, min_rigidity) {
            Ok(verdict) if verdict.is_rigid => rigid += 1,
            _ => {}
        }
    }
    100.0 * rigid as f64 / horizon as f64
}
