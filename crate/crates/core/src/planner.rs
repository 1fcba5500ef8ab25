//! Prioritized rigidity-constrained planning on the shared graph.
//!
//! Agents plan one at a time in a fixed priority order. For the agent at
//! priority rank i, four time-indexed node sets are maintained:
//!
//! * P (reachable): nodes reachable from the previous valid set by waiting or
//!   one graph edge, minus conflict exclusions and nodes occupied by
//!   already-planned agents,
//! * C (connected): nodes within sensing radius of min(2, i) prior agents,
//! * R (rigid): the subset of P and C whose addition to the prior agents'
//!   positions passes the minimum-rigidity test,
//! * V (valid): P for rank 0, P and C for rank 1, P and R for rank 2 and up.
//!
//! Paths are found by time-expanded A* restricted to V. If a valid set
//! empties while constructing an agent's sets, the preceding agent's state at
//! that time is recorded as a conflict and that agent replans avoiding it; a
//! planning failure backtracks one rank. Backtracking below rank 0 or
//! exhausting the replan budget fails the whole problem.

use std::collections::{BTreeSet, BinaryHeap};

use thiserror::Error;

use crate::environment::PlanningGraph;
use crate::geometry::Point;
use crate::rigidity::{
    check_rigidity, CacheKey, Configuration, MeasurementGraph, NoiseModel, RigidityCache,
    RigidityError, RigidityVerdict,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlanError {
    #[error("invalid planning problem: {0}")]
    InvalidProblem(String),
    #[error("agent {agent}: goal never became reachable within the horizon cap ({cap})")]
    HorizonExceeded { agent: usize, cap: usize },
    #[error("agent {agent}: no path through the valid sets")]
    NoPath { agent: usize },
    #[error(
        "planning failed at agent {agent} after {attempts} attempts ({conflicts} conflicts recorded): {reason}"
    )]
    PlanningFailed {
        agent: usize,
        attempts: usize,
        conflicts: usize,
        reason: String,
    },
    #[error(transparent)]
    Rigidity(#[from] RigidityError),
}

/// Fixed-universe bitset over planning-graph node ids. Iteration is always
/// ascending, which keeps every set operation in the planner deterministic.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeSet {
    words: Vec<u64>,
    universe: usize,
}

impl NodeSet {
    pub fn new(universe: usize) -> Self {
        NodeSet {
            words: vec![0; universe.div_ceil(64)],
            universe,
        }
    }

    pub fn singleton(universe: usize, id: usize) -> Self {
        let mut s = NodeSet::new(universe);
        s.insert(id);
        s
    }

    pub fn insert(&mut self, id: usize) {
        debug_assert!(id < self.universe);
        self.words[id / 64] |= 1u64 << (id % 64);
    }

    pub fn remove(&mut self, id: usize) {
        if id < self.universe {
            self.words[id / 64] &= !(1u64 << (id % 64));
        }
    }

    pub fn contains(&self, id: usize) -> bool {
        id < self.universe && self.words[id / 64] & (1u64 << (id % 64)) != 0
    }

    pub fn is_empty(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    pub fn len(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn intersection(&self, other: &NodeSet) -> NodeSet {
        debug_assert_eq!(self.universe, other.universe);
        NodeSet {
            words: self
                .words
                .iter()
                .zip(&other.words)
                .map(|(a, b)| a & b)
                .collect(),
            universe: self.universe,
        }
    }

    pub fn is_subset_of(&self, other: &NodeSet) -> bool {
        self.words
            .iter()
            .zip(&other.words)
            .all(|(a, b)| a & !b == 0)
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.words.iter().enumerate().flat_map(|(wi, &w)| {
            let mut bits = w;
            std::iter::from_fn(move || {
                if bits == 0 {
                    None
                } else {
                    let b = bits.trailing_zeros() as usize;
                    bits &= bits - 1;
                    Some(wi * 64 + b)
                }
            })
        })
    }
}

/// A complete prioritized planning instance over one shared graph.
#[derive(Debug, Clone)]
pub struct PlanningProblem<'a> {
    pub graph: &'a PlanningGraph,
    pub starts: Vec<usize>,
    pub goals: Vec<usize>,
    pub sensing_radius: f64,
    pub noise: NoiseModel,
    pub min_rigidity: f64,
    /// priority_order[rank] = agent id; agents plan in rank order.
    pub priority_order: Vec<usize>,
    pub horizon_cap: usize,
}

impl<'a> PlanningProblem<'a> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        graph: &'a PlanningGraph,
        starts: Vec<usize>,
        goals: Vec<usize>,
        sensing_radius: f64,
        noise: NoiseModel,
        min_rigidity: f64,
        priority_order: Option<Vec<usize>>,
        horizon_cap: Option<usize>,
    ) -> Result<Self, PlanError> {
        let n = starts.len();
        if n == 0 || goals.len() != n {
            return Err(PlanError::InvalidProblem(format!(
                "need matching non-empty starts/goals, got {} starts and {} goals",
                n,
                goals.len()
            )));
        }
        for &id in starts.iter().chain(&goals) {
            if id >= graph.node_count() {
                return Err(PlanError::InvalidProblem(format!(
                    "node id {id} not in graph"
                )));
            }
        }
        let mut sorted = starts.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != n {
            return Err(PlanError::InvalidProblem(
                "start nodes must be pairwise distinct".into(),
            ));
        }
        let mut sorted = goals.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != n {
            return Err(PlanError::InvalidProblem(
                "goal nodes must be pairwise distinct".into(),
            ));
        }
        let priority_order = priority_order.unwrap_or_else(|| (0..n).collect());
        let mut perm = priority_order.clone();
        perm.sort_unstable();
        if perm != (0..n).collect::<Vec<_>>() {
            return Err(PlanError::InvalidProblem(
                "priority_order must be a permutation of the agent ids".into(),
            ));
        }
        if sensing_radius <= 0.0 || !sensing_radius.is_finite() {
            return Err(PlanError::InvalidProblem(format!(
                "sensing radius {sensing_radius} invalid"
            )));
        }
        if min_rigidity < 0.0 || !min_rigidity.is_finite() {
            return Err(PlanError::InvalidProblem(format!(
                "min rigidity {min_rigidity} invalid"
            )));
        }
        if n < 3 && min_rigidity > 0.0 {
            return Err(PlanError::InvalidProblem(
                "a positive minimum rigidity needs at least 3 agents".into(),
            ));
        }
        let horizon_cap = horizon_cap.unwrap_or_else(|| 10 * graph.diameter_steps());
        let problem = PlanningProblem {
            graph,
            starts,
            goals,
            sensing_radius,
            noise,
            min_rigidity,
            priority_order,
            horizon_cap,
        };
        if n >= 3 {
            let verdict = problem.full_network_rigidity(&problem.starts)?;
            if !verdict.is_rigid {
                return Err(PlanError::InvalidProblem(format!(
                    "start configuration is not rigid: eigenvalue {:.6} < {:.6}",
                    verdict.rigidity_eigenvalue, problem.min_rigidity
                )));
            }
        }
        Ok(problem)
    }

    pub fn agent_count(&self) -> usize {
        self.starts.len()
    }

    fn full_network_rigidity(&self, nodes: &[usize]) -> Result<RigidityVerdict, PlanError> {
        let points: Vec<Point> = nodes.iter().map(|&id| self.graph.position(id)).collect();
        let config = Configuration::new(points)?;
        let graph = MeasurementGraph::from_sensing(&config, self.sensing_radius, self.noise);
        Ok(check_rigidity(&config, &graph, self.min_rigidity)?)
    }
}

/// The reachable/connected/rigid/valid sets of one agent, indexed by time.
/// Entries exist for every timestep covered during construction; C and R are
/// populated only for the ranks that compute them.
#[derive(Debug, Clone)]
pub struct ValidSetTable {
    pub reachable: Vec<NodeSet>,
    pub connected: Vec<NodeSet>,
    pub rigid: Vec<NodeSet>,
    pub valid: Vec<NodeSet>,
    /// First timestep at which the goal entered the reachable set.
    pub final_time: usize,
}

impl ValidSetTable {
    /// Last timestep the table covers (>= final_time; the table is extended
    /// to the prior agents' horizon so goal parking can be checked).
    pub fn end_time(&self) -> usize {
        self.valid.len() - 1
    }
}

/// A prior-agent state identified as the cause of an empty valid set. The
/// named agent must replan so that it avoids `node` at `time`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Conflict {
    pub agent: usize,
    pub node: usize,
    pub time: usize,
}

#[derive(Debug)]
pub enum ValidSetOutcome {
    Table(ValidSetTable),
    Conflict(Conflict),
}

fn node_at(trajectory: &[usize], t: usize) -> usize {
    // Agents park at their final node once their path ends.
    trajectory[t.min(trajectory.len() - 1)]
}

/// Nodes within sensing radius (inclusive) of at least min(2, rank) prior
/// agents at `time`, excluding the nodes those agents occupy. An agent in 2-D
/// needs two range measurements to be rigidly attached, so rank 1 requires
/// contact with one prior agent and later ranks with two.
pub fn connected_states(time: usize, priors: &[Vec<usize>], problem: &PlanningProblem) -> NodeSet {
    let rank = priors.len();
    let needed = rank.min(2);
    let r_sq = problem.sensing_radius * problem.sensing_radius;
    let occupied: Vec<usize> = priors.iter().map(|p| node_at(p, time)).collect();
    let prior_points: Vec<Point> = occupied
        .iter()
        .map(|&id| problem.graph.position(id))
        .collect();
    let mut set = NodeSet::new(problem.graph.node_count());
    for node in 0..problem.graph.node_count() {
        if occupied.contains(&node) {
            continue;
        }
        let pos = problem.graph.position(node);
        let in_range = prior_points
            .iter()
            .filter(|pp| pos.distance_sq(**pp) <= r_sq)
            .count();
        if in_range >= needed {
            set.insert(node);
        }
    }
    set
}

/// The subset of `candidates` whose addition to the prior agents' positions
/// at `time` keeps the network above the minimum rigidity. Candidates must
/// already be connectivity-filtered. Verdicts go through the cache when one
/// is supplied; the key is the node-id multiset, so repeats across timesteps
/// and replans are free.
pub fn rigid_states(
    time: usize,
    candidates: &NodeSet,
    priors: &[Vec<usize>],
    problem: &PlanningProblem,
    cache: Option<&RigidityCache>,
) -> NodeSet {
    let prior_nodes: Vec<usize> = priors.iter().map(|p| node_at(p, time)).collect();
    let mut out = NodeSet::new(problem.graph.node_count());
    for cand in candidates.iter() {
        let compute = || {
            let points: Vec<Point> = prior_nodes
                .iter()
                .chain(std::iter::once(&cand))
                .map(|&id| problem.graph.position(id))
                .collect();
            rigidity_verdict_for(points, problem)
        };
        let verdict = match cache {
            Some(cache) => {
                let key = CacheKey::new(
                    prior_nodes.iter().copied().chain(std::iter::once(cand)),
                    problem.min_rigidity,
                    problem.noise,
                    problem.sensing_radius,
                );
                cache.check(key, compute)
            }
            None => compute(),
        };
        if verdict.is_rigid {
            out.insert(cand);
        }
    }
    out
}

fn rigidity_verdict_for(points: Vec<Point>, problem: &PlanningProblem) -> RigidityVerdict {
    let threshold = problem.min_rigidity;
    let config = match Configuration::new(points) {
        Ok(c) => c,
        Err(_) => {
            return RigidityVerdict {
                rigidity_eigenvalue: 0.0,
                is_rigid: false,
                threshold,
            }
        }
    };
    let graph = MeasurementGraph::from_sensing(&config, problem.sensing_radius, problem.noise);
    // A solver failure is treated as non-rigid: the planner just avoids the
    // state instead of crashing.
    check_rigidity(&config, &graph, threshold).unwrap_or(RigidityVerdict {
        rigidity_eigenvalue: 0.0,
        is_rigid: false,
        threshold,
    })
}

/// Builds the set table for the agent at priority `rank` given the planned
/// trajectories of ranks 0..rank. Iterates until the goal enters P (then on
/// to the priors' horizon so goal parking stays covered). Returns a conflict
/// naming the preceding agent's state if any valid set comes up empty.
pub fn construct_valid_sets(
    rank: usize,
    priors: &[Vec<usize>],
    conflicts: &BTreeSet<(usize, usize)>,
    problem: &PlanningProblem,
    cache: Option<&RigidityCache>,
) -> Result<ValidSetOutcome, PlanError> {
    debug_assert_eq!(priors.len(), rank);
    let agent = problem.priority_order[rank];
    let start = problem.starts[agent];
    let goal = problem.goals[agent];
    let n_nodes = problem.graph.node_count();
    let prior_horizon = priors.iter().map(|p| p.len() - 1).max().unwrap_or(0);

    let seed = NodeSet::singleton(n_nodes, start);
    let empty = NodeSet::new(n_nodes);
    let mut reachable = vec![seed.clone()];
    let mut valid = vec![seed.clone()];
    let mut connected = vec![if rank >= 1 {
        seed.clone()
    } else {
        empty.clone()
    }];
    let mut rigid = vec![if rank >= 2 {
        seed.clone()
    } else {
        empty.clone()
    }];

    let mut t = 0;
    let mut final_time: Option<usize> = None;
    loop {
        if final_time.is_none() && reachable[t].contains(goal) {
            final_time = Some(t);
        }
        if let Some(ft) = final_time {
            if t >= ft && t >= prior_horizon {
                break;
            }
        } else if t >= problem.horizon_cap {
            return Err(PlanError::HorizonExceeded {
                agent,
                cap: problem.horizon_cap,
            });
        }

        let next_t = t + 1;
        let mut p = valid[t].clone();
        for node in valid[t].iter() {
            for &nb in problem.graph.neighbors(node) {
                p.insert(nb);
            }
        }
        for &(node, time) in conflicts {
            if time == next_t {
                p.remove(node);
            }
        }
        for prior in priors {
            p.remove(node_at(prior, next_t));
        }

        let v = match rank {
            0 => {
                connected.push(empty.clone());
                rigid.push(empty.clone());
                p.clone()
            }
            1 => {
                let c = connected_states(next_t, priors, problem);
                let v = p.intersection(&c);
                connected.push(c);
                rigid.push(empty.clone());
                v
            }
            _ => {
                let c = connected_states(next_t, priors, problem);
                let candidates = p.intersection(&c);
                let r = rigid_states(next_t, &candidates, priors, problem, cache);
                let v = p.intersection(&r);
                connected.push(c);
                rigid.push(r);
                v
            }
        };
        reachable.push(p);

        if v.is_empty() {
            if rank == 0 {
                // Boxed in by its own conflict exclusions; nothing upstream to
                // blame, so surface it as a dead end.
                return Err(PlanError::NoPath { agent });
            }
            let prev_rank = rank - 1;
            return Ok(ValidSetOutcome::Conflict(Conflict {
                agent: problem.priority_order[prev_rank],
                node: node_at(&priors[prev_rank], next_t),
                time: next_t,
            }));
        }
        valid.push(v);
        t = next_t;
    }

    Ok(ValidSetOutcome::Table(ValidSetTable {
        reachable,
        connected,
        rigid,
        valid,
        final_time: final_time.expect("loop exits only once the goal is reachable"),
    }))
}

#[derive(Clone, Copy, PartialEq)]
struct OpenEntry {
    f: f64,
    h: f64,
    node: usize,
    time: usize,
    seq: u64,
}

impl Eq for OpenEntry {}

impl Ord for OpenEntry {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        // Reversed so the BinaryHeap pops the smallest f first; ties break on
        // smaller heuristic, then smaller node id, then insertion order.
        other
            .f
            .total_cmp(&self.f)
            .then_with(|| other.h.total_cmp(&self.h))
            .then_with(|| other.node.cmp(&self.node))
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

impl PartialOrd for OpenEntry {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

/// Time-expanded A* over the agent's valid sets: states are (node, t), moves
/// are waiting or one graph edge at unit cost per timestep, and the heuristic
/// is straight-line distance divided by the connection radius (admissible:
/// one step covers at most one connection radius). The trajectory must end on
/// the goal at a time from which the goal stays valid through the end of the
/// table, so that parking there cannot break later agents' constraints.
pub fn plan_single(
    rank: usize,
    table: &ValidSetTable,
    problem: &PlanningProblem,
) -> Result<Vec<usize>, PlanError> {
    let agent = problem.priority_order[rank];
    let start = problem.starts[agent];
    let goal = problem.goals[agent];
    let graph = problem.graph;
    let n_nodes = graph.node_count();
    let end = table.end_time();

    // valid_arrival[t]: the goal is valid at every timestep from t to the end.
    let mut valid_arrival = vec![false; end + 1];
    let mut ok = true;
    for (t, slot) in valid_arrival.iter_mut().enumerate().rev() {
        ok = ok && table.valid[t].contains(goal);
        *slot = ok;
    }

    let goal_pos = graph.position(goal);
    let h = |node: usize| graph.position(node).distance(goal_pos) / graph.connect_radius();

    let state = |time: usize, node: usize| time * n_nodes + node;
    let mut came_from = vec![usize::MAX; (end + 1) * n_nodes];
    let mut discovered = vec![false; (end + 1) * n_nodes];
    let mut open = BinaryHeap::new();
    let mut seq = 0u64;

    discovered[state(0, start)] = true;
    open.push(OpenEntry {
        f: h(start),
        h: h(start),
        node: start,
        time: 0,
        seq,
    });

    while let Some(entry) = open.pop() {
        if entry.node == goal && valid_arrival[entry.time] {
            let mut path = vec![goal];
            let mut t = entry.time;
            let mut node = entry.node;
            while t > 0 {
                node = came_from[state(t, node)];
                t -= 1;
                path.push(node);
            }
            path.reverse();
            return Ok(path);
        }
        if entry.time == end {
            continue;
        }
        let next_t = entry.time + 1;
        let mut try_push = |next: usize, seq: &mut u64| {
            if table.valid[next_t].contains(next) && !discovered[state(next_t, next)] {
                discovered[state(next_t, next)] = true;
                came_from[state(next_t, next)] = entry.node;
                *seq += 1;
                let hn = h(next);
                open.push(OpenEntry {
                    f: next_t as f64 + hn,
                    h: hn,
                    node: next,
                    time: next_t,
                    seq: *seq,
                });
            }
        };
        try_push(entry.node, &mut seq);
        for &nb in graph.neighbors(entry.node) {
            try_push(nb, &mut seq);
        }
    }
    Err(PlanError::NoPath { agent })
}

/// One agent's planned path each padded to the common horizon; index is the
/// agent id (not the priority rank).
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectorySet {
    paths: Vec<Vec<usize>>,
}

impl TrajectorySet {
    /// Builds from per-agent node paths, padding every path to the longest by
    /// repeating its last node.
    pub fn from_paths(mut paths: Vec<Vec<usize>>) -> Result<Self, PlanError> {
        if paths.is_empty() || paths.iter().any(|p| p.is_empty()) {
            return Err(PlanError::InvalidProblem(
                "trajectories must be non-empty".into(),
            ));
        }
        let horizon = paths.iter().map(|p| p.len()).max().unwrap();
        for p in &mut paths {
            let last = *p.last().unwrap();
            p.resize(horizon, last);
        }
        Ok(TrajectorySet { paths })
    }

    pub fn agent_count(&self) -> usize {
        self.paths.len()
    }

    /// Number of timesteps (makespan + 1).
    pub fn horizon(&self) -> usize {
        self.paths[0].len()
    }

    pub fn makespan(&self) -> usize {
        self.horizon() - 1
    }

    pub fn path(&self, agent: usize) -> &[usize] {
        &self.paths[agent]
    }

    pub fn node_at(&self, agent: usize, t: usize) -> usize {
        self.paths[agent][t]
    }

    /// Continuous positions of every agent over time.
    pub fn positions(&self, graph: &PlanningGraph) -> crate::localizer::PathSet {
        crate::localizer::PathSet::new(
            self.paths
                .iter()
                .map(|p| p.iter().map(|&id| graph.position(id)).collect())
                .collect(),
        )
        .expect("padded trajectories have equal lengths")
    }
}

/// Options for the priority loop.
#[derive(Debug, Clone, Copy)]
pub struct PlanOptions {
    pub use_cache: bool,
    /// Replanning attempts allowed per agent before giving up.
    pub replan_budget: usize,
}

impl Default for PlanOptions {
    fn default() -> Self {
        PlanOptions {
            use_cache: true,
            replan_budget: 50,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct PlanStats {
    pub conflicts: Vec<Conflict>,
    /// Planning attempts per priority rank.
    pub attempts: Vec<usize>,
    pub cache_hits: u64,
    pub cache_misses: u64,
}

impl PlanStats {
    pub fn cache_hit_rate(&self) -> f64 {
        let total = self.cache_hits + self.cache_misses;
        if total == 0 {
            0.0
        } else {
            self.cache_hits as f64 / total as f64
        }
    }
}

#[derive(Debug, Clone)]
pub struct PlanOutcome {
    pub trajectories: TrajectorySet,
    pub stats: PlanStats,
}

/// Runs the full priority loop: plan each agent in rank order, construct the
/// next agent's valid sets, record conflicts and replan, backtrack on
/// failure. The returned trajectory set is padded to the common horizon and
/// has passed full-network validation (collisions, moves, rigidity at every
/// timestep); a validation failure is reported as `PlanningFailed`, never as
/// a bad trajectory set.
pub fn plan_all(problem: &PlanningProblem, options: PlanOptions) -> Result<PlanOutcome, PlanError> {
    let n = problem.agent_count();
    let cache = options.use_cache.then(RigidityCache::new);
    let mut conflict_sets: Vec<BTreeSet<(usize, usize)>> = vec![BTreeSet::new(); n];
    let mut ranked_paths: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut stats = PlanStats {
        attempts: vec![0; n],
        ..Default::default()
    };

    let fail = |rank: usize, stats: &PlanStats, reason: String| PlanError::PlanningFailed {
        agent: problem.priority_order[rank],
        attempts: stats.attempts[rank],
        conflicts: stats.conflicts.len(),
        reason,
    };

    let mut rank = 0;
    loop {
        if stats.attempts[rank] >= options.replan_budget {
            return Err(fail(rank, &stats, "replan budget exhausted".into()));
        }
        stats.attempts[rank] += 1;

        let outcome = construct_valid_sets(
            rank,
            &ranked_paths[..rank],
            &conflict_sets[rank],
            problem,
            cache.as_ref(),
        );
        match outcome {
            Err(PlanError::HorizonExceeded { .. }) | Err(PlanError::NoPath { .. }) => {
                if rank == 0 {
                    return Err(fail(
                        0,
                        &stats,
                        "no feasible path for the first agent".into(),
                    ));
                }
                rank -= 1;
            }
            Err(e) => return Err(e),
            Ok(ValidSetOutcome::Conflict(conflict)) => {
                stats.conflicts.push(conflict);
                debug_assert!(rank >= 1);
                conflict_sets[rank - 1].insert((conflict.node, conflict.time));
                rank -= 1;
            }
            Ok(ValidSetOutcome::Table(table)) => match plan_single(rank, &table, problem) {
                Err(PlanError::NoPath { .. }) => {
                    if rank == 0 {
                        return Err(fail(
                            0,
                            &stats,
                            "no feasible path for the first agent".into(),
                        ));
                    }
                    rank -= 1;
                }
                Err(e) => return Err(e),
                Ok(path) => {
                    ranked_paths[rank] = path;
                    if rank + 1 == n {
                        break;
                    }
                    rank += 1;
                    // Conflicts only constrain the backtracking episode that
                    // created them; entering an agent afresh clears its slate.
                    conflict_sets[rank].clear();
                }
            },
        }
    }

    if let Some(cache) = &cache {
        stats.cache_hits = cache.hits();
        stats.cache_misses = cache.misses();
    }

    let mut by_agent = vec![Vec::new(); n];
    for (rank, path) in ranked_paths.into_iter().enumerate() {
        by_agent[problem.priority_order[rank]] = path;
    }
    let trajectories = TrajectorySet::from_paths(by_agent)?;

    let report = validate_solution(&trajectories, problem);
    if !report.passed() {
        return Err(PlanError::PlanningFailed {
            agent: problem.priority_order[n - 1],
            attempts: stats.attempts.iter().sum(),
            conflicts: stats.conflicts.len(),
            reason: format!("final validation failed: {}", report.summary()),
        });
    }

    Ok(PlanOutcome {
        trajectories,
        stats,
    })
}

/// Per-timestep audit of a trajectory set: vertex collisions, moves that are
/// neither waits nor graph edges, and the full-network rigidity eigenvalue
/// against the minimum.
#[derive(Debug, Clone)]
pub struct ValidationReport {
    /// (time, node, first agent, second agent)
    pub vertex_collisions: Vec<(usize, usize, usize, usize)>,
    /// (time of arrival, agent, from node, to node)
    pub invalid_moves: Vec<(usize, usize, usize, usize)>,
    /// Full-network rigidity eigenvalue per timestep.
    pub rigidity: Vec<f64>,
    pub rigid_flags: Vec<bool>,
    pub min_rigidity: f64,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.vertex_collisions.is_empty()
            && self.invalid_moves.is_empty()
            && self.rigid_flags.iter().all(|&f| f)
    }

    pub fn percent_rigid(&self) -> f64 {
        if self.rigid_flags.is_empty() {
            return 100.0;
        }
        100.0 * self.rigid_flags.iter().filter(|&&f| f).count() as f64
            / self.rigid_flags.len() as f64
    }

    pub fn summary(&self) -> String {
        format!(
            "{} vertex collisions, {} invalid moves, {:.1}% rigid timesteps",
            self.vertex_collisions.len(),
            self.invalid_moves.len(),
            self.percent_rigid()
        )
    }
}

pub fn validate_solution(
    trajectories: &TrajectorySet,
    problem: &PlanningProblem,
) -> ValidationReport {
    let n = trajectories.agent_count();
    let horizon = trajectories.horizon();
    let mut vertex_collisions = Vec::new();
    let mut invalid_moves = Vec::new();
    let mut rigidity = Vec::with_capacity(horizon);
    let mut rigid_flags = Vec::with_capacity(horizon);

    for t in 0..horizon {
        for a in 0..n {
            for b in (a + 1)..n {
                if trajectories.node_at(a, t) == trajectories.node_at(b, t) {
                    vertex_collisions.push((t, trajectories.node_at(a, t), a, b));
                }
            }
        }
        if t > 0 {
            for a in 0..n {
                let from = trajectories.node_at(a, t - 1);
                let to = trajectories.node_at(a, t);
                if from != to && !problem.graph.neighbors(from).contains(&to) {
                    invalid_moves.push((t, a, from, to));
                }
            }
        }
        let nodes: Vec<usize> = (0..n).map(|a| trajectories.node_at(a, t)).collect();
        let verdict = full_rigidity_at(&nodes, problem);
        rigidity.push(verdict.rigidity_eigenvalue);
        rigid_flags.push(verdict.is_rigid);
    }

    ValidationReport {
        vertex_collisions,
        invalid_moves,
        rigidity,
        rigid_flags,
        min_rigidity: problem.min_rigidity,
    }
}

fn full_rigidity_at(nodes: &[usize], problem: &PlanningProblem) -> RigidityVerdict {
    if nodes.len() < 3 {
        // A pair or singleton has no rigidity eigenvalue; only a zero
        // threshold can accept it.
        return RigidityVerdict {
            rigidity_eigenvalue: 0.0,
            is_rigid: 0.0 >= problem.min_rigidity,
            threshold: problem.min_rigidity,
        };
    }
    let points: Vec<Point> = nodes.iter().map(|&id| problem.graph.position(id)).collect();
    rigidity_verdict_for(points, problem)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::{build_planning_graph, Bounds, Workspace};
    use crate::rigidity::NoiseModel;

    fn open_graph(x_max: f64, y_max: f64, radius: f64) -> crate::environment::PlanningGraph {
        let ws = Workspace::open(Bounds::new(0.0, 0.0, x_max, y_max).unwrap());
        build_planning_graph(&ws, 1.0, radius).unwrap()
    }

    fn node(graph: &PlanningGraph, x: f64, y: f64) -> usize {
        graph
            .find_node(Point::new(x, y))
            .unwrap_or_else(|| panic!("no node at ({x}, {y})"))
    }

    fn sigma1() -> NoiseModel {
        NoiseModel::additive(1.0).unwrap()
    }

    #[test]
    fn corner_valid_set_after_one_step() {
        let graph = open_graph(4.0, 4.0, 2.0);
        let start = node(&graph, 0.0, 0.0);
        let goal = node(&graph, 4.0, 4.0);
        let problem = PlanningProblem::new(
            &graph,
            vec![start],
            vec![goal],
            2.0,
            sigma1(),
            0.0,
            None,
            None,
        )
        .unwrap();
        let outcome = construct_valid_sets(0, &[], &BTreeSet::new(), &problem, None).unwrap();
        let table = match outcome {
            ValidSetOutcome::Table(t) => t,
            ValidSetOutcome::Conflict(c) => panic!("unexpected conflict {c:?}"),
        };
        // Corner plus the five grid nodes within distance 2.
        assert_eq!(table.valid[1].len(), 6);
        for (x, y) in [
            (0.0, 0.0),
            (1.0, 0.0),
            (0.0, 1.0),
            (1.0, 1.0),
            (2.0, 0.0),
            (0.0, 2.0),
        ] {
            assert!(
                table.valid[1].contains(node(&graph, x, y)),
                "missing ({x}, {y})"
            );
        }
    }

    #[test]
    fn connected_states_disc_excludes_occupied() {
        let graph = open_graph(4.0, 4.0, 2.0);
        let center = node(&graph, 2.0, 2.0);
        let problem = PlanningProblem::new(
            &graph,
            vec![center, node(&graph, 1.0, 1.0)],
            vec![node(&graph, 3.0, 3.0), node(&graph, 0.0, 0.0)],
            2.0,
            sigma1(),
            0.0,
            None,
            None,
        )
        .unwrap();
        let priors = vec![vec![center]];
        let c = connected_states(1, &priors, &problem);
        // 13 grid nodes inside the radius-2 disc, minus the occupied center.
        assert_eq!(c.len(), 12);
        assert!(!c.contains(center));
        // Boundary inclusive: (4, 2) is exactly 2 away.
        assert!(c.contains(node(&graph, 4.0, 2.0)));
    }

    #[test]
    fn connected_states_requires_two_priors_for_rank_two() {
        let graph = open_graph(12.0, 1.0, 2.0);
        let a = node(&graph, 0.0, 0.0);
        let b = node(&graph, 10.0, 0.0);
        let problem = PlanningProblem::new(
            &graph,
            vec![a, b, node(&graph, 5.0, 0.0)],
            vec![a, b, node(&graph, 5.0, 0.0)]
                .into_iter()
                .rev()
                .collect::<Vec<_>>(),
            2.0,
            sigma1(),
            0.0,
            None,
            None,
        )
        .unwrap();
        let priors = vec![vec![a], vec![b]];
        let c = connected_states(1, &priors, &problem);
        assert!(
            c.is_empty(),
            "no node can range to agents 10 apart at radius 2"
        );
    }

    #[test]
    fn rigid_states_accepts_triangles_rejects_collinear() {
        let graph = open_graph(4.0, 4.0, 2.0);
        let p0 = node(&graph, 0.0, 0.0);
        let p1 = node(&graph, 1.0, 0.0);
        let triangle_cand = node(&graph, 0.0, 1.0);
        let collinear_cand = node(&graph, 2.0, 0.0);
        let problem = PlanningProblem::new(
            &graph,
            vec![p0, p1, triangle_cand],
            vec![
                node(&graph, 4.0, 4.0),
                node(&graph, 3.0, 4.0),
                node(&graph, 4.0, 3.0),
            ],
            2.0,
            sigma1(),
            0.1,
            None,
            None,
        )
        .unwrap();
        let priors = vec![vec![p0], vec![p1]];
        let mut candidates = NodeSet::new(graph.node_count());
        candidates.insert(triangle_cand);
        candidates.insert(collinear_cand);
        let r = rigid_states(0, &candidates, &priors, &problem, None);
        assert!(r.contains(triangle_cand));
        assert!(!r.contains(collinear_cand));

        let empty = NodeSet::new(graph.node_count());
        assert!(rigid_states(0, &empty, &priors, &problem, None).is_empty());
    }

    #[test]
    fn conflict_exclusions_remove_reachable_nodes() {
        let graph = open_graph(4.0, 4.0, 2.0);
        let start = node(&graph, 0.0, 0.0);
        let goal = node(&graph, 4.0, 0.0);
        let blocked = node(&graph, 2.0, 0.0);
        let problem = PlanningProblem::new(
            &graph,
            vec![start],
            vec![goal],
            2.0,
            sigma1(),
            0.0,
            None,
            None,
        )
        .unwrap();
        let mut conflicts = BTreeSet::new();
        conflicts.insert((blocked, 3usize));
        let outcome = construct_valid_sets(0, &[], &conflicts, &problem, None).unwrap();
        let table = match outcome {
            ValidSetOutcome::Table(t) => t,
            _ => panic!("expected table"),
        };
        if table.reachable.len() > 3 {
            assert!(!table.reachable[3].contains(blocked));
        }
        // Unconstrained timesteps still reach it.
        assert!(table.reachable[1].contains(blocked));
    }

    #[test]
    fn plan_single_dashes_across_the_grid() {
        let graph = open_graph(4.0, 4.0, 2.0);
        let start = node(&graph, 0.0, 0.0);
        let goal = node(&graph, 4.0, 0.0);
        let problem = PlanningProblem::new(
            &graph,
            vec![start],
            vec![goal],
            2.0,
            sigma1(),
            0.0,
            None,
            None,
        )
        .unwrap();
        let table = match construct_valid_sets(0, &[], &BTreeSet::new(), &problem, None).unwrap() {
            ValidSetOutcome::Table(t) => t,
            _ => panic!("expected table"),
        };
        let path = plan_single(0, &table, &problem).unwrap();
        assert_eq!(path.len(), 3, "two 2-unit steps: {path:?}");
        assert_eq!(path[0], start);
        assert_eq!(path[1], node(&graph, 2.0, 0.0));
        assert_eq!(path[2], goal);
    }

    #[test]
    fn plan_single_start_equals_goal() {
        let graph = open_graph(4.0, 4.0, 2.0);
        let start = node(&graph, 2.0, 2.0);
        let problem = PlanningProblem::new(
            &graph,
            vec![start],
            vec![start],
            2.0,
            sigma1(),
            0.0,
            None,
            None,
        )
        .unwrap();
        let table = match construct_valid_sets(0, &[], &BTreeSet::new(), &problem, None).unwrap() {
            ValidSetOutcome::Table(t) => t,
            _ => panic!("expected table"),
        };
        assert_eq!(plan_single(0, &table, &problem).unwrap(), vec![start]);
    }

    #[test]
    fn unreachable_goal_exceeds_horizon() {
        // A rank-1 agent tethered to a parked prior can never reach a far goal.
        let graph = open_graph(12.0, 1.0, 2.0);
        let a0 = node(&graph, 0.0, 0.0);
        let start = node(&graph, 1.0, 0.0);
        let goal = node(&graph, 10.0, 0.0);
        let problem = PlanningProblem::new(
            &graph,
            vec![a0, start],
            vec![a0, goal],
            2.0,
            sigma1(),
            0.0,
            None,
            Some(40),
        )
        .unwrap();
        let priors = vec![vec![a0]];
        let err = construct_valid_sets(1, &priors, &BTreeSet::new(), &problem, None).unwrap_err();
        assert!(matches!(err, PlanError::HorizonExceeded { .. }));
    }

    #[test]
    fn goal_reachable_but_never_valid_is_no_path() {
        // Prior parks at (0,0); the rank-1 agent's goal at (3,0) is reachable
        // through P but lies outside the sensing disc, so it never enters V.
        let graph = open_graph(4.0, 1.0, 2.0);
        let a0 = node(&graph, 0.0, 0.0);
        let start = node(&graph, 1.0, 0.0);
        let goal = node(&graph, 3.0, 0.0);
        let problem = PlanningProblem::new(
            &graph,
            vec![a0, start],
            vec![a0, goal],
            2.0,
            sigma1(),
            0.0,
            None,
            Some(60),
        )
        .unwrap();
        let priors = vec![vec![a0]];
        let table =
            match construct_valid_sets(1, &priors, &BTreeSet::new(), &problem, None).unwrap() {
                ValidSetOutcome::Table(t) => t,
                ValidSetOutcome::Conflict(c) => panic!("unexpected conflict {c:?}"),
            };
        assert!(matches!(
            plan_single(1, &table, &problem),
            Err(PlanError::NoPath { .. })
        ));
    }

    #[test]
    fn degenerate_problem_returns_trivial_trajectories() {
        let graph = open_graph(4.0, 4.0, 2.0);
        let square = [
            node(&graph, 1.0, 1.0),
            node(&graph, 2.0, 1.0),
            node(&graph, 1.0, 2.0),
            node(&graph, 2.0, 2.0),
        ];
        let problem = PlanningProblem::new(
            &graph,
            square.to_vec(),
            square.to_vec(),
            2.0,
            sigma1(),
            0.1,
            None,
            None,
        )
        .unwrap();
        let outcome = plan_all(&problem, PlanOptions::default()).unwrap();
        assert_eq!(outcome.trajectories.horizon(), 1);
        assert!(outcome.stats.conflicts.is_empty());
        assert!(validate_solution(&outcome.trajectories, &problem).passed());
    }

    #[test]
    fn small_formation_march_is_sound_and_deterministic() {
        let graph = open_graph(8.0, 2.0, 2.0);
        let starts = vec![
            node(&graph, 0.0, 0.0),
            node(&graph, 1.0, 1.0),
            node(&graph, 0.0, 2.0),
        ];
        let goals = vec![
            node(&graph, 8.0, 0.0),
            node(&graph, 7.0, 1.0),
            node(&graph, 8.0, 2.0),
        ];
        let problem = PlanningProblem::new(
            &graph,
            starts.clone(),
            goals.clone(),
            3.0,
            sigma1(),
            0.1,
            None,
            None,
        )
        .unwrap();
        let a = plan_all(&problem, PlanOptions::default()).unwrap();
        let b = plan_all(&problem, PlanOptions::default()).unwrap();
        assert_eq!(a.trajectories, b.trajectories);

        let report = validate_solution(&a.trajectories, &problem);
        assert!(report.passed(), "{}", report.summary());
        assert_eq!(report.percent_rigid(), 100.0);
        for (agent, &goal) in goals.iter().enumerate() {
            assert_eq!(*a.trajectories.path(agent).last().unwrap(), goal);
            assert_eq!(a.trajectories.path(agent)[0], starts[agent]);
        }
    }

    #[test]
    fn eq3_case_split_holds_on_constructed_tables() {
        let graph = open_graph(8.0, 2.0, 2.0);
        let starts = vec![
            node(&graph, 0.0, 0.0),
            node(&graph, 1.0, 1.0),
            node(&graph, 0.0, 2.0),
        ];
        let goals = vec![
            node(&graph, 8.0, 0.0),
            node(&graph, 7.0, 1.0),
            node(&graph, 8.0, 2.0),
        ];
        let problem =
            PlanningProblem::new(&graph, starts, goals, 3.0, sigma1(), 0.1, None, None).unwrap();

        let mut priors: Vec<Vec<usize>> = Vec::new();
        for rank in 0..3 {
            let table = match construct_valid_sets(rank, &priors, &BTreeSet::new(), &problem, None)
                .unwrap()
            {
                ValidSetOutcome::Table(t) => t,
                ValidSetOutcome::Conflict(c) => panic!("unexpected conflict {c:?}"),
            };
            let agent = problem.priority_order[rank];
            assert_eq!(table.valid[0].len(), 1);
            assert!(table.valid[0].contains(problem.starts[agent]));
            for t in 0..=table.end_time() {
                assert!(table.rigid[t].is_subset_of(&table.connected[t]) || rank < 2);
                let expect = match rank {
                    0 => table.reachable[t].clone(),
                    1 => table.reachable[t].intersection(&table.connected[t]),
                    _ => table.reachable[t].intersection(&table.rigid[t]),
                };
                if t > 0 {
                    assert_eq!(table.valid[t], expect, "rank {rank} time {t}");
                }
            }
            priors.push(plan_single(rank, &table, &problem).unwrap());
        }
    }

    #[test]
    fn validate_solution_reports_collisions_and_flex() {
        let graph = open_graph(4.0, 1.0, 2.0);
        let a = node(&graph, 0.0, 0.0);
        let b = node(&graph, 1.0, 0.0);
        let c = node(&graph, 2.0, 0.0);
        let problem = PlanningProblem::new(
            &graph,
            vec![a, b, c],
            vec![a, b, c],
            2.0,
            sigma1(),
            0.0,
            None,
            None,
        )
        .unwrap();
        // Agents 0 and 1 both move onto node c at t=1; all three stay
        // collinear throughout.
        let trajectories =
            TrajectorySet::from_paths(vec![vec![a, c], vec![b, c], vec![c, c]]).unwrap();
        let report = validate_solution(&trajectories, &problem);
        assert!(!report.passed());
        assert!(!report.vertex_collisions.is_empty());
        assert!(
            report.rigidity.iter().all(|&v| v == 0.0),
            "collinear throughout"
        );
    }

    #[test]
    fn validate_solution_flags_invalid_moves() {
        let graph = open_graph(6.0, 1.0, 1.0);
        let a = node(&graph, 0.0, 0.0);
        let far = node(&graph, 5.0, 0.0);
        let problem =
            PlanningProblem::new(&graph, vec![a], vec![far], 2.0, sigma1(), 0.0, None, None)
                .unwrap();
        let trajectories = TrajectorySet::from_paths(vec![vec![a, far]]).unwrap();
        let report = validate_solution(&trajectories, &problem);
        assert_eq!(report.invalid_moves.len(), 1);
    }

    #[test]
    fn problem_rejects_nonrigid_start() {
        let graph = open_graph(6.0, 1.0, 2.0);
        let starts = vec![
            node(&graph, 0.0, 0.0),
            node(&graph, 1.0, 0.0),
            node(&graph, 2.0, 0.0),
        ];
        let err = PlanningProblem::new(
            &graph,
            starts.clone(),
            starts,
            2.0,
            sigma1(),
            0.1,
            None,
            None,
        )
        .unwrap_err();
        assert!(
            matches!(err, PlanError::InvalidProblem(_)),
            "collinear start must be rejected"
        );
    }

    #[test]
    fn node_set_operations() {
        let mut s = NodeSet::new(130);
        s.insert(0);
        s.insert(64);
        s.insert(129);
        assert_eq!(s.iter().collect::<Vec<_>>(), vec![0, 64, 129]);
        assert_eq!(s.len(), 3);
        s.remove(64);
        assert!(!s.contains(64));
        let mut t = NodeSet::new(130);
        t.insert(0);
        t.insert(5);
        assert_eq!(s.intersection(&t).iter().collect::<Vec<_>>(), vec![0]);
        assert!(NodeSet::new(130).is_empty());
    }
}
