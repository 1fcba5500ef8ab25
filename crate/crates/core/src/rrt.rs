//! Prioritized RRT baseline. Agents plan one at a time in continuous space
//! with a single constraint: no agent may come within half a step of an
//! already-planned agent at the same timestep. No rigidity or connectivity
//! awareness at all — this is the comparison method, and by module dependency
//! it cannot see the rigidity machinery.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::environment::Workspace;
use crate::geometry::Point;
use crate::localizer::PathSet;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RrtError {
    #[error("agent {agent}: RRT iteration budget ({budget}) exhausted before reaching the goal")]
    IterationBudgetExceeded { agent: usize, budget: usize },
    #[error("agent {agent}: start or goal is inside an obstacle")]
    InvalidEndpoint { agent: usize },
    #[error("invalid RRT parameters: {0}")]
    InvalidParams(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RrtParams {
    pub step_size: f64,
    pub goal_bias: f64,
    pub max_iterations: usize,
    #[serde(default)]
    pub seed: u64,
}

impl Default for RrtParams {
    fn default() -> Self {
        RrtParams {
            step_size: 1.0,
            goal_bias: 0.15,
            max_iterations: 5000,
            seed: 0,
        }
    }
}

impl RrtParams {
    fn validate(&self) -> Result<(), RrtError> {
        if self.step_size <= 0.0 || !self.step_size.is_finite() {
            return Err(RrtError::InvalidParams(format!(
                "step_size {}",
                self.step_size
            )));
        }
        if !(0.0..=1.0).contains(&self.goal_bias) {
            return Err(RrtError::InvalidParams(format!(
                "goal_bias {}",
                self.goal_bias
            )));
        }
        if self.max_iterations == 0 {
            return Err(RrtError::InvalidParams(
                "max_iterations must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

struct TreeNode {
    position: Point,
    parent: usize,
    depth: usize,
}

fn prior_position(prior: &[Point], t: usize) -> Point {
    prior[t.min(prior.len() - 1)]
}

/// True when some prior agent sits within step_size/2 of `p` at time `t`
/// (the discrete vertex-collision proxy).
fn collides_with_priors(p: Point, t: usize, priors: &[Vec<Point>], step_size: f64) -> bool {
    let r_sq = (step_size / 2.0) * (step_size / 2.0);
    priors
        .iter()
        .any(|prior| prior_position(prior, t).distance_sq(p) <= r_sq)
}

/// An agent parked at `p` from `from_depth` onward must stay clear of every
/// prior position at every later time, including priors still in transit.
fn parking_clear(p: Point, from_depth: usize, priors: &[Vec<Point>], step_size: f64) -> bool {
    let r_sq = (step_size / 2.0) * (step_size / 2.0);
    priors.iter().all(|prior| {
        let last = prior.len() - 1;
        (from_depth.min(last)..=last).all(|t| prior[t].distance_sq(p) > r_sq)
    })
}

/// Grows a tree from `start` until a node lands within one step of `goal`,
/// then walks the branch back. Tree depth is the timestep: each edge is one
/// step of at most `step_size`, so the trajectory timestamps line up with the
/// graph planner's unit timesteps. Deterministic for a fixed seed.
pub fn plan_rrt_single(
    agent: usize,
    priors: &[Vec<Point>],
    workspace: &Workspace,
    start: Point,
    goal: Point,
    params: &RrtParams,
) -> Result<Vec<Point>, RrtError> {
    params.validate()?;
    if workspace.point_blocked(start) || workspace.point_blocked(goal) {
        return Err(RrtError::InvalidEndpoint { agent });
    }
    if collides_with_priors(start, 0, priors, params.step_size) {
        return Err(RrtError::InvalidEndpoint { agent });
    }
    if start.distance(goal) == 0.0 && parking_clear(start, 0, priors, params.step_size) {
        return Ok(vec![start]);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let b = workspace.bounds;
    let mut nodes = vec![TreeNode {
        position: start,
        parent: usize::MAX,
        depth: 0,
    }];

    for _ in 0..params.max_iterations {
        let sample = if rng.gen::<f64>() < params.goal_bias {
            goal
        } else {
            Point::new(
                rng.gen_range(b.x_min..=b.x_max),
                rng.gen_range(b.y_min..=b.y_max),
            )
        };

        // Nearest tree node; ties resolve to the earliest node.
        let mut nearest = 0;
        let mut best = f64::INFINITY;
        for (idx, node) in nodes.iter().enumerate() {
            let d = node.position.distance_sq(sample);
            if d < best {
                best = d;
                nearest = idx;
            }
        }
        let from = nodes[nearest].position;
        let dist = from.distance(sample);
        if dist == 0.0 {
            continue;
        }
        let new_pos = if dist <= params.step_size {
            sample
        } else {
            let scale = params.step_size / dist;
            Point::new(
                from.x + (sample.x - from.x) * scale,
                from.y + (sample.y - from.y) * scale,
            )
        };
        let depth = nodes[nearest].depth + 1;
        if !b.contains(new_pos)
            || workspace.segment_blocked(from, new_pos)
            || collides_with_priors(new_pos, depth, priors, params.step_size)
        {
            continue;
        }
        nodes.push(TreeNode {
            position: new_pos,
            parent: nearest,
            depth,
        });
        let new_idx = nodes.len() - 1;

        if new_pos.distance(goal) <= params.step_size {
            // Try to finish with one more step onto the goal itself; the
            // agent parks there, so the spot must stay clear of every prior
            // for all later timesteps.
            let end_idx = if new_pos.distance(goal) == 0.0 {
                if !parking_clear(goal, depth, priors, params.step_size) {
                    continue;
                }
                new_idx
            } else if !workspace.segment_blocked(new_pos, goal)
                && parking_clear(goal, depth + 1, priors, params.step_size)
            {
                nodes.push(TreeNode {
                    position: goal,
                    parent: new_idx,
                    depth: depth + 1,
                });
                nodes.len() - 1
            } else {
                continue;
            };
            let mut path = Vec::new();
            let mut cursor = end_idx;
            while cursor != usize::MAX {
                path.push(nodes[cursor].position);
                cursor = nodes[cursor].parent;
            }
            path.reverse();
            return Ok(path);
        }
    }
    Err(RrtError::IterationBudgetExceeded {
        agent,
        budget: params.max_iterations,
    })
}

/// Plans every agent in order against the padded trajectories of the earlier
/// ones, then pads all paths to the common horizon. Per-agent seeds are
/// derived from the base seed so trees stay independent but reproducible.
pub fn plan_rrt_all(
    workspace: &Workspace,
    starts: &[Point],
    goals: &[Point],
    priority_order: &[usize],
    params: &RrtParams,
) -> Result<PathSet, RrtError> {
    params.validate()?;
    let mut planned: Vec<Vec<Point>> = Vec::with_capacity(starts.len());
    let mut by_agent: Vec<Vec<Point>> = vec![Vec::new(); starts.len()];
    for (rank, &agent) in priority_order.iter().enumerate() {
        let agent_params = RrtParams {
            seed: params
                .seed
                .wrapping_add((rank as u64).wrapping_mul(0x9E3779B97F4A7C15)),
            ..*params
        };
        let path = plan_rrt_single(
            agent,
            &planned,
            workspace,
            starts[agent],
            goals[agent],
            &agent_params,
        )?;
        planned.push(path.clone());
        by_agent[agent] = path;
    }
    PathSet::from_ragged(by_agent).map_err(RrtError::InvalidParams)
}
