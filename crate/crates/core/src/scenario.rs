//! Scenario files: a named workspace, grid parameters, the noise model, and
//! per-agent start/goal positions, stored as human-editable JSON.
//!
//! ```json
//! {
//!   "name": "corridor_6",
//!   "workspace": { "bounds": [0.0, 0.0, 14.0, 6.0], "obstacles": [[[4.0, 2.0], ...]] },
//!   "spacing": 1.0,
//!   "connect_radius": 2.0,
//!   "sensing_radius": 4.0,
//!   "noise": { "kind": "additive", "sigma": 0.1 },
//!   "min_rigidity": 0.1,
//!   "agents": [ { "start": [1.0, 1.0], "goal": [12.0, 1.0] }, ... ],
//!   "priority_order": [0, 1, 2],
//!   "horizon_cap": 400,
//!   "rrt": { "step_size": 1.0, "goal_bias": 0.15, "max_iterations": 5000 }
//! }
//! ```
//!
//! `min_rigidity` defaults to 0.1, `spacing` to 1.0, `priority_order` to the
//! listed order, and the RRT block to step size = spacing with a 0.15 goal
//! bias. Starts and goals must land exactly on grid sample points.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::environment::Workspace;
use crate::geometry::Point;
use crate::rigidity::NoiseModel;
use crate::rrt::RrtParams;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read scenario: {0}")]
    Io(#[from] std::io::Error),
    #[error("cannot parse scenario: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid scenario: {0}")]
    Validation(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentSpec {
    pub start: Point,
    pub goal: Point,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub workspace: Workspace,
    #[serde(default = "default_spacing")]
    pub spacing: f64,
    pub connect_radius: f64,
    pub sensing_radius: f64,
    pub noise: NoiseModel,
    #[serde(default = "default_min_rigidity")]
    pub min_rigidity: f64,
    pub agents: Vec<AgentSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub priority_order: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon_cap: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rrt: Option<RrtParams>,
}

fn default_spacing() -> f64 {
    1.0
}

fn default_min_rigidity() -> f64 {
    0.1
}

impl Scenario {
    pub fn agent_count(&self) -> usize {
        self.agents.len()
    }

    /// The effective priority order (listed order when unspecified).
    pub fn priority_order(&self) -> Vec<usize> {
        self.priority_order
            .clone()
            .unwrap_or_else(|| (0..self.agents.len()).collect())
    }

    /// RRT parameters with the documented defaults filled in: step size
    /// equals the grid spacing so one tree depth is one timestep.
    pub fn rrt_params(&self) -> RrtParams {
        self.rrt.unwrap_or(RrtParams {
            step_size: self.spacing,
            ..RrtParams::default()
        })
    }

    fn on_grid(&self, p: Point) -> bool {
        let b = self.workspace.bounds;
        let snap = |offset: f64| {
            let steps = (offset / self.spacing).round();
            (offset - steps * self.spacing).abs() <= 1e-9
        };
        b.contains(p) && snap(p.x - b.x_min) && snap(p.y - b.y_min)
    }

    /// Structural validation beyond what the field types enforce.
    pub fn validate(&self) -> Result<(), ScenarioError> {
        let fail = |msg: String| Err(ScenarioError::Validation(msg));
        if self.name.is_empty() {
            return fail("name must be non-empty".into());
        }
        if self.spacing <= 0.0 || !self.spacing.is_finite() {
            return fail(format!("spacing must be positive, got {}", self.spacing));
        }
        if self.connect_radius <= 0.0 || !self.connect_radius.is_finite() {
            return fail(format!(
                "connect_radius must be positive, got {}",
                self.connect_radius
            ));
        }
        if self.sensing_radius <= 0.0 || !self.sensing_radius.is_finite() {
            return fail(format!(
                "sensing_radius must be positive, got {}",
                self.sensing_radius
            ));
        }
        if self.min_rigidity < 0.0 || !self.min_rigidity.is_finite() {
            return fail(format!(
                "min_rigidity must be non-negative, got {}",
                self.min_rigidity
            ));
        }
        if self.agents.is_empty() {
            return fail("at least one agent is required".into());
        }
        if self.min_rigidity > 0.0 && self.agents.len() < 3 {
            return fail(format!(
                "a positive min_rigidity needs at least 3 agents, got {}",
                self.agents.len()
            ));
        }
        for (idx, agent) in self.agents.iter().enumerate() {
            if !self.on_grid(agent.start) {
                return fail(format!(
                    "agent {idx} start ({}, {}) is not a grid sample point",
                    agent.start.x, agent.start.y
                ));
            }
            if !self.on_grid(agent.goal) {
                return fail(format!(
                    "agent {idx} goal ({}, {}) is not a grid sample point",
                    agent.goal.x, agent.goal.y
                ));
            }
        }
        for (idx, a) in self.agents.iter().enumerate() {
            for (jdx, b) in self.agents.iter().enumerate().skip(idx + 1) {
                if a.start == b.start {
                    return fail(format!("agents {idx} and {jdx} share a start"));
                }
                if a.goal == b.goal {
                    return fail(format!("agents {idx} and {jdx} share a goal"));
                }
            }
        }
        if let Some(order) = &self.priority_order {
            let mut sorted = order.clone();
            sorted.sort_unstable();
            if sorted != (0..self.agents.len()).collect::<Vec<_>>() {
                return fail("priority_order must be a permutation of the agent indices".into());
            }
        }
        if let Some(cap) = self.horizon_cap {
            if cap == 0 {
                return fail("horizon_cap must be at least 1".into());
            }
        }
        Ok(())
    }
}

pub fn scenario_from_json(text: &str) -> Result<Scenario, ScenarioError> {
    let scenario: Scenario = serde_json::from_str(text)?;
    scenario.validate()?;
    Ok(scenario)
}

pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario, ScenarioError> {
    scenario_from_json(&std::fs::read_to_string(path)?)
}

pub fn save_scenario(scenario: &Scenario, path: impl AsRef<Path>) -> Result<(), ScenarioError> {
    scenario.validate()?;
    let mut text = serde_json::to_string_pretty(scenario)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}
