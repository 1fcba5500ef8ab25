//! Experiment orchestration: run a scenario with either planner, evaluate the
//! trajectories, and report the metric columns (planning time, makespan,
//! localization errors, percent rigid) for side-by-side comparison.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::environment::{build_planning_graph, EnvironmentError, PlanningGraph};
use crate::geometry::Point;
use crate::localizer::{evaluate_trajectories, percent_rigid, EvalParams, PathSet};
use crate::planner::{plan_all, PlanError, PlanOptions, PlanStats, PlanningProblem, TrajectorySet};
use crate::rigidity::NoiseModel;
use crate::rrt::{plan_rrt_all, RrtError, RrtParams};
use crate::scenario::{Scenario, ScenarioError};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("invalid scenario environment: {0}")]
    Environment(#[from] EnvironmentError),
    #[error("invalid problem: {0}")]
    Validation(String),
    #[error("planning failed: {0}")]
    Planning(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl From<PlanError> for ExperimentError {
    fn from(e: PlanError) -> Self {
        match e {
            PlanError::InvalidProblem(msg) => ExperimentError::Validation(msg),
            other => ExperimentError::Planning(other.to_string()),
        }
    }
}

impl From<RrtError> for ExperimentError {
    fn from(e: RrtError) -> Self {
        match e {
            RrtError::InvalidParams(msg) => ExperimentError::Validation(msg),
            other => ExperimentError::Planning(other.to_string()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Rcgp,
    Rrt,
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Algorithm::Rcgp => write!(f, "RCGP"),
            Algorithm::Rrt => write!(f, "RRT"),
        }
    }
}

impl std::str::FromStr for Algorithm {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "rcgp" => Ok(Algorithm::Rcgp),
            "rrt" => Ok(Algorithm::Rrt),
            other => Err(format!(
                "unknown algorithm '{other}' (expected rcgp or rrt)"
            )),
        }
    }
}

/// The Table-1 column set for one run. Metric fields are populated whenever
/// the run succeeds; `planning_time_seconds` is wall clock and therefore the
/// one field excluded from determinism comparisons.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub scenario: String,
    pub algorithm: Algorithm,
    pub num_agents: usize,
    pub success: bool,
    pub planning_time_seconds: f64,
    pub makespan: Option<usize>,
    pub avg_localization_error: Option<f64>,
    pub max_localization_error: Option<f64>,
    pub percent_rigid: Option<f64>,
    pub seed: u64,
    pub localization_seeds: u32,
    pub localization_base_seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
}

#[derive(Debug, Clone, Copy)]
pub struct RunOptions {
    /// Noise/anchor realizations per timestep for localization evaluation.
    pub loc_seeds: u32,
    pub loc_base_seed: u64,
    pub use_cache: bool,
    pub replan_budget: usize,
    /// Overrides the scenario's minimum rigidity when set.
    pub min_rigidity_override: Option<f64>,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            loc_seeds: 20,
            loc_base_seed: 0,
            use_cache: true,
            replan_budget: PlanOptions::default().replan_budget,
            min_rigidity_override: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub paths: PathSet,
    pub metrics: MetricsReport,
    /// Planner bookkeeping; present for RCGP runs.
    pub plan_stats: Option<PlanStats>,
    /// Node-id trajectories; present for RCGP runs.
    pub trajectories: Option<TrajectorySet>,
}

fn min_rigidity_of(scenario: &Scenario, opts: &RunOptions) -> f64 {
    opts.min_rigidity_override.unwrap_or(scenario.min_rigidity)
}

/// Builds the planning graph and resolves agent endpoints to node ids. A
/// start or goal that fails to resolve (inside an obstacle, removed by
/// sampling) is a planning failure, not a scenario-format error.
pub fn assemble_problem<'g>(
    scenario: &Scenario,
    graph: &'g PlanningGraph,
    min_rigidity: f64,
) -> Result<PlanningProblem<'g>, ExperimentError> {
    let mut starts = Vec::with_capacity(scenario.agent_count());
    let mut goals = Vec::with_capacity(scenario.agent_count());
    for (idx, agent) in scenario.agents.iter().enumerate() {
        starts.push(graph.find_node(agent.start).ok_or_else(|| {
            ExperimentError::Planning(format!(
                "agent {idx} start ({}, {}) is not a planning-graph node",
                agent.start.x, agent.start.y
            ))
        })?);
        goals.push(graph.find_node(agent.goal).ok_or_else(|| {
            ExperimentError::Planning(format!(
                "agent {idx} goal ({}, {}) is not a planning-graph node",
                agent.goal.x, agent.goal.y
            ))
        })?);
    }
    Ok(PlanningProblem::new(
        graph,
        starts,
        goals,
        scenario.sensing_radius,
        scenario.noise,
        min_rigidity,
        Some(scenario.priority_order()),
        scenario.horizon_cap,
    )?)
}

/// Runs one planner on one scenario and evaluates the result. For RCGP the
/// reported planning time includes planning-graph construction.
pub fn run_plan(
    scenario: &Scenario,
    algorithm: Algorithm,
    seed: u64,
    opts: &RunOptions,
) -> Result<RunOutput, ExperimentError> {
    scenario.validate()?;
    let min_rigidity = min_rigidity_of(scenario, opts);

    let (paths, planning_time, plan_stats, trajectories) = match algorithm {
        Algorithm::Rcgp => {
            let t0 = Instant::now();
            let graph = build_planning_graph(
                &scenario.workspace,
                scenario.spacing,
                scenario.connect_radius,
            )?;
            let problem = assemble_problem(scenario, &graph, min_rigidity)?;
            let outcome = plan_all(
                &problem,
                PlanOptions {
                    use_cache: opts.use_cache,
                    replan_budget: opts.replan_budget,
                },
            )?;
            let elapsed = t0.elapsed().as_secs_f64();
            let paths = outcome.trajectories.positions(&graph);
            (
                paths,
                elapsed,
                Some(outcome.stats),
                Some(outcome.trajectories),
            )
        }
        Algorithm::Rrt => {
            let t0 = Instant::now();
            let starts: Vec<Point> = scenario.agents.iter().map(|a| a.start).collect();
            let goals: Vec<Point> = scenario.agents.iter().map(|a| a.goal).collect();
            let params = RrtParams {
                seed,
                ..scenario.rrt_params()
            };
            let paths = plan_rrt_all(
                &scenario.workspace,
                &starts,
                &goals,
                &scenario.priority_order(),
                &params,
            )?;
            (paths, t0.elapsed().as_secs_f64(), None, None)
        }
    };

    let eval = evaluate_trajectories(
        &paths,
        &EvalParams {
            sensing_radius: scenario.sensing_radius,
            noise: scenario.noise,
            num_seeds: opts.loc_seeds,
            base_seed: opts.loc_base_seed,
        },
    );
    let rigid_pct = percent_rigid(
        &paths,
        scenario.sensing_radius,
        scenario.noise,
        min_rigidity,
    );

    let metrics = MetricsReport {
        scenario: scenario.name.clone(),
        algorithm,
        num_agents: scenario.agent_count(),
        success: true,
        planning_time_seconds: planning_time,
        makespan: Some(paths.makespan()),
        avg_localization_error: Some(eval.avg_error),
        max_localization_error: Some(eval.max_error),
        percent_rigid: Some(rigid_pct),
        seed,
        localization_seeds: opts.loc_seeds,
        localization_base_seed: opts.loc_base_seed,
        failure: None,
    };
    Ok(RunOutput {
        paths,
        metrics,
        plan_stats,
        trajectories,
    })
}

/// Median/min/max of one metric over RRT seeds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat3 {
    pub median: f64,
    pub min: f64,
    pub max: f64,
}

impl Stat3 {
    fn over(values: &[f64]) -> Option<Stat3> {
        if values.is_empty() {
            return None;
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let mid = sorted.len() / 2;
        let median = if sorted.len() % 2 == 1 {
            sorted[mid]
        } else {
            (sorted[mid - 1] + sorted[mid]) / 2.0
        };
        Some(Stat3 {
            median,
            min: sorted[0],
            max: *sorted.last().unwrap(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedStats {
    pub successes: usize,
    pub failures: usize,
    pub planning_time_seconds: Stat3,
    pub makespan: Stat3,
    pub avg_localization_error: Stat3,
    pub max_localization_error: Stat3,
    pub percent_rigid: Stat3,
}

/// One scenario's comparison: the deterministic RCGP run next to one RRT run
/// per seed, with seed statistics over the successful RRT runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub scenario: String,
    pub num_agents: usize,
    pub rcgp: MetricsReport,
    pub rrt_runs: Vec<MetricsReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rrt_summary: Option<SeedStats>,
}

fn failed_report(
    scenario: &Scenario,
    algorithm: Algorithm,
    seed: u64,
    opts: &RunOptions,
    elapsed: f64,
    error: &ExperimentError,
) -> MetricsReport {
    MetricsReport {
        scenario: scenario.name.clone(),
        algorithm,
        num_agents: scenario.agent_count(),
        success: false,
        planning_time_seconds: elapsed,
        makespan: None,
        avg_localization_error: None,
        max_localization_error: None,
        percent_rigid: None,
        seed,
        localization_seeds: opts.loc_seeds,
        localization_base_seed: opts.loc_base_seed,
        failure: Some(error.to_string()),
    }
}

/// Runs RCGP once and RRT once per seed. Planning failures become failed
/// rows; scenario/validation/i-o errors propagate.
pub fn run_compare(
    scenario: &Scenario,
    seeds: &[u64],
    opts: &RunOptions,
) -> Result<ComparisonTable, ExperimentError> {
    scenario.validate()?;
    if seeds.is_empty() {
        return Err(ExperimentError::Validation(
            "compare needs at least one seed".into(),
        ));
    }

    let capture = |algorithm: Algorithm, seed: u64| -> Result<MetricsReport, ExperimentError> {
        let t0 = Instant::now();
        match run_plan(scenario, algorithm, seed, opts) {
            Ok(run) => Ok(run.metrics),
            Err(e @ ExperimentError::Planning(_)) => Ok(failed_report(
                scenario,
                algorithm,
                seed,
                opts,
                t0.elapsed().as_secs_f64(),
                &e,
            )),
            Err(other) => Err(other),
        }
    };

    let rcgp = capture(Algorithm::Rcgp, 0)?;
    let mut rrt_runs = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        rrt_runs.push(capture(Algorithm::Rrt, seed)?);
    }

    let ok: Vec<&MetricsReport> = rrt_runs.iter().filter(|r| r.success).collect();
    let collect =
        |f: &dyn Fn(&MetricsReport) -> f64| -> Vec<f64> { ok.iter().map(|r| f(r)).collect() };
    let rrt_summary = if ok.is_empty() {
        None
    } else {
        Some(SeedStats {
            successes: ok.len(),
            failures: rrt_runs.len() - ok.len(),
            planning_time_seconds: Stat3::over(&collect(&|r| r.planning_time_seconds)).unwrap(),
            makespan: Stat3::over(&collect(&|r| r.makespan.unwrap() as f64)).unwrap(),
            avg_localization_error: Stat3::over(&collect(&|r| r.avg_localization_error.unwrap()))
                .unwrap(),
            max_localization_error: Stat3::over(&collect(&|r| r.max_localization_error.unwrap()))
                .unwrap(),
            percent_rigid: Stat3::over(&collect(&|r| r.percent_rigid.unwrap())).unwrap(),
        })
    };

    Ok(ComparisonTable {
        scenario: scenario.name.clone(),
        num_agents: scenario.agent_count(),
        rcgp,
        rrt_runs,
        rrt_summary,
    })
}

/// Compares every scenario, optionally running scenarios on separate threads
/// (each run is independent and internally deterministic). Results come back
/// ordered by scenario name regardless of completion order.
pub fn run_compare_many(
    scenarios: &[Scenario],
    seeds: &[u64],
    opts: &RunOptions,
    parallel: bool,
) -> Result<Vec<ComparisonTable>, ExperimentError> {
    let mut results: Vec<(String, Result<ComparisonTable, ExperimentError>)> = if parallel {
        std::thread::scope(|scope| {
            let handles: Vec<_> = scenarios
                .iter()
                .map(|scenario| {
                    let name = scenario.name.clone();
                    let handle = scope.spawn(move || run_compare(scenario, seeds, opts));
                    (name, handle)
                })
                .collect();
            handles
                .into_iter()
                .map(|(name, handle)| (name, handle.join().expect("compare worker panicked")))
                .collect()
        })
    } else {
        scenarios
            .iter()
            .map(|scenario| (scenario.name.clone(), run_compare(scenario, seeds, opts)))
            .collect()
    };
    results.sort_by(|a, b| a.0.cmp(&b.0));
    results.into_iter().map(|(_, r)| r).collect()
}

fn fmt_opt_f64(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.3}")).unwrap_or_else(|| "-".into())
}

fn fmt_opt_usize(v: Option<usize>) -> String {
    v.map(|x| x.to_string()).unwrap_or_else(|| "-".into())
}

/// Aligned-text rendering with the familiar column set.
pub fn render_comparison_text(table: &ComparisonTable) -> String {
    let headers = [
        "Test Case",
        "Algorithm",
        "# of AUVs",
        "Planning Time (s)",
        "Makespan",
        "Avg. Localization Error",
        "Max. Localization Error",
        "% Rigid",
    ];
    let mut rows: Vec<Vec<String>> = Vec::new();
    let push_row = |rows: &mut Vec<Vec<String>>, label: String, r: &MetricsReport| {
        rows.push(vec![
            table.scenario.clone(),
            label,
            r.num_agents.to_string(),
            format!("{:.3}", r.planning_time_seconds),
            fmt_opt_usize(r.makespan),
            fmt_opt_f64(r.avg_localization_error),
            fmt_opt_f64(r.max_localization_error),
            if r.success {
                fmt_opt_f64(r.percent_rigid)
            } else {
                "failed".into()
            },
        ]);
    };
    push_row(&mut rows, "RCGP".into(), &table.rcgp);
    if let Some(s) = &table.rrt_summary {
        rows.push(vec![
            table.scenario.clone(),
            format!("RRT (median of {})", s.successes),
            table.num_agents.to_string(),
            format!("{:.3}", s.planning_time_seconds.median),
            format!("{:.1}", s.makespan.median),
            format!("{:.3}", s.avg_localization_error.median),
            format!("{:.3}", s.max_localization_error.median),
            format!("{:.1}", s.percent_rigid.median),
        ]);
    }
    for (i, r) in table.rrt_runs.iter().enumerate() {
        push_row(&mut rows, format!("RRT seed {}", table.rrt_runs[i].seed), r);
    }

    let mut widths: Vec<usize> = headers.iter().map(|h| h.len()).collect();
    for row in &rows {
        for (i, cell) in row.iter().enumerate() {
            widths[i] = widths[i].max(cell.len());
        }
    }
    let render_line = |cells: &[String]| {
        cells
            .iter()
            .enumerate()
            .map(|(i, c)| format!("{:width$}", c, width = widths[i]))
            .collect::<Vec<_>>()
            .join("  ")
    };
    let mut out = String::new();
    out.push_str(&render_line(
        &headers.iter().map(|s| s.to_string()).collect::<Vec<_>>(),
    ));
    out.push('\n');
    out.push_str(&"-".repeat(widths.iter().sum::<usize>() + 2 * (widths.len() - 1)));
    out.push('\n');
    for row in &rows {
        out.push_str(&render_line(row));
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrajectoryFormat {
    Csv,
    Json,
}

#[derive(Serialize, Deserialize)]
struct TrajectoryFile {
    horizon: usize,
    agents: Vec<Vec<(f64, f64)>>,
}

/// Writes trajectories as CSV (`t,agent,x,y`, sorted by t then agent) or JSON
/// (`{"horizon": H, "agents": [...]}`). Floats use the shortest round-trip
/// representation, so export -> import -> export is byte-identical.
pub fn export_trajectories(
    paths: &PathSet,
    path: impl AsRef<Path>,
    format: TrajectoryFormat,
) -> Result<(), ExperimentError> {
    let text = match format {
        TrajectoryFormat::Csv => {
            let mut out = String::from("t,agent,x,y\n");
            for t in 0..paths.horizon() {
                for agent in 0..paths.agent_count() {
                    let p = paths.position(agent, t);
                    out.push_str(&format!("{},{},{},{}\n", t, agent, p.x, p.y));
                }
            }
            out
        }
        TrajectoryFormat::Json => {
            let file = TrajectoryFile {
                horizon: paths.horizon(),
                agents: paths
                    .paths()
                    .iter()
                    .map(|a| a.iter().map(|p| (p.x, p.y)).collect())
                    .collect(),
            };
            let mut text = serde_json::to_string_pretty(&file)
                .map_err(|e| ExperimentError::Validation(e.to_string()))?;
            text.push('\n');
            text
        }
    };
    std::fs::write(path, text)?;
    Ok(())
}

pub fn import_trajectories(
    path: impl AsRef<Path>,
    format: TrajectoryFormat,
) -> Result<PathSet, ExperimentError> {
    let text = std::fs::read_to_string(path)?;
    match format {
        TrajectoryFormat::Csv => {
            let mut rows: Vec<(usize, usize, f64, f64)> = Vec::new();
            for (lineno, line) in text.lines().enumerate() {
                if lineno == 0 {
                    if line.trim() != "t,agent,x,y" {
                        return Err(ExperimentError::Validation(format!(
                            "unexpected CSV header: {line}"
                        )));
                    }
                    continue;
                }
                if line.trim().is_empty() {
                    continue;
                }
                let fields: Vec<&str> = line.split(',').collect();
                if fields.len() != 4 {
                    return Err(ExperimentError::Validation(format!(
                        "line {}: expected 4 fields, got {}",
                        lineno + 1,
                        fields.len()
                    )));
                }
                let parse_err = |what: &str| {
                    ExperimentError::Validation(format!("line {}: bad {what}", lineno + 1))
                };
                rows.push((
                    fields[0].parse().map_err(|_| parse_err("t"))?,
                    fields[1].parse().map_err(|_| parse_err("agent"))?,
                    fields[2].parse().map_err(|_| parse_err("x"))?,
                    fields[3].parse().map_err(|_| parse_err("y"))?,
                ));
            }
            if rows.is_empty() {
                return Err(ExperimentError::Validation("no trajectory rows".into()));
            }
            let horizon = rows.iter().map(|r| r.0).max().unwrap() + 1;
            let agents = rows.iter().map(|r| r.1).max().unwrap() + 1;
            let mut data = vec![vec![None; horizon]; agents];
            for (t, agent, x, y) in rows {
                data[agent][t] = Some(Point::new(x, y));
            }
            let mut out = Vec::with_capacity(agents);
            for (agent, series) in data.into_iter().enumerate() {
                let mut path = Vec::with_capacity(horizon);
                for (t, slot) in series.into_iter().enumerate() {
                    path.push(slot.ok_or_else(|| {
                        ExperimentError::Validation(format!(
                            "missing row for agent {agent} at t={t}"
                        ))
                    })?);
                }
                out.push(path);
            }
            PathSet::new(out).map_err(ExperimentError::Validation)
        }
        TrajectoryFormat::Json => {
            let file: TrajectoryFile = serde_json::from_str(&text)
                .map_err(|e| ExperimentError::Validation(e.to_string()))?;
            if file.agents.iter().any(|a| a.len() != file.horizon) {
                return Err(ExperimentError::Validation(
                    "agent path length does not match horizon".into(),
                ));
            }
            PathSet::new(
                file.agents
                    .into_iter()
                    .map(|a| a.into_iter().map(|(x, y)| Point::new(x, y)).collect())
                    .collect(),
            )
            .map_err(ExperimentError::Validation)
        }
    }
}

/// Writes plot-ready plain data: per-timestep positions, the sensing edge
/// list, and the full-network rigidity eigenvalue series. No rendering; the
/// files feed external plotting.
pub fn emit_plot_data(
    paths: &PathSet,
    sensing_radius: f64,
    noise: NoiseModel,
    out_dir: impl AsRef<Path>,
    stem: &str,
) -> Result<Vec<PathBuf>, ExperimentError> {
    use crate::rigidity::{rigidity_eigenvalue, MeasurementGraph, RigidityError};

    let dir = out_dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let positions_path = dir.join(format!("{stem}_positions.csv"));
    let edges_path = dir.join(format!("{stem}_edges.csv"));
    let rigidity_path = dir.join(format!("{stem}_rigidity.csv"));

    export_trajectories(paths, &positions_path, TrajectoryFormat::Csv)?;

    let mut edges_text = String::from("t,i,j\n");
    let mut rigidity_text = String::from("t,rigidity_eigenvalue\n");
    for t in 0..paths.horizon() {
        let config = paths.config_at(t);
        let graph = MeasurementGraph::from_sensing(&config, sensing_radius, noise);
        for &(i, j) in graph.edges() {
            edges_text.push_str(&format!("{t},{i},{j}\n"));
        }
        let lambda = if config.len() < 3 {
            0.0
        } else {
            match rigidity_eigenvalue(&config, &graph) {
                Ok(v) => v,
                Err(RigidityError::CoincidentNodes { .. }) => 0.0,
                Err(e) => return Err(ExperimentError::Validation(e.to_string())),
            }
        };
        rigidity_text.push_str(&format!("{t},{lambda}\n"));
    }
    std::fs::write(&edges_path, edges_text)?;
    std::fs::write(&rigidity_path, rigidity_text)?;

    Ok(vec![positions_path, edges_path, rigidity_path])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::scenario_from_json;

    fn tiny_scenario() -> Scenario {
        scenario_from_json(
            r#"{
                "name": "tiny",
                "workspace": { "bounds": [0.0, 0.0, 8.0, 2.0], "obstacles": [] },
                "connect_radius": 2.0,
                "sensing_radius": 3.0,
                "noise": { "kind": "additive", "sigma": 0.1 },
                "agents": [
                    { "start": [0.0, 0.0], "goal": [8.0, 0.0] },
                    { "start": [1.0, 1.0], "goal": [7.0, 1.0] },
                    { "start": [0.0, 2.0], "goal": [8.0, 2.0] }
                ],
                "rrt": { "step_size": 1.0, "goal_bias": 0.3, "max_iterations": 20000 }
            }"#,
        )
        .unwrap()
    }

    fn fast_opts() -> RunOptions {
        RunOptions {
            loc_seeds: 3,
            ..RunOptions::default()
        }
    }

    #[test]
    fn rcgp_run_produces_full_metrics() {
        let scenario = tiny_scenario();
        let run = run_plan(&scenario, Algorithm::Rcgp, 0, &fast_opts()).unwrap();
        let m = &run.metrics;
        assert!(m.success);
        assert_eq!(m.num_agents, 3);
        assert_eq!(m.percent_rigid, Some(100.0));
        assert!(m.makespan.unwrap() >= 4, "8 units at 2 per step");
        assert!(m.avg_localization_error.unwrap() <= m.max_localization_error.unwrap());
        assert!(run.trajectories.is_some());
    }

    #[test]
    fn rrt_run_is_seed_deterministic() {
        let scenario = tiny_scenario();
        let a = run_plan(&scenario, Algorithm::Rrt, 7, &fast_opts()).unwrap();
        let b = run_plan(&scenario, Algorithm::Rrt, 7, &fast_opts()).unwrap();
        assert_eq!(a.paths, b.paths);
        assert_eq!(a.metrics.makespan, b.metrics.makespan);
    }

    #[test]
    fn goal_inside_obstacle_is_a_planning_failure() {
        let mut scenario = tiny_scenario();
        scenario.workspace.obstacles =
            vec![crate::geometry::Polygon::rectangle(6.5, -0.5, 8.5, 0.5).unwrap()];
        let err = run_plan(&scenario, Algorithm::Rcgp, 0, &fast_opts()).unwrap_err();
        match err {
            ExperimentError::Planning(msg) => assert!(msg.contains("goal"), "{msg}"),
            other => panic!("expected planning failure, got {other}"),
        }
    }

    #[test]
    fn compare_emits_rows_for_both_algorithms() {
        let scenario = tiny_scenario();
        let table = run_compare(&scenario, &[1, 2, 3], &fast_opts()).unwrap();
        assert!(table.rcgp.success);
        assert_eq!(table.rcgp.percent_rigid, Some(100.0));
        assert_eq!(table.rrt_runs.len(), 3);
        let text = render_comparison_text(&table);
        assert!(text.contains("Planning Time (s)"));
        assert!(text.contains("RCGP"));
        assert!(text.contains("% Rigid"));
    }

    #[test]
    fn trajectory_export_roundtrips_byte_identical() {
        let scenario = tiny_scenario();
        let run = run_plan(&scenario, Algorithm::Rcgp, 0, &fast_opts()).unwrap();
        let dir = tempfile::tempdir().unwrap();

        for (format, name) in [
            (TrajectoryFormat::Csv, "t.csv"),
            (TrajectoryFormat::Json, "t.json"),
        ] {
            let p1 = dir.path().join(name);
            let p2 = dir.path().join(format!("re_{name}"));
            export_trajectories(&run.paths, &p1, format).unwrap();
            let imported = import_trajectories(&p1, format).unwrap();
            assert_eq!(imported, run.paths);
            export_trajectories(&imported, &p2, format).unwrap();
            assert_eq!(
                std::fs::read(&p1).unwrap(),
                std::fs::read(&p2).unwrap(),
                "{name} not byte-identical"
            );
        }
    }

    #[test]
    fn csv_row_count_matches_grid() {
        let paths = PathSet::new(vec![
            vec![
                Point::new(0.0, 0.0),
                Point::new(1.0, 0.0),
                Point::new(2.0, 0.0),
            ],
            vec![
                Point::new(0.0, 1.0),
                Point::new(1.0, 1.0),
                Point::new(2.0, 1.0),
            ],
        ])
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("two.csv");
        export_trajectories(&paths, &p, TrajectoryFormat::Csv).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        // Header plus 2 agents x 3 timesteps.
        assert_eq!(text.lines().count(), 7);
        assert_eq!(text.lines().next().unwrap(), "t,agent,x,y");
    }

    #[test]
    fn plot_data_is_consistent_and_reproducible() {
        let scenario = tiny_scenario();
        let run = run_plan(&scenario, Algorithm::Rcgp, 0, &fast_opts()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let files = emit_plot_data(
            &run.paths,
            scenario.sensing_radius,
            scenario.noise,
            dir.path(),
            "a",
        )
        .unwrap();
        assert_eq!(files.len(), 3);
        let rigidity = std::fs::read_to_string(&files[2]).unwrap();
        // Header + one line per timestep.
        assert_eq!(rigidity.lines().count(), run.paths.horizon() + 1);

        let before: Vec<Vec<u8>> = files.iter().map(|f| std::fs::read(f).unwrap()).collect();
        emit_plot_data(
            &run.paths,
            scenario.sensing_radius,
            scenario.noise,
            dir.path(),
            "a",
        )
        .unwrap();
        for (f, b) in files.iter().zip(before) {
            assert_eq!(std::fs::read(f).unwrap(), b);
        }
    }

    #[test]
    fn parallel_compare_matches_sequential() {
        let mut a = tiny_scenario();
        a.name = "alpha".into();
        let mut b = tiny_scenario();
        b.name = "beta".into();
        // Deliberately out of name order.
        let scenarios = vec![b, a];
        let opts = RunOptions {
            loc_seeds: 2,
            ..RunOptions::default()
        };
        let strip = |tables: &[ComparisonTable]| -> Vec<serde_json::Value> {
            tables
                .iter()
                .map(|t| {
                    let mut v = serde_json::to_value(t).unwrap();
                    v["rcgp"]["planning_time_seconds"] = 0.0.into();
                    for r in v["rrt_runs"].as_array_mut().unwrap() {
                        r["planning_time_seconds"] = 0.0.into();
                    }
                    if !v["rrt_summary"].is_null() {
                        v["rrt_summary"]["planning_time_seconds"] =
                            serde_json::json!({"median": 0.0, "min": 0.0, "max": 0.0});
                    }
                    v
                })
                .collect()
        };
        let sequential = run_compare_many(&scenarios, &[1, 2], &opts, false).unwrap();
        let parallel = run_compare_many(&scenarios, &[1, 2], &opts, true).unwrap();
        assert_eq!(sequential[0].scenario, "alpha", "ordered by name");
        assert_eq!(strip(&sequential), strip(&parallel));
    }

    #[test]
    fn compare_json_is_deterministic_apart_from_wall_clock() {
        let scenario = tiny_scenario();
        let opts = fast_opts();
        let strip = |t: &ComparisonTable| {
            let mut v = serde_json::to_value(t).unwrap();
            let null_time = |m: &mut serde_json::Value| {
                m["planning_time_seconds"] = serde_json::Value::from(0.0);
            };
            null_time(&mut v["rcgp"]);
            for r in v["rrt_runs"].as_array_mut().unwrap() {
                null_time(r);
            }
            if !v["rrt_summary"].is_null() {
                v["rrt_summary"]["planning_time_seconds"] =
                    serde_json::json!({"median": 0.0, "min": 0.0, "max": 0.0});
            }
            serde_json::to_string_pretty(&v).unwrap()
        };
        let a = strip(&run_compare(&scenario, &[5, 6], &opts).unwrap());
        let b = strip(&run_compare(&scenario, &[5, 6], &opts).unwrap());
        assert_eq!(a, b);
    }
}
