//! `rcgp` — plan, compare, validate, and query scenarios from the shell.
//!
//! Exit codes: 0 success, 2 validation error, 3 planning failed, 4 i/o error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Parser, Subcommand};

use rcgp_core::environment::build_planning_graph;
use rcgp_core::experiment::{
    emit_plot_data, render_comparison_text, run_compare_many, run_plan, Algorithm, ExperimentError,
    RunOptions, TrajectoryFormat,
};
use rcgp_core::experiment::{export_trajectories, import_trajectories};
use rcgp_core::planner::{validate_solution, TrajectorySet};
use rcgp_core::rigidity::{check_rigidity, Configuration, MeasurementGraph, NoiseKind, NoiseModel};
use rcgp_core::scenario::{load_scenario, Scenario, ScenarioError};
use rcgp_core::Point;

const EXIT_VALIDATION: u8 = 2;
const EXIT_PLANNING: u8 = 3;
const EXIT_IO: u8 = 4;

/// Stdout writes that tolerate a closed pipe (`rcgp compare | head`).
macro_rules! out {
    ($($arg:tt)*) => {{
        use std::io::Write;
        let _ = writeln!(std::io::stdout(), $($arg)*);
    }};
}

macro_rules! out_raw {
    ($($arg:tt)*) => {{
        use std::io::Write;
        let _ = write!(std::io::stdout(), $($arg)*);
    }};
}

#[derive(Parser)]
#[command(
    name = "rcgp",
    about = "Rigidity-constrained multi-agent planning experiments"
)]
struct Cli {
    /// Override the scenario's minimum rigidity threshold.
    #[arg(long, global = true)]
    min_rigidity: Option<f64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Plan one scenario and write trajectories, metrics, and plot data.
    Plan {
        #[arg(long)]
        scenario: PathBuf,
        /// rcgp or rrt
        #[arg(long, default_value = "rcgp")]
        algorithm: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// Localization noise/anchor realizations per timestep.
        #[arg(long, default_value_t = 20)]
        loc_seeds: u32,
        /// Disable the rigidity verdict cache.
        #[arg(long)]
        no_cache: bool,
    },
    /// Run RCGP once and RRT per seed, printing one comparison table per
    /// scenario (ordered by scenario name).
    Compare {
        /// May be given multiple times.
        #[arg(long = "scenario", required = true)]
        scenarios: Vec<PathBuf>,
        /// Comma-separated RRT seeds.
        #[arg(long, value_delimiter = ',', default_value = "0")]
        seeds: Vec<u64>,
        /// Optional directory for the machine-readable tables.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 20)]
        loc_seeds: u32,
        /// Run scenarios concurrently; each run stays deterministic.
        #[arg(long)]
        parallel: bool,
    },
    /// Check a trajectory file against a scenario's constraints.
    Validate {
        #[arg(long)]
        trajectories: PathBuf,
        #[arg(long)]
        scenario: PathBuf,
    },
    /// One-shot rigidity eigenvalue for a positions file (one "x,y" per line).
    Rigidity {
        #[arg(long)]
        positions: PathBuf,
        #[arg(long)]
        sensing_radius: f64,
        #[arg(long)]
        sigma: f64,
        /// additive or multiplicative
        #[arg(long, default_value = "additive")]
        noise: String,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}

fn exit_code_for(err: &ExperimentError) -> u8 {
    match err {
        ExperimentError::Io(_) | ExperimentError::Scenario(ScenarioError::Io(_)) => EXIT_IO,
        ExperimentError::Planning(_) => EXIT_PLANNING,
        _ => EXIT_VALIDATION,
    }
}

fn load(path: &Path, min_rigidity: Option<f64>) -> Result<Scenario, ExperimentError> {
    let mut scenario = load_scenario(path)?;
    if let Some(m) = min_rigidity {
        scenario.min_rigidity = m;
        scenario.validate()?;
    }
    Ok(scenario)
}

fn run(cli: Cli) -> Result<ExitCode, ExperimentError> {
    match cli.command {
        Command::Plan {
            scenario,
            algorithm,
            seed,
            out,
            loc_seeds,
            no_cache,
        } => {
            let algorithm = Algorithm::from_str(&algorithm).map_err(ExperimentError::Validation)?;
            let scenario = load(&scenario, cli.min_rigidity)?;
            let opts = RunOptions {
                loc_seeds,
                use_cache: !no_cache,
                ..RunOptions::default()
            };
            let run = run_plan(&scenario, algorithm, seed, &opts)?;

            std::fs::create_dir_all(&out)?;
            let stem = format!("{}_{}", scenario.name, algorithm.to_string().to_lowercase());
            let csv = out.join(format!("{stem}_trajectories.csv"));
            let json = out.join(format!("{stem}_trajectories.json"));
            let metrics_path = out.join(format!("{stem}_metrics.json"));
            export_trajectories(&run.paths, &csv, TrajectoryFormat::Csv)?;
            export_trajectories(&run.paths, &json, TrajectoryFormat::Json)?;
            let mut metrics_text = serde_json::to_string_pretty(&run.metrics)
                .map_err(|e| ExperimentError::Validation(e.to_string()))?;
            metrics_text.push('\n');
            std::fs::write(&metrics_path, metrics_text)?;
            emit_plot_data(
                &run.paths,
                scenario.sensing_radius,
                scenario.noise,
                &out,
                &stem,
            )?;

            let m = &run.metrics;
            out!(
                "{} on {}: makespan {}, avg loc err {:.4}, max loc err {:.4}, {:.1}% rigid, planned in {:.3}s",
                algorithm,
                scenario.name,
                m.makespan.unwrap(),
                m.avg_localization_error.unwrap(),
                m.max_localization_error.unwrap(),
                m.percent_rigid.unwrap(),
                m.planning_time_seconds,
            );
            if let Some(stats) = &run.plan_stats {
                out!(
                    "conflicts: {}, cache hit rate: {:.1}%",
                    stats.conflicts.len(),
                    100.0 * stats.cache_hit_rate()
                );
            }
            out!("outputs written to {}", out.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Compare {
            scenarios,
            seeds,
            out,
            loc_seeds,
            parallel,
        } => {
            let mut loaded = Vec::with_capacity(scenarios.len());
            for path in &scenarios {
                loaded.push(load(path, cli.min_rigidity)?);
            }
            let opts = RunOptions {
                loc_seeds,
                ..RunOptions::default()
            };
            let tables = run_compare_many(&loaded, &seeds, &opts, parallel)?;
            for table in &tables {
                out_raw!("{}", render_comparison_text(table));
                out!();
            }
            if let Some(dir) = out {
                std::fs::create_dir_all(&dir)?;
                for table in &tables {
                    let path = dir.join(format!("{}_compare.json", table.scenario));
                    let mut text = serde_json::to_string_pretty(table)
                        .map_err(|e| ExperimentError::Validation(e.to_string()))?;
                    text.push('\n');
                    std::fs::write(&path, text)?;
                    out!("table written to {}", path.display());
                }
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Validate {
            trajectories,
            scenario,
        } => {
            let scenario = load(&scenario, cli.min_rigidity)?;
            let format = match trajectories.extension().and_then(|e| e.to_str()) {
                Some("json") => TrajectoryFormat::Json,
                _ => TrajectoryFormat::Csv,
            };
            let paths = import_trajectories(&trajectories, format)?;
            let graph = build_planning_graph(
                &scenario.workspace,
                scenario.spacing,
                scenario.connect_radius,
            )?;
            let problem =
                rcgp_core::experiment::assemble_problem(&scenario, &graph, scenario.min_rigidity)?;
            let mut node_paths = Vec::with_capacity(paths.agent_count());
            for agent in 0..paths.agent_count() {
                let mut nodes = Vec::with_capacity(paths.horizon());
                for t in 0..paths.horizon() {
                    let p = paths.position(agent, t);
                    nodes.push(graph.find_node(p).ok_or_else(|| {
                        ExperimentError::Validation(format!(
                            "agent {agent} position ({}, {}) at t={t} is not a planning-graph node",
                            p.x, p.y
                        ))
                    })?);
                }
                node_paths.push(nodes);
            }
            let set = TrajectorySet::from_paths(node_paths)
                .map_err(|e| ExperimentError::Validation(e.to_string()))?;
            let report = validate_solution(&set, &problem);
            out!(
                "{} agents, horizon {}: {}",
                set.agent_count(),
                set.horizon(),
                report.summary()
            );
            for (t, node, a, b) in &report.vertex_collisions {
                out!("  collision at t={t}: agents {a} and {b} on node {node}");
            }
            for (t, agent, from, to) in &report.invalid_moves {
                out!("  invalid move at t={t}: agent {agent} jumped {from} -> {to}");
            }
            for (t, (lambda, ok)) in report.rigidity.iter().zip(&report.rigid_flags).enumerate() {
                if !ok {
                    out!(
                        "  non-rigid at t={t}: eigenvalue {lambda:.6} < {:.6}",
                        report.min_rigidity
                    );
                }
            }
            if report.passed() {
                out!("PASS");
                Ok(ExitCode::SUCCESS)
            } else {
                out!("FAIL");
                Ok(ExitCode::from(EXIT_VALIDATION))
            }
        }
        Command::Rigidity {
            positions,
            sensing_radius,
            sigma,
            noise,
        } => {
            let kind = match noise.to_ascii_lowercase().as_str() {
                "additive" => NoiseKind::Additive,
                "multiplicative" => NoiseKind::Multiplicative,
                other => {
                    return Err(ExperimentError::Validation(format!(
                        "unknown noise kind '{other}'"
                    )))
                }
            };
            let noise = NoiseModel::new(kind, sigma)
                .map_err(|e| ExperimentError::Validation(e.to_string()))?;
            let text = std::fs::read_to_string(&positions)?;
            let mut points = Vec::new();
            for (lineno, line) in text.lines().enumerate() {
                let line = line.trim();
                if line.is_empty() || line.starts_with('#') {
                    continue;
                }
                let parts: Vec<&str> = line.split(',').map(str::trim).collect();
                if parts.len() != 2 {
                    return Err(ExperimentError::Validation(format!(
                        "line {}: expected 'x,y'",
                        lineno + 1
                    )));
                }
                let x: f64 = parts[0].parse().map_err(|_| {
                    ExperimentError::Validation(format!("line {}: bad x", lineno + 1))
                })?;
                let y: f64 = parts[1].parse().map_err(|_| {
                    ExperimentError::Validation(format!("line {}: bad y", lineno + 1))
                })?;
                points.push(Point::new(x, y));
            }
            if points.len() < 3 {
                return Err(ExperimentError::Validation(format!(
                    "rigidity needs at least 3 positions, got {}",
                    points.len()
                )));
            }
            let config = Configuration::new(points)
                .map_err(|e| ExperimentError::Validation(e.to_string()))?;
            let graph = MeasurementGraph::from_sensing(&config, sensing_radius, noise);
            let threshold = cli.min_rigidity.unwrap_or(0.1);
            let verdict = check_rigidity(&config, &graph, threshold)
                .map_err(|e| ExperimentError::Validation(e.to_string()))?;
            out!(
                "nodes: {}, edges: {}, rigidity eigenvalue: {}",
                config.len(),
                graph.edge_count(),
                verdict.rigidity_eigenvalue
            );
            out!(
                "{} (threshold {})",
                if verdict.is_rigid {
                    "RIGID"
                } else {
                    "NOT RIGID"
                },
                threshold
            );
            Ok(ExitCode::SUCCESS)
        }
    }
}
