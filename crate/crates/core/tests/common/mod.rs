//! Shared test oracles and generators.
//!
//! The Jacobi eigensolver here is the independent reference for the
//! production Householder+QL path: a different algorithm family, implemented
//! from the rotation formulas alone, and deliberately kept in the test tree.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rcgp_core::environment::PlanningGraph;
use rcgp_core::planner::ValidSetTable;
use rcgp_core::rigidity::{Configuration, MeasurementGraph, NoiseModel};
use rcgp_core::Point;

/// Brute-force cyclic Jacobi eigenvalues of a symmetric matrix, ascending.
pub fn jacobi_eigenvalues(matrix: &[f64], dim: usize) -> Vec<f64> {
    assert_eq!(matrix.len(), dim * dim);
    let n = dim;
    let mut a = matrix.to_vec();
    // Symmetrize so tiny input asymmetry cannot bias the sweeps.
    for r in 0..n {
        for c in 0..n {
            let avg = (matrix[r * n + c] + matrix[c * n + r]) / 2.0;
            a[r * n + c] = avg;
        }
    }
    let frobenius: f64 = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    let stop = 1e-14 * frobenius.max(1.0);

    for _sweep in 0..200 {
        let mut off = 0.0;
        for r in 0..n {
            for c in (r + 1)..n {
                off += a[r * n + c] * a[r * n + c];
            }
        }
        if off.sqrt() <= stop {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[p * n + q];
                if apq.abs() <= stop / (n as f64) {
                    continue;
                }
                let tau = (a[q * n + q] - a[p * n + p]) / (2.0 * apq);
                let t = if tau >= 0.0 {
                    1.0 / (tau + (1.0 + tau * tau).sqrt())
                } else {
                    -1.0 / (-tau + (1.0 + tau * tau).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                // B = J^T A J zeroes (p, q): mix columns, then rows.
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut eigenvalues: Vec<f64> = (0..n).map(|i| a[i * n + i]).collect();
    eigenvalues.sort_by(f64::total_cmp);
    eigenvalues
}

/// A random configuration of n nodes uniform in a 10x10 box whose radius-4
/// sensing graph is connected. Resamples until connectivity holds.
pub fn random_connected_network(
    rng: &mut ChaCha8Rng,
    noise: NoiseModel,
) -> (Configuration, MeasurementGraph) {
    loop {
        let n = rng.gen_range(3..=8);
        let positions: Vec<Point> = (0..n)
            .map(|_| Point::new(rng.gen_range(0.0..10.0), rng.gen_range(0.0..10.0)))
            .collect();
        let config = Configuration::new(positions).unwrap();
        let graph = MeasurementGraph::from_sensing(&config, 4.0, noise);
        if is_connected(n, graph.edges()) {
            return (config, graph);
        }
    }
}

pub fn is_connected(n: usize, edges: &[(usize, usize)]) -> bool {
    let mut adj = vec![Vec::new(); n];
    for &(i, j) in edges {
        adj[i].push(j);
        adj[j].push(i);
    }
    let mut seen = vec![false; n];
    let mut stack = vec![0];
    seen[0] = true;
    let mut count = 1;
    while let Some(u) = stack.pop() {
        for &v in &adj[u] {
            if !seen[v] {
                seen[v] = true;
                count += 1;
                stack.push(v);
            }
        }
    }
    count == n
}

pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Spectra equality within `tol` relative to max(1, largest magnitude).
pub fn assert_spectra_close(actual: &[f64], expected: &[f64], tol: f64, context: &str) {
    assert_eq!(actual.len(), expected.len(), "{context}: length mismatch");
    let scale = expected
        .iter()
        .chain(actual)
        .fold(1.0f64, |m, v| m.max(v.abs()));
    for (idx, (a, e)) in actual.iter().zip(expected).enumerate() {
        assert!(
            (a - e).abs() <= tol * scale,
            "{context}: eigenvalue {idx}: {a} vs {e} (tol {tol}, scale {scale})"
        );
    }
}

/// Breadth-first minimum arrival time over the identical time-expanded valid
/// sets that A* searches, with the same goal-parking rule. Returns the
/// earliest valid arrival timestep, or None.
#[allow(clippy::needless_range_loop)] // t is the timestep, not just an index
pub fn bfs_min_arrival(
    table: &ValidSetTable,
    graph: &PlanningGraph,
    start: usize,
    goal: usize,
) -> Option<usize> {
    let end = table.end_time();
    let mut valid_arrival = vec![false; end + 1];
    let mut ok = true;
    for (t, slot) in valid_arrival.iter_mut().enumerate().rev() {
        ok = ok && table.valid[t].contains(goal);
        *slot = ok;
    }

    let mut frontier = vec![false; graph.node_count()];
    if !table.valid[0].contains(start) {
        return None;
    }
    frontier[start] = true;
    for t in 0..=end {
        if frontier[goal] && valid_arrival[t] {
            return Some(t);
        }
        if t == end {
            break;
        }
        let mut next = vec![false; graph.node_count()];
        for node in 0..graph.node_count() {
            if !frontier[node] {
                continue;
            }
            if table.valid[t + 1].contains(node) {
                next[node] = true;
            }
            for &nb in graph.neighbors(node) {
                if table.valid[t + 1].contains(nb) {
                    next[nb] = true;
                }
            }
        }
        frontier = next;
    }
    None
}

pub fn scenario_path(name: &str) -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../scenarios")
        .join(format!("{name}.json"))
}

pub const BUNDLED_SCENARIOS: [&str; 5] = [
    "corridor_6",
    "warehouse_8",
    "sparse_6",
    "sparse_8",
    "open_12",
];
