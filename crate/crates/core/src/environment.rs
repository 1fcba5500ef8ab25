//! The 2-D workspace and the shared planning graph.
//!
//! The graph is built by sampling the workspace on a uniform grid anchored at
//! (x_min, y_min) and connecting every pair of surviving sample points within
//! the connection radius, dropping nodes and edges that touch an obstacle.
//! All agents plan on this one graph.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{point_in_polygon, segment_intersects_polygon, Point, Polygon};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnvironmentError {
    #[error("workspace bounds are empty or not finite: ({x_min}, {y_min}) .. ({x_max}, {y_max})")]
    InvalidBounds {
        x_min: f64,
        y_min: f64,
        x_max: f64,
        y_max: f64,
    },
    #[error("spacing and connection radius must be positive, got {0}")]
    InvalidSpacing(f64),
    #[error("no grid samples survive obstacle removal; the planning graph is empty")]
    EmptyGraph,
}

/// Axis-aligned workspace bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "(f64, f64, f64, f64)", into = "(f64, f64, f64, f64)")]
pub struct Bounds {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

impl Bounds {
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Result<Self, EnvironmentError> {
        let ok = x_min.is_finite()
            && y_min.is_finite()
            && x_max.is_finite()
            && y_max.is_finite()
            && x_min < x_max
            && y_min < y_max;
        if !ok {
            return Err(EnvironmentError::InvalidBounds {
                x_min,
                y_min,
                x_max,
                y_max,
            });
        }
        Ok(Bounds {
            x_min,
            y_min,
            x_max,
            y_max,
        })
    }

    pub fn contains(&self, p: Point) -> bool {
        p.x >= self.x_min && p.x <= self.x_max && p.y >= self.y_min && p.y <= self.y_max
    }
}

impl TryFrom<(f64, f64, f64, f64)> for Bounds {
    type Error = EnvironmentError;
    fn try_from(v: (f64, f64, f64, f64)) -> Result<Self, Self::Error> {
        Bounds::new(v.0, v.1, v.2, v.3)
    }
}

impl From<Bounds> for (f64, f64, f64, f64) {
    fn from(b: Bounds) -> Self {
        (b.x_min, b.y_min, b.x_max, b.y_max)
    }
}

/// Rectangular workspace with simple polygonal obstacles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Workspace {
    pub bounds: Bounds,
    #[serde(default)]
    pub obstacles: Vec<Polygon>,
}

impl Workspace {
    pub fn new(bounds: Bounds, obstacles: Vec<Polygon>) -> Self {
        Workspace { bounds, obstacles }
    }

    pub fn open(bounds: Bounds) -> Self {
        Workspace {
            bounds,
            obstacles: Vec::new(),
        }
    }

    /// Inside or on the boundary of any obstacle.
    pub fn point_blocked(&self, p: Point) -> bool {
        self.obstacles.iter().any(|poly| point_in_polygon(p, poly))
    }

    /// Segment touches, crosses, or runs through any obstacle.
    pub fn segment_blocked(&self, p: Point, q: Point) -> bool {
        self.obstacles
            .iter()
            .any(|poly| segment_intersects_polygon(p, q, poly))
    }
}

/// Grid samples over the bounds in row-major order (y outer, x inner),
/// excluding points inside or on an obstacle.
pub fn sample_grid(workspace: &Workspace, spacing: f64) -> Vec<Point> {
    assert!(spacing > 0.0, "spacing must be positive");
    let b = workspace.bounds;
    // Small forgiveness so x_min + k*spacing == x_max survives rounding.
    let slack = spacing * 1e-9;
    let nx = ((b.x_max - b.x_min + slack) / spacing).floor() as usize;
    let ny = ((b.y_max - b.y_min + slack) / spacing).floor() as usize;
    let mut points = Vec::with_capacity((nx + 1) * (ny + 1));
    for iy in 0..=ny {
        for ix in 0..=nx {
            let p = Point::new(b.x_min + ix as f64 * spacing, b.y_min + iy as f64 * spacing);
            if !workspace.point_blocked(p) {
                points.push(p);
            }
        }
    }
    points
}

/// The shared planning graph: grid-sampled nodes plus proximity edges that
/// avoid obstacles. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanningGraph {
    nodes: Vec<Point>,
    adjacency: Vec<Vec<usize>>,
    spacing: f64,
    connect_radius: f64,
}

pub fn build_planning_graph(
    workspace: &Workspace,
    spacing: f64,
    connect_radius: f64,
) -> Result<PlanningGraph, EnvironmentError> {
    if spacing <= 0.0 || !spacing.is_finite() {
        return Err(EnvironmentError::InvalidSpacing(spacing));
    }
    if connect_radius <= 0.0 || !connect_radius.is_finite() {
        return Err(EnvironmentError::InvalidSpacing(connect_radius));
    }
    let nodes = sample_grid(workspace, spacing);
    if nodes.is_empty() {
        return Err(EnvironmentError::EmptyGraph);
    }

    let r_sq = connect_radius * connect_radius;
    let mut adjacency = vec![Vec::new(); nodes.len()];
    for u in 0..nodes.len() {
        for v in (u + 1)..nodes.len() {
            let d_sq = nodes[u].distance_sq(nodes[v]);
            if d_sq == 0.0 || d_sq > r_sq {
                continue;
            }
            if workspace.segment_blocked(nodes[u], nodes[v]) {
                continue;
            }
            adjacency[u].push(v);
            adjacency[v].push(u);
        }
    }
    for list in &mut adjacency {
        list.sort_unstable();
    }
    Ok(PlanningGraph {
        nodes,
        adjacency,
        spacing,
        connect_radius,
    })
}

impl PlanningGraph {
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn position(&self, id: usize) -> Point {
        self.nodes[id]
    }

    pub fn nodes(&self) -> &[Point] {
        &self.nodes
    }

    pub fn neighbors(&self, id: usize) -> &[usize] {
        &self.adjacency[id]
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn connect_radius(&self) -> f64 {
        self.connect_radius
    }

    /// Node whose position matches `p` exactly (within fp dust), if any.
    pub fn find_node(&self, p: Point) -> Option<usize> {
        self.nodes
            .iter()
            .position(|n| (n.x - p.x).abs() <= 1e-9 && (n.y - p.y).abs() <= 1e-9)
    }

    /// Hop-count diameter estimate via double BFS from node 0. Exact on grid
    /// graphs, a lower bound in general; used only to size the horizon cap.
    pub fn diameter_steps(&self) -> usize {
        let (far, _) = self.bfs_farthest(0);
        let (_, dist) = self.bfs_farthest(far);
        dist.max(1)
    }

    fn bfs_farthest(&self, source: usize) -> (usize, usize) {
        let mut dist = vec![usize::MAX; self.nodes.len()];
        let mut queue = std::collections::VecDeque::new();
        dist[source] = 0;
        queue.push_back(source);
        let mut best = (source, 0);
        while let Some(u) = queue.pop_front() {
            for &v in &self.adjacency[u] {
                if dist[v] == usize::MAX {
                    dist[v] = dist[u] + 1;
                    if dist[v] > best.1 {
                        best = (v, dist[v]);
                    }
                    queue.push_back(v);
                }
            }
        }
        best
    }
}
