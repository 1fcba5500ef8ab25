//! Rigidity-constrained multi-agent path planning on graphs.
//!
//! A swarm of range-measuring vehicles can localize itself from inter-agent
//! distance measurements alone, but only when the measurement network is
//! *rigid*: the first nontrivial eigenvalue of the network's Fisher
//! information matrix must stay above a minimum. This crate provides
//!
//! * [`rigidity`] — Fisher information matrices of 2-D range networks, their
//!   spectra, and the rigidity eigenvalue test (with a verdict cache),
//! * [`environment`] — polygonal workspaces and grid-sampled planning graphs,
//! * [`planner`] — prioritized, rigidity-constrained graph planning with
//!   reachable/connected/rigid/valid sets, conflicts and backtracking,
//! * [`rrt`] — a prioritized RRT baseline with only a vertex-collision
//!   constraint,
//! * [`localizer`] — noisy range simulation and anchored nonlinear
//!   least-squares localization for evaluating trajectories,
//! * [`scenario`] / [`experiment`] — scenario files, experiment orchestration
//!   and metrics reporting.

pub mod environment;
pub mod experiment;
pub mod geometry;
pub mod linalg;
pub mod localizer;
pub mod planner;
pub mod rigidity;
pub mod rrt;
pub mod scenario;

pub use geometry::Point;
