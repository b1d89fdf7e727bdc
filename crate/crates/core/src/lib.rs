//! Distance-and-orientation formation shape control for single-integrator
//! agents in 3D, built on projection variables expressed in per-agent
//! orthogonal bases. Includes the closed-loop simulator, a planar degenerate
//! mode, and convergence-rate analysis tools.

pub mod analysis;
pub mod control;
pub mod framework;
pub mod geometry;
pub mod projections;
pub mod scenario;
pub mod sim;

pub use analysis::{
    check_local_rate, fit_exponential_rate, monte_carlo, MonteCarloReport, RateCheck,
};
pub use control::{control_inputs, linearization_diagonal, projection_errors, ErrorVector, Gains};
pub use framework::{
    are_equivalent, is_strongly_congruent, DesiredFormation, DirectedFormationGraph, Framework,
};
pub use geometry::{cayley_menger_volume, heron_area, signed_volume, Vec3};
pub use projections::{desired_lambda, embed_desired, lambda, NormalCache, ProjectionVector};
pub use scenario::{load_scenario, parse_scenario, Scenario};
pub use sim::{run, run_2d, IcSpec, PlanarFormation, SimConfig, Termination, Trajectory};
