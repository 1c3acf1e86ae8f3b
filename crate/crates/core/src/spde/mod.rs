//! Finite-difference solver for the forward equation, the weak-form defect
//! and Monte Carlo energy norms.

pub mod ensemble;
pub mod operator;
pub mod solver;
pub mod weak;

pub use ensemble::{mean_sd, mean_stderr, Ensemble};
pub use operator::{assemble_elliptic, EllipticOperator};
pub use solver::{SpdeSolver, SpdeTrajectory, STABILITY_BUDGET, TRAJECTORY_CSV_HEADER};
pub use weak::{energy_bound_check, weak_residual, EnergyReport};
