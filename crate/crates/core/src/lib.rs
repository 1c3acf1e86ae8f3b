//! Numerical laboratory for linear stochastic parabolic equations
//!
//! ```text
//! dy - div(b grad y) dt = [(a1, grad y) + a2 y + f] dt + (a3 y + g) dB
//! ```
//!
//! on intervals and rectangles with homogeneous Dirichlet data. The crate
//! provides a semi-implicit finite-difference solver driven by reproducible
//! Brownian paths, together with the machinery used to check weighted
//! (Carleman-type) energy identities and inequalities, backward-in-time
//! conditional stability, and the boundary-flux inverse source problem.

pub mod backward;
pub mod carleman;
pub mod coeffs;
pub mod error;
pub mod field;
pub mod fit;
pub mod grid;
pub mod inverse;
pub mod linalg;
pub mod sde;
pub mod spde;
pub mod weight;

pub use coeffs::{CoefficientSet, SupNorms};
pub use error::{Error, Result};
pub use field::ScalarField;
pub use grid::{SpatialGrid, TimeGrid};
pub use sde::BrownianPath;
pub use spde::{Ensemble, SpdeSolver, SpdeTrajectory};
pub use weight::{CarlemanWeight, HolderExponent, Psi};
