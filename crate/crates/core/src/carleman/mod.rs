//! Weighted functionals of the Carleman inequality, `s`-`lambda` sweeps, and
//! the term-by-term ledger of the integrated weighted identity.

pub mod functionals;
pub mod identity;

pub use functionals::{
    carleman_lhs, carleman_rhs, carleman_sweep, collect_profiles, CarlemanFunctionals,
    PathProfiles, RhsTerms, SweepCell, SweepTable, SWEEP_CSV_HEADER,
};
pub use identity::{integrated_identity_residual, IdentityLedger, IdentityReport};

use crate::error::Result;
use crate::grid::TimeGrid;
use crate::weight::CarlemanWeight;

// below this, theta^2 is evaluated without rescaling
const RESCALE_ABOVE: f64 = 300.0;

/// Common exponent `L` such that `theta_k = exp(s phi_k - L)` stays in
/// range over `[t_from, t_to]`; zero when no rescaling is needed. Fails
/// when `s phi` exceeds the admissible maximum.
pub(crate) fn log_scale(w: &CarlemanWeight, tg: &TimeGrid, from: usize, to: usize) -> Result<f64> {
    let m = w.max_log_theta(tg.time(from), tg.time(to))?;
    Ok(if m > RESCALE_ABOVE { m } else { 0.0 })
}
