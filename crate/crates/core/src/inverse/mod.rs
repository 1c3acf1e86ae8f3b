//! Inverse source problem: forward model with source `h R`, boundary flux
//! observation, the `y -> z -> u -> w` transformation chain and the
//! discriminability witness.

mod flux;
mod gram;
mod source;
mod transform;

pub use flux::{boundary_sites, normal_flux, site_flux, BoundarySite, FluxObservation, FLUX_CSV_HEADER};
pub use gram::{
    basis_fluxes, discriminability_gram, flux_gram, least_squares_recovery, zero_flux_probe, GramReport, ProbeVerdict,
    INDEPENDENCE_TOL, PROBE_SLACK,
};
pub use source::{forward_source, CutoffChi, ModulatorR, SourceProblem, SourceSpec};
pub use transform::{
    default_test_function, transform_chain, transform_chain_with, volterra_identity_check, w_forcing, weak_defect, FullTrajectory,
    TransformChain,
};

/// `sqrt(2 / t0) sin(j pi t / t0)`, `j = 1..=n`: orthonormal on `(0, t0)` and
/// zero at `t = 0`, so the forced solution stays compatible with `y(0) = 0`.
pub fn sine_basis(tg: &crate::grid::TimeGrid, n: usize) -> Vec<SourceSpec> {
    let t0 = tg.horizon();
    (1..=n)
        .map(|j| {
            SourceSpec::time_only(&format!("sin{j}"), tg, move |t| {
                (2.0 / t0).sqrt() * (j as f64 * std::f64::consts::PI * t / t0).sin()
            })
        })
        .collect()
}
