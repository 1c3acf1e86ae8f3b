use std::fmt::Write as _;

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::sde::BrownianPath;

use super::flux::{normal_flux, FluxObservation};
use super::source::{forward_source, SourceProblem, SourceSpec};

/// Relative eigenvalue threshold below which a source basis counts as
/// linearly dependent.
pub const INDEPENDENCE_TOL: f64 = 1e-10;

/// Flux of every basis element on `[0, t0]` (the horizon of the problem's
/// time grid), one forward solve per element on the same path.
pub fn basis_fluxes(problem: &SourceProblem, basis: &[SourceSpec], path: &BrownianPath) -> Result<Vec<FluxObservation>> {
    let t0 = problem.tg.horizon();
    basis
        .par_iter()
        .map(|h| normal_flux(&forward_source(problem, h, path)?, t0))
        .collect()
}

fn gram_of<T>(items: &[T], inner: impl Fn(&T, &T) -> Result<f64>) -> Result<DMatrix<f64>> {
    let n = items.len();
    let mut g = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v = inner(&items[i], &items[j])?;
            g[(i, j)] = v;
            g[(j, i)] = v;
        }
    }
    Ok(g)
}

fn sorted_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    let mut ev: Vec<f64> = SymmetricEigen::new(m.clone()).eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

/// Raw flux Gram `G_ij = <F_i, F_j>`, with no independence check on the
/// basis.
pub fn flux_gram(problem: &SourceProblem, basis: &[SourceSpec], path: &BrownianPath) -> Result<DMatrix<f64>> {
    let fluxes = basis_fluxes(problem, basis, path)?;
    gram_of(&fluxes, |a, b| a.inner(b))
}

#[derive(Clone, Debug)]
pub struct GramReport {
    pub labels: Vec<String>,
    /// Source-space Gram `S_ij = <h_i, h_j>`.
    pub source_gram: DMatrix<f64>,
    /// Flux Gram `G_ij = <F_i, F_j>`.
    pub flux_gram: DMatrix<f64>,
    /// Eigenvalues of `G`, ascending.
    pub eigenvalues: Vec<f64>,
    pub min_eigenvalue: f64,
    /// `lambda_min(G) / lambda_max(G)`
    pub relative_min: f64,
    /// `sqrt(lambda_min(G, S))`: `|F(h)| >= kappa_min |h|` on the span.
    pub kappa_min: f64,
    pub fluxes: Vec<FluxObservation>,
}

impl GramReport {
    pub fn injective(&self) -> bool {
        self.min_eigenvalue > 0.0 && self.relative_min > INDEPENDENCE_TOL
    }

    /// Structured text: labels, both matrices and the eigenvalues.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mat = |m: &DMatrix<f64>| {
            let rows: Vec<String> = (0..m.nrows())
                .map(|i| {
                    let r: Vec<String> = (0..m.ncols()).map(|j| format!("{:.12e}", m[(i, j)])).collect();
                    format!("[{}]", r.join(", "))
                })
                .collect();
            format!("[{}]", rows.join(", "))
        };
        let list = |v: &[f64]| v.iter().map(|x| format!("{x:.12e}")).collect::<Vec<_>>().join(", ");
        let labels: Vec<String> = self.labels.iter().map(|l| format!("\"{l}\"")).collect();
        let _ = writeln!(s, "{{");
        let _ = writeln!(s, "  \"labels\": [{}],", labels.join(", "));
        let _ = writeln!(s, "  \"source_gram\": {},", mat(&self.source_gram));
        let _ = writeln!(s, "  \"flux_gram\": {},", mat(&self.flux_gram));
        let _ = writeln!(s, "  \"eigenvalues\": [{}],", list(&self.eigenvalues));
        let _ = writeln!(s, "  \"min_eigenvalue\": {:.12e},", self.min_eigenvalue);
        let _ = writeln!(s, "  \"relative_min\": {:.12e},", self.relative_min);
        let _ = writeln!(s, "  \"kappa_min\": {:.12e}", self.kappa_min);
        let _ = writeln!(s, "}}");
        s
    }
}

/// Injectivity witness for the source-to-flux map on `span(basis)`.
pub fn discriminability_gram(problem: &SourceProblem, basis: &[SourceSpec], path: &BrownianPath) -> Result<GramReport> {
    if basis.is_empty() {
        return Err(Error::Degenerate("empty source basis".into()));
    }
    let s = gram_of(basis, |a, b| Ok(a.inner(b)))?;
    let sev = sorted_eigenvalues(&s);
    let smax = sev.last().copied().unwrap_or(0.0);
    if !(smax > 0.0) || sev[0] <= INDEPENDENCE_TOL * smax {
        return Err(Error::Degenerate(format!(
            "source basis is linearly dependent (eigenvalues {:.3e}..{:.3e})",
            sev[0], smax
        )));
    }
    let fluxes = basis_fluxes(problem, basis, path)?;
    if fluxes.iter().any(|f| !f.is_finite()) {
        return Err(Error::NonFinite("basis flux"));
    }
    let g = gram_of(&fluxes, |a, b| a.inner(b))?;
    let eigenvalues = sorted_eigenvalues(&g);
    let min_eigenvalue = eigenvalues[0];
    let gmax = eigenvalues.last().copied().unwrap_or(0.0);
    let relative_min = if gmax > 0.0 { min_eigenvalue / gmax } else { 0.0 };

    // lambda_min(G, S) via S = L L^T, eig(L^{-1} G L^{-T})
    let l = Cholesky::new(s.clone())
        .ok_or_else(|| Error::Degenerate("source Gram not positive definite".into()))?
        .l();
    let n = basis.len();
    let li = l
        .solve_lower_triangular(&DMatrix::identity(n, n))
        .ok_or_else(|| Error::LinearSolve("singular source factor".into()))?;
    let m = &li * &g * li.transpose();
    let gen_min = sorted_eigenvalues(&((&m + m.transpose()) * 0.5))[0];

    Ok(GramReport {
        labels: basis.iter().map(|h| h.label.clone()).collect(),
        source_gram: s,
        flux_gram: g,
        eigenvalues,
        min_eigenvalue,
        relative_min,
        kappa_min: gen_min.max(0.0).sqrt(),
        fluxes,
    })
}

/// Relative slack of the flux lower bound.
pub const PROBE_SLACK: f64 = 0.1;

#[derive(Clone, Debug, PartialEq)]
pub struct ProbeVerdict {
    pub flux_norm: f64,
    pub source_norm: f64,
    /// `kappa_min |h|`
    pub bound: f64,
    /// Zero source: nothing to assert.
    pub vacuous: bool,
    pub pass: bool,
}

/// Checks `|F(h)| >= (1 - slack) kappa_min |h|` for one candidate source.
pub fn zero_flux_probe(problem: &SourceProblem, h: &SourceSpec, path: &BrownianPath, kappa_min: f64) -> Result<ProbeVerdict> {
    let source_norm = h.norm();
    let flux = normal_flux(&forward_source(problem, h, path)?, problem.tg.horizon())?;
    let flux_norm = flux.norm();
    let bound = kappa_min * source_norm;
    let vacuous = source_norm == 0.0;
    let pass = flux_norm.is_finite() && (vacuous || flux_norm >= (1.0 - PROBE_SLACK) * bound);
    Ok(ProbeVerdict {
        flux_norm,
        source_norm,
        bound,
        vacuous,
        pass,
    })
}

/// Least-squares coefficients of `observed` in the span of the basis fluxes.
/// Demonstration only.
pub fn least_squares_recovery(report: &GramReport, observed: &FluxObservation) -> Result<Vec<f64>> {
    let rhs: Vec<f64> = report.fluxes.iter().map(|f| f.inner(observed)).collect::<Result<_>>()?;
    let chol = Cholesky::new(report.flux_gram.clone())
        .ok_or_else(|| Error::LinearSolve("flux Gram not positive definite".into()))?;
    Ok(chol.solve(&DVector::from_vec(rhs)).iter().copied().collect())
}
