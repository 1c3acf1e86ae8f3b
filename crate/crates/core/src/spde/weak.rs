use crate::coeffs::{compute_r1, CoefficientSet};
use crate::error::{Error, Result};
use crate::field::{gradient, SpaceQuadrature};
use crate::grid::SpatialGrid;

use super::ensemble::Ensemble;
use super::solver::SpdeTrajectory;

/// Deterministic integrand `-<b grad y, grad p> + <(a1, grad y) + a2 y + f, p>`
/// at time `t`, all on full nodes.
fn drift_pairing(
    grid: &SpatialGrid,
    q: &SpaceQuadrature,
    c: &CoefficientSet,
    t: f64,
    y: &[f64],
    p: &[f64],
    grad_p: &[Vec<f64>],
) -> f64 {
    let gy = gradient(grid, y);
    let dim = grid.dim();
    let mut acc = 0.0;
    for (idx, w) in q.weights().iter().enumerate() {
        let x = grid.full_coords(idx);
        let b = c.b_at(t, x);
        let a1 = c.a1_at(t, x);
        let mut flux = 0.0;
        let mut adv = 0.0;
        for i in 0..dim {
            for j in 0..dim {
                flux += b[i][j] * gy[i][idx] * grad_p[j][idx];
            }
            adv += a1[i] * gy[i][idx];
        }
        let lower = adv + c.a2_at(t, x) * y[idx] + c.f_at(t, x);
        acc += w * (-flux + lower * p[idx]);
    }
    acc
}

/// Discrete weak-form defect at time node `k` against a test function `p`
/// given on the full node set:
///
/// ```text
/// <y(t_k), p> - <y0, p> - int_0^{t_k} [-<b grad y, grad p> + <(a1, grad y) + a2 y + f, p>] dt
///                       - int_0^{t_k} <a3 y + g, p> dB
/// ```
///
/// with trapezoid quadrature in time for the `dt` integral and left points
/// for the `dB` integral.
pub fn weak_residual(traj: &SpdeTrajectory, c: &CoefficientSet, p: &[f64], k: usize) -> Result<f64> {
    let grid = traj.grid().as_ref();
    if p.len() != grid.full_len() {
        return Err(Error::DimensionMismatch {
            expected: grid.full_len(),
            got: p.len(),
        });
    }
    let pmax = p.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    for (idx, v) in p.iter().enumerate() {
        if grid.is_boundary_full(idx) && v.abs() > 1e-12 * pmax.max(1.0) {
            return Err(Error::Precondition(format!(
                "test function does not vanish at boundary node {idx}"
            )));
        }
    }
    if k > traj.steps() {
        return Err(Error::Precondition(format!("time index {k} beyond {}", traj.steps())));
    }
    let tg = traj.time_grid();
    let q = SpaceQuadrature::new(grid);
    let grad_p = gradient(grid, p);
    let dt = tg.dt();
    let path = traj.path();

    let mut res = q.inner(&traj.full(k), p) - q.inner(&traj.full(0), p);
    let mut prev = None;
    for j in 0..=k {
        let t = tg.time(j);
        let y = traj.full(j);
        let cur = drift_pairing(grid, &q, c, t, &y, p, &grad_p);
        if let Some(pv) = prev {
            res -= 0.5 * (pv + cur) * dt;
        }
        prev = Some(cur);
        if j < k {
            let noise: Vec<f64> = (0..y.len())
                .map(|idx| {
                    let x = grid.full_coords(idx);
                    c.a3_at(t, x) * y[idx] + c.g_at(t, x)
                })
                .collect();
            res -= q.inner(&noise, p) * path.increment(j);
        }
    }
    Ok(res.abs())
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnergyReport {
    /// `(E sup_t |y(t)|^2)^{1/2}`
    pub lhs_sup: f64,
    /// `(E int_0^T |y|_{H^1}^2 dt)^{1/2}`
    pub lhs_l2: f64,
    /// `r1 |y0|`
    pub rhs: f64,
    pub ratio_sup: f64,
    pub ratio_l2: f64,
    /// `(lhs_sup + lhs_l2) / rhs`
    pub ratio: f64,
    pub r1: f64,
}

/// Monte Carlo energy norms of an ensemble against `r1 |y0|_{L^2}`; ratios
/// are zero for zero initial data.
pub fn energy_bound_check(ens: &Ensemble, c: &CoefficientSet) -> Result<EnergyReport> {
    let solver = ens.solver();
    let grid = solver.grid().clone();
    let tg = solver.time_grid();
    let wt = tg.trapezoid_weights(0, tg.steps());
    let q = SpaceQuadrature::new(&grid);
    let per_path = ens.fold(
        |_| (0.0f64, 0.0f64),
        |acc, k, y| {
            let full = grid.embed(y);
            let l2 = q.l2_sq(&full);
            acc.0 = acc.0.max(l2);
            acc.1 += wt[k] * (l2 + q.grad_sq(&full));
        },
    )?;
    let m = per_path.len() as f64;
    let lhs_sup = (per_path.iter().map(|p| p.0).sum::<f64>() / m).sqrt();
    let lhs_l2 = (per_path.iter().map(|p| p.1).sum::<f64>() / m).sqrt();
    let r1 = compute_r1(c);
    let rhs = r1 * q.l2_sq(&grid.embed(ens.y0())).sqrt();
    let div = |a: f64| if rhs > 0.0 { a / rhs } else { 0.0 };
    Ok(EnergyReport {
        lhs_sup,
        lhs_l2,
        rhs,
        ratio_sup: div(lhs_sup),
        ratio_l2: div(lhs_l2),
        ratio: div(lhs_sup + lhs_l2),
        r1,
    })
}
