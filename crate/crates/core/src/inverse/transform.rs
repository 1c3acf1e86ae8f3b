use std::sync::Arc;

use crate::error::{Error, Result};
use crate::field::{gradient, partial, SpaceQuadrature};
use crate::grid::{SpatialGrid, TimeGrid};
use crate::sde::BrownianPath;
use crate::spde::SpdeTrajectory;

use super::source::{CutoffChi, SourceProblem, SourceSpec};

/// Step for centered differences of coefficient closures in `x1`.
const COEFF_EPS: f64 = 1e-5;

/// Trajectory stored on every full node, boundary included (the derived
/// fields `u` and `w` need not vanish on the boundary).
#[derive(Clone, Debug, PartialEq)]
pub struct FullTrajectory {
    pub grid: Arc<SpatialGrid>,
    pub tg: TimeGrid,
    pub values: Vec<Vec<f64>>,
}

impl FullTrajectory {
    pub fn slice(&self, k: usize) -> &[f64] {
        &self.values[k]
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().flatten().fold(0.0, |m, v| m.max(v.abs()))
    }
}

#[derive(Clone, Debug)]
pub struct TransformChain {
    /// `z = y / R`
    pub z: FullTrajectory,
    /// `u = z_{x1}`
    pub u: FullTrajectory,
    /// `w = chi u`
    pub w: FullTrajectory,
    /// Max over time nodes of the weak-form defect of each equation.
    pub residual_z: f64,
    pub residual_u: f64,
    pub residual_w: f64,
}

/// Coefficients of the `z` equation at one point:
/// `dz - lap z dt = [(d, grad z) + k z + h] dt + b3 z dB` with
/// `d = b1 + 2 grad R / R` and `k = b2 + lap R / R - R_t / R + (grad R / R, b1)`.
fn z_coeffs(p: &SourceProblem, t: f64, x: [f64; 2]) -> ([f64; 2], f64) {
    let c = &p.lower;
    let r = p.r.at(t, x);
    let g = (p.r.grad)(t, x);
    let b1 = c.a1_at(t, x);
    let d = [b1[0] + 2.0 * g[0] / r, b1[1] + 2.0 * g[1] / r];
    let k = c.a2_at(t, x) + (p.r.lap)(t, x) / r - (p.r.r_t)(t, x) / r + (g[0] * b1[0] + g[1] * b1[1]) / r;
    (d, k)
}

fn dx1<T>(f: impl Fn([f64; 2]) -> T, x: [f64; 2], combine: impl Fn(T, T) -> T) -> T {
    let e = COEFF_EPS;
    combine(f([x[0] + e, x[1]]), f([x[0] - e, x[1]]))
}

/// Pointwise coefficient tables over the full nodes at one time.
struct Tables {
    d: Vec<[f64; 2]>,
    k: Vec<f64>,
    d_x1: Vec<[f64; 2]>,
    k_x1: Vec<f64>,
    b3: Vec<f64>,
    b3_x1: Vec<f64>,
    h: Vec<f64>,
}

fn tables(p: &SourceProblem, h: Option<&SourceSpec>, t: f64) -> Tables {
    let grid = &p.grid;
    let n = grid.full_len();
    let mut tb = Tables {
        d: Vec::with_capacity(n),
        k: Vec::with_capacity(n),
        d_x1: Vec::with_capacity(n),
        k_x1: Vec::with_capacity(n),
        b3: Vec::with_capacity(n),
        b3_x1: Vec::with_capacity(n),
        h: Vec::with_capacity(n),
    };
    let two_e = 2.0 * COEFF_EPS;
    for idx in 0..n {
        let x = grid.full_coords(idx);
        let (d, k) = z_coeffs(p, t, x);
        tb.d.push(d);
        tb.k.push(k);
        tb.d_x1.push(dx1(|y| z_coeffs(p, t, y).0, x, |a, b| [(a[0] - b[0]) / two_e, (a[1] - b[1]) / two_e]));
        tb.k_x1.push(dx1(|y| z_coeffs(p, t, y).1, x, |a, b| (a - b) / two_e));
        tb.b3.push(p.lower.a3_at(t, x));
        tb.b3_x1.push(dx1(|y| p.lower.a3_at(t, y), x, |a, b| (a - b) / two_e));
        tb.h.push(h.map_or(0.0, |h| h.eval(t, x[1])));
    }
    tb
}

fn dot_grad(d: &[[f64; 2]], g: &[Vec<f64>], idx: usize) -> f64 {
    g.iter().enumerate().map(|(i, gi)| d[idx][i] * gi[idx]).sum()
}

/// Weak-form defect, max over time nodes, of `dv - lap v dt = F dt + S dB`
/// against a test function `p` vanishing on the boundary:
///
/// ```text
/// <v_k - v_0, p> + int_0^{t_k} <grad v, grad p> dt - int <F, p> dt - sum_{j<k} <S_j, p> dB_j
/// ```
///
/// with trapezoid `dt` quadrature and left-point `dB`. `terms(j)` returns
/// `(F_j, S_j)` on full nodes.
pub fn weak_defect(
    grid: &SpatialGrid,
    tg: &TimeGrid,
    path: &BrownianPath,
    v: &[Vec<f64>],
    p: &[f64],
    terms: impl Fn(usize) -> (Vec<f64>, Vec<f64>),
) -> f64 {
    let q = SpaceQuadrature::new(grid);
    let gp = gradient(grid, p);
    let dt = tg.dt();
    let pairing = |j: usize, f: &[f64]| -> f64 {
        let gv = gradient(grid, &v[j]);
        let stiff: f64 = gv.iter().zip(&gp).map(|(a, b)| q.inner(a, b)).sum();
        -stiff + q.inner(f, p)
    };
    let mut worst = 0.0f64;
    let mut acc = 0.0;
    let mut prev: Option<f64> = None;
    let v0p = q.inner(&v[0], p);
    for j in 0..v.len() {
        let (f, s) = terms(j);
        let cur = pairing(j, &f);
        if let Some(pv) = prev {
            acc -= 0.5 * (pv + cur) * dt;
            let r = q.inner(&v[j], p) - v0p + acc;
            worst = worst.max(r.abs());
        }
        prev = Some(cur);
        if j + 1 < v.len() {
            acc -= q.inner(&s, p) * path.increment(j);
        }
    }
    worst
}

/// `sin(pi x1 / l) sin(pi x2 / l')` on the full nodes.
pub fn default_test_function(grid: &SpatialGrid) -> Vec<f64> {
    let l: Vec<f64> = grid.axes().iter().map(|a| a.length).collect();
    grid.sample_full(|x| {
        let mut v = (std::f64::consts::PI * x[0] / l[0]).sin();
        if let Some(l2) = l.get(1) {
            v *= (std::f64::consts::PI * x[1] / l2).sin();
        }
        v
    })
}

/// `y -> z = y / R -> u = z_{x1} -> w = chi u`, with weak-form defects of the
/// `z`, `u` and `w` equations against the default test function.
pub fn transform_chain(problem: &SourceProblem, h: &SourceSpec, y: &SpdeTrajectory, chi: &CutoffChi) -> Result<TransformChain> {
    let p = default_test_function(&problem.grid);
    transform_chain_with(problem, h, y, chi, &p)
}

pub fn transform_chain_with(
    problem: &SourceProblem,
    h: &SourceSpec,
    y: &SpdeTrajectory,
    chi: &CutoffChi,
    test: &[f64],
) -> Result<TransformChain> {
    let grid = problem.grid.clone();
    if y.grid().as_ref() != grid.as_ref() {
        return Err(Error::Precondition("trajectory grid differs from the problem grid".into()));
    }
    if test.len() != grid.full_len() {
        return Err(Error::DimensionMismatch {
            expected: grid.full_len(),
            got: test.len(),
        });
    }
    let tg = y.time_grid().clone();
    problem.r.check_floor(&grid, &tg)?;
    let steps = y.steps();

    let mut z = Vec::with_capacity(steps + 1);
    let mut u = Vec::with_capacity(steps + 1);
    let mut w = Vec::with_capacity(steps + 1);
    for k in 0..=steps {
        let t = tg.time(k);
        let full = y.full(k);
        let zk: Vec<f64> = full
            .iter()
            .enumerate()
            .map(|(idx, v)| v / problem.r.at(t, grid.full_coords(idx)))
            .collect();
        let uk = partial(&grid, &zk, 0);
        let c = chi.value(t);
        w.push(uk.iter().map(|v| c * v).collect::<Vec<f64>>());
        u.push(uk);
        z.push(zk);
    }

    let tabs: Vec<Tables> = (0..=steps).map(|k| tables(problem, Some(h), tg.time(k))).collect();
    let n = grid.full_len();
    let path = y.path();

    let residual_z = weak_defect(&grid, &tg, path, &z, test, |j| {
        let tb = &tabs[j];
        let gz = gradient(&grid, &z[j]);
        let f = (0..n).map(|i| dot_grad(&tb.d, &gz, i) + tb.k[i] * z[j][i] + tb.h[i]).collect();
        let s = (0..n).map(|i| tb.b3[i] * z[j][i]).collect();
        (f, s)
    });

    // u and w share the same structure; `scale` is 1 for u and chi for w
    let derived = |v: &[Vec<f64>], with_cutoff: bool| {
        weak_defect(&grid, &tg, path, v, test, |j| {
            let tb = &tabs[j];
            let t = tg.time(j);
            let (c, dc) = if with_cutoff { (chi.value(t), chi.derivative(t)) } else { (1.0, 0.0) };
            let gz = gradient(&grid, &z[j]);
            let gv = gradient(&grid, &v[j]);
            let f = (0..n)
                .map(|i| {
                    c * (dot_grad(&tb.d_x1, &gz, i) + tb.k_x1[i] * z[j][i])
                        + dot_grad(&tb.d, &gv, i)
                        + tb.k[i] * v[j][i]
                        + dc * u[j][i]
                })
                .collect();
            let s = (0..n).map(|i| c * tb.b3_x1[i] * z[j][i] + tb.b3[i] * v[j][i]).collect();
            (f, s)
        })
    };
    let residual_u = derived(&u, false);
    let residual_w = derived(&w, true);

    let wrap = |values| FullTrajectory {
        grid: grid.clone(),
        tg: tg.clone(),
        values,
    };
    Ok(TransformChain {
        z: wrap(z),
        u: wrap(u),
        w: wrap(w),
        residual_z,
        residual_u,
        residual_w,
    })
}

/// Forcing of the `w` equation that does not involve `w` itself, at time
/// node `k`: `(chi [(d_x1, grad z) + k_x1 z] + chi' u, chi (b3)_x1 z)`, the
/// `dt` and `dB` parts on full nodes.
pub fn w_forcing(problem: &SourceProblem, chain: &TransformChain, chi: &CutoffChi, k: usize) -> (Vec<f64>, Vec<f64>) {
    let grid = &problem.grid;
    let t = chain.z.tg.time(k);
    let tb = tables(problem, None, t);
    let (c, dc) = (chi.value(t), chi.derivative(t));
    let z = chain.z.slice(k);
    let u = chain.u.slice(k);
    let gz = gradient(grid, z);
    let f = (0..z.len())
        .map(|i| c * (dot_grad(&tb.d_x1, &gz, i) + tb.k_x1[i] * z[i]) + dc * u[i])
        .collect();
    let g = (0..z.len()).map(|i| c * tb.b3_x1[i] * z[i]).collect();
    (f, g)
}

/// `max |chi z - int_0^{x1} w d eta|` over nodes and times, the integral by
/// cumulative trapezoid along `x1`. Requires `z = 0` on the face `x1 = 0`.
pub fn volterra_identity_check(z: &FullTrajectory, w: &FullTrajectory, chi: &CutoffChi) -> Result<f64> {
    let grid = &z.grid;
    let (m1, m2) = grid.full_shape();
    let h = grid.spacing(0);
    let scale = z.max_abs().max(1.0);
    let mut worst = 0.0f64;
    for (k, (zk, wk)) in z.values.iter().zip(&w.values).enumerate() {
        let c = chi.value(z.tg.time(k));
        for i2 in 0..m2 {
            let row = i2 * m1;
            if zk[row].abs() > 1e-12 * scale {
                return Err(Error::Precondition(format!(
                    "z does not vanish on x1 = 0 (value {:.3e} at time node {k})",
                    zk[row]
                )));
            }
            let mut integral = 0.0;
            for i1 in 0..m1 {
                if i1 > 0 {
                    integral += 0.5 * h * (wk[row + i1 - 1] + wk[row + i1]);
                }
                worst = worst.max((c * zk[row + i1] - integral).abs());
            }
        }
    }
    Ok(worst)
}
