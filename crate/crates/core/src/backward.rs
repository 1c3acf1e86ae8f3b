//! Backward-in-time conditional stability: the interpolation ratio, the
//! Hoelder exponent and the modulus `beta`, dense path solution operators,
//! Tikhonov reconstruction of `y(t0)` from `y(T)`, and rate fits.

use std::io::Write;
use std::sync::Arc;

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen, SVD};
use rayon::prelude::*;

use crate::coeffs::CoefficientSet;
use crate::error::{Error, Result};
use crate::field::SpaceQuadrature;
use crate::fit::{loglog_fit, PowerFit};
use crate::grid::{SpatialGrid, TimeGrid};
use crate::sde::{standard_normal, BrownianPath};
use crate::spde::{Ensemble, SpdeSolver};
use crate::weight::{HolderExponent, HolderProvenance};

/// Dense operator build budget (interior nodes).
pub const MAX_DENSE_NODES: usize = 512;

#[derive(Clone, Debug, PartialEq)]
pub struct InterpolationRatio {
    /// `|y(t0)|_{L^2(Omega; L^2)}`
    pub num: f64,
    /// `|y|_{L^2(0,T; L^2)}^{1-theta} |y(T)|_{L^2(Omega; H^1)}^theta`
    pub den: f64,
    pub ratio: f64,
    /// `den = 0` while `num > 0`.
    pub anomaly: bool,
}

impl InterpolationRatio {
    pub fn from_norms(y_t0: f64, y_l2: f64, y_t_h1: f64, theta: f64) -> Self {
        let num = y_t0;
        let den = y_l2.powf(1.0 - theta) * y_t_h1.powf(theta);
        let (ratio, anomaly) = if num == 0.0 {
            (0.0, false)
        } else if den == 0.0 {
            (f64::INFINITY, true)
        } else {
            (num / den, false)
        };
        Self {
            num,
            den,
            ratio,
            anomaly,
        }
    }
}

/// Monte Carlo norms of the interpolation inequality for the ensemble, with
/// `t0` the time node `k_t0`.
pub fn interpolation_ratio(ens: &Ensemble, k_t0: usize, theta: &HolderExponent) -> Result<InterpolationRatio> {
    let solver = ens.solver();
    let tg = solver.time_grid();
    let n = tg.steps();
    if k_t0 == 0 || k_t0 > n {
        return Err(Error::Precondition(format!("t0 index {k_t0} must lie in (0, {n}]")));
    }
    let grid = solver.grid().clone();
    let q = SpaceQuadrature::new(&grid);
    let wt = tg.trapezoid_weights(0, n);
    let per = ens.fold(
        |_| [0.0f64; 3],
        |acc, k, y| {
            let full = grid.embed(y);
            let l2 = q.l2_sq(&full);
            acc[1] += wt[k] * l2;
            if k == k_t0 {
                acc[0] = l2;
            }
            if k == n {
                acc[2] = l2 + q.grad_sq(&full);
            }
        },
    )?;
    let m = per.len() as f64;
    let mean = |i: usize| (per.iter().map(|p| p[i]).sum::<f64>() / m).sqrt();
    Ok(InterpolationRatio::from_norms(mean(0), mean(1), mean(2), theta.value()))
}

/// `2 (e^{l3 t0} - e^{l3 t1}) / (C + 2 (e^{l3 t0} - e^{l3 t1}))`.
pub fn theta_from_formula(lambda3: f64, t0: f64, t1: f64, c_abs: f64) -> Result<HolderExponent> {
    if !(0.0 < t1 && t1 < t0) {
        return Err(Error::Precondition(format!("need 0 < t1 < t0 (t1={t1}, t0={t0})")));
    }
    if !(lambda3 > 0.0 && c_abs > 0.0) {
        return Err(Error::Precondition("need lambda3 > 0 and C > 0".into()));
    }
    let d = 2.0 * ((lambda3 * t0).exp() - (lambda3 * t1).exp());
    HolderExponent::new(
        d / (c_abs + d),
        HolderProvenance::Formula {
            lambda3,
            t0,
            t1,
            c_abs,
        },
    )
}

/// `C M^{1-theta} x^theta`.
pub fn beta_bound(m_prior: f64, theta: f64, c_emp: f64, obs_norm: f64) -> Result<f64> {
    if !(m_prior > 0.0 && obs_norm >= 0.0) {
        return Err(Error::Precondition(format!(
            "need M > 0 and a nonnegative observation norm (M={m_prior}, x={obs_norm})"
        )));
    }
    if obs_norm == 0.0 {
        return Ok(0.0);
    }
    Ok(c_emp * m_prior.powf(1.0 - theta) * obs_norm.powf(theta))
}

/// Dense matrices of `y0 -> y(T)` and `y0 -> y(t0)` on interior nodes along
/// one path, for the homogeneous equation.
#[derive(Clone, Debug)]
pub struct PathSolutionOperator {
    pub grid: Arc<SpatialGrid>,
    pub k_t0: usize,
    pub path: BrownianPath,
    pub terminal: DMatrix<f64>,
    pub at_t0: DMatrix<f64>,
    singular: DVector<f64>,
}

pub fn build_path_operator(
    grid: Arc<SpatialGrid>,
    tg: TimeGrid,
    c: &CoefficientSet,
    path: &BrownianPath,
    k_t0: usize,
) -> Result<PathSolutionOperator> {
    let n = grid.interior_len();
    if n > MAX_DENSE_NODES {
        return Err(Error::OperatorBudget {
            nodes: n,
            max: MAX_DENSE_NODES,
        });
    }
    if k_t0 > tg.steps() {
        return Err(Error::Precondition(format!("t0 index {k_t0} beyond horizon")));
    }
    let steps = tg.steps();
    let solver = SpdeSolver::new(grid.clone(), tg, c.homogeneous())?;
    let cols: Vec<(Vec<f64>, Vec<f64>)> = (0..n)
        .into_par_iter()
        .map(|j| {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            let (mut at, mut term) = (Vec::new(), Vec::new());
            solver.run(&e, path, |k, y| {
                if k == k_t0 {
                    at = y.to_vec();
                }
                if k == steps {
                    term = y.to_vec();
                }
            })?;
            Ok((term, at))
        })
        .collect::<Result<_>>()?;
    let terminal = DMatrix::from_fn(n, n, |i, j| cols[j].0[i]);
    let at_t0 = DMatrix::from_fn(n, n, |i, j| cols[j].1[i]);
    let singular = SVD::new(terminal.clone(), false, false).singular_values;
    Ok(PathSolutionOperator {
        grid,
        k_t0,
        path: path.clone(),
        terminal,
        at_t0,
        singular,
    })
}

impl PathSolutionOperator {
    pub fn dim(&self) -> usize {
        self.terminal.nrows()
    }

    pub fn apply_terminal(&self, y0: &[f64]) -> Vec<f64> {
        (&self.terminal * DVector::from_column_slice(y0)).as_slice().to_vec()
    }

    pub fn apply_t0(&self, y0: &[f64]) -> Vec<f64> {
        (&self.at_t0 * DVector::from_column_slice(y0)).as_slice().to_vec()
    }

    /// Singular values of `y0 -> y(T)`, descending.
    pub fn singular_values(&self) -> &[f64] {
        self.singular.as_slice()
    }

    /// Positive value witnesses injectivity of `y0 -> y(T)`.
    pub fn sigma_min(&self) -> f64 {
        self.singular.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Eigenvalues of the symmetric part of `y0 -> y(T)`, ascending.
    pub fn symmetric_eigenvalues(&self) -> Vec<f64> {
        let s = (&self.terminal + self.terminal.transpose()) * 0.5;
        let mut ev: Vec<f64> = SymmetricEigen::new(s).eigenvalues.iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        ev
    }

    /// Squared worst-case error at `t0` over `{|A x| <= delta, |x| <= 1}`,
    /// up to a factor two: `2 delta^2 lambda_max(B^T B, A^T A + delta^2 I)`
    /// with `A` the terminal and `B` the `t0` map (Euclidean norms).
    pub fn stability_modulus(&self, delta: f64) -> Result<f64> {
        let n = self.dim();
        let a = &self.terminal;
        let b = &self.at_t0;
        let c = a.transpose() * a + DMatrix::identity(n, n) * (delta * delta);
        let chol = Cholesky::new(c).ok_or_else(|| Error::LinearSolve("A^T A + delta^2 I not positive".into()))?;
        let l = chol.l();
        let li = l
            .solve_lower_triangular(&DMatrix::identity(n, n))
            .ok_or_else(|| Error::LinearSolve("singular Cholesky factor".into()))?;
        let bl = b * li.transpose();
        let m = bl.transpose() * &bl;
        let lmax = SymmetricEigen::new(m).eigenvalues.iter().copied().fold(0.0, f64::max);
        Ok((2.0 * delta * delta * lmax).sqrt())
    }
}

/// Exponent of the worst-case stability modulus over `deltas`.
pub fn fitted_theta(op: &PathSolutionOperator, deltas: &[f64]) -> Result<PowerFit> {
    let w: Vec<f64> = deltas
        .iter()
        .map(|&d| op.stability_modulus(d))
        .collect::<Result<_>>()?;
    loglog_fit(deltas, &w)
}

/// Terminal observation along a known path, with a perturbation of
/// discrete `L^2` norm `noise_level`.
#[derive(Clone, Debug, PartialEq)]
pub struct ObservationAtT {
    pub values: Vec<f64>,
    pub noise_level: f64,
}

/// `y(T)` of `y0` plus a perturbation of norm exactly `noise_level` in a
/// direction drawn from the keyed stream `(seed, draw)`.
pub fn observe(op: &PathSolutionOperator, y0: &[f64], noise_level: f64, seed: u64, draw: u64) -> ObservationAtT {
    let mut values = op.apply_terminal(y0);
    if noise_level > 0.0 {
        let dir: Vec<f64> = (0..values.len())
            .map(|i| standard_normal(seed, draw, i as u64))
            .collect();
        let norm = discrete_l2(&op.grid, &dir);
        for (v, d) in values.iter_mut().zip(&dir) {
            *v += noise_level * d / norm;
        }
    }
    ObservationAtT {
        values,
        noise_level,
    }
}

/// `(h^d sum v^2)^{1/2}` over interior nodes.
pub fn discrete_l2(grid: &SpatialGrid, v: &[f64]) -> f64 {
    (grid.cell_volume() * v.iter().map(|x| x * x).sum::<f64>()).sqrt()
}

#[derive(Clone, Debug, PartialEq)]
pub struct TikhonovResult {
    pub y0: Vec<f64>,
    pub y_t0: Vec<f64>,
    /// Condition number of `A^T A + alpha I`.
    pub condition: f64,
    pub ill_conditioned: bool,
}

/// Condition numbers above this are flagged in results.
pub const CONDITION_WARN: f64 = 1e14;

/// Minimizes `|A y0 - obs|^2 + alpha |y0|^2` through the normal equations
/// and maps the minimizer to `t0`.
pub fn tikhonov_backward(op: &PathSolutionOperator, obs: &ObservationAtT, alpha: f64) -> Result<TikhonovResult> {
    if !(alpha > 0.0) {
        return Err(Error::Precondition(format!("alpha must be positive (got {alpha})")));
    }
    let n = op.dim();
    let a = &op.terminal;
    let normal = a.transpose() * a + DMatrix::identity(n, n) * alpha;
    let rhs = a.transpose() * DVector::from_column_slice(&obs.values);
    let smax = op.singular.iter().copied().fold(0.0, f64::max);
    let smin = op.sigma_min();
    let condition = (smax * smax + alpha) / (smin * smin + alpha);
    let chol = Cholesky::new(normal).ok_or_else(|| {
        Error::LinearSolve(format!("normal equations not positive (condition {condition:.3e})"))
    })?;
    let x = chol.solve(&rhs);
    let y0 = x.as_slice().to_vec();
    Ok(TikhonovResult {
        y_t0: op.apply_t0(&y0),
        y0,
        condition,
        ill_conditioned: condition > CONDITION_WARN,
    })
}

/// Log-log slope of `(delta_noise, error)` pairs; needs at least four pairs
/// spanning two decades of `delta_noise`.
pub fn fit_holder_rate(pairs: &[(f64, f64)]) -> Result<PowerFit> {
    if pairs.len() < 4 {
        return Err(Error::Degenerate(format!("{} pairs, need at least 4", pairs.len())));
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) = pairs.iter().copied().unzip();
    let lo = xs.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = xs.iter().copied().fold(0.0, f64::max);
    if !(lo > 0.0 && hi / lo >= 100.0 * (1.0 - 1e-12)) {
        return Err(Error::Degenerate(format!("noise levels span {lo:e}..{hi:e}, need two decades")));
    }
    loglog_fit(&xs, &ys)
}

#[derive(Clone, Debug, PartialEq)]
pub struct RateRow {
    pub delta_noise: f64,
    pub alpha: f64,
    pub err_t0: f64,
    /// Slope fitted on this row and all earlier rows; absent on the first.
    pub slope_running: Option<f64>,
}

pub const RATE_CSV_HEADER: &str = "delta_noise,alpha,err_t0,slope_running";

/// Reconstruction error at `t0` for each noise level with `alpha = delta^2`,
/// as the RMS over `draws` noise directions; discrete `L^2` norms.
pub fn rate_experiment(
    op: &PathSolutionOperator,
    y0: &[f64],
    deltas: &[f64],
    draws: u64,
    seed: u64,
) -> Result<Vec<RateRow>> {
    let truth = op.apply_t0(y0);
    let mut rows: Vec<RateRow> = Vec::new();
    for (i, &d) in deltas.iter().enumerate() {
        let alpha = d * d;
        let mut acc = 0.0;
        for j in 0..draws.max(1) {
            let obs = observe(op, y0, d, seed, i as u64 * draws.max(1) + j);
            let rec = tikhonov_backward(op, &obs, alpha)?;
            let diff: Vec<f64> = rec.y_t0.iter().zip(&truth).map(|(a, b)| a - b).collect();
            acc += discrete_l2(&op.grid, &diff).powi(2);
        }
        let err = (acc / draws.max(1) as f64).sqrt();
        rows.push(RateRow {
            delta_noise: d,
            alpha,
            err_t0: err,
            slope_running: None,
        });
        if rows.len() >= 2 {
            let (xs, ys): (Vec<f64>, Vec<f64>) = rows.iter().map(|r| (r.delta_noise, r.err_t0)).unzip();
            rows.last_mut().unwrap().slope_running = loglog_fit(&xs, &ys).ok().map(|f| f.slope);
        }
    }
    Ok(rows)
}

pub fn write_rate_csv(rows: &[RateRow], mut w: impl Write) -> std::io::Result<()> {
    writeln!(w, "{RATE_CSV_HEADER}")?;
    for r in rows {
        match r.slope_running {
            Some(s) => writeln!(w, "{:e},{:e},{:e},{s:e}", r.delta_noise, r.alpha, r.err_t0)?,
            None => writeln!(w, "{:e},{:e},{:e},", r.delta_noise, r.alpha, r.err_t0)?,
        }
    }
    Ok(())
}
