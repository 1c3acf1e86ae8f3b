//! Brownian paths from counter-based streams, scalar ODE/SDE integrators,
//! the scalar weighted-decay (toy Carleman) check and the discrete Ito
//! residual.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::grid::TimeGrid;

// Each step consumes two u64 draws, i.e. four 32-bit ChaCha words.
const WORDS_PER_STEP: u128 = 4;

fn stream(seed: u64, path_index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(path_index);
    rng
}

fn box_muller(rng: &mut ChaCha8Rng) -> f64 {
    // u1 in (0, 1], u2 in [0, 1)
    let u1 = ((rng.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64);
    let u2 = (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Standard normal keyed by `(seed, path_index, step)`; independent of the
/// order in which keys are visited.
pub fn standard_normal(seed: u64, path_index: u64, step: u64) -> f64 {
    let mut rng = stream(seed, path_index);
    rng.set_word_pos(step as u128 * WORDS_PER_STEP);
    box_muller(&mut rng)
}

#[derive(Clone, Debug, PartialEq)]
pub struct BrownianPath {
    pub seed: u64,
    pub index: u64,
    dt: f64,
    increments: Vec<f64>,
    values: Vec<f64>,
}

impl BrownianPath {
    /// Builds `B` by cumulative summation; the stored increments are then
    /// re-derived as differences of `B`, so `B(t_{k+1}) - B(t_k) = dB_k`
    /// holds exactly in floating point.
    pub fn from_increments(dt: f64, raw: Vec<f64>) -> Self {
        let mut values = Vec::with_capacity(raw.len() + 1);
        let mut b = 0.0;
        values.push(b);
        for &d in &raw {
            b += d;
            values.push(b);
        }
        let increments = values.windows(2).map(|w| w[1] - w[0]).collect();
        Self {
            seed: 0,
            index: 0,
            dt,
            increments,
            values,
        }
    }

    /// The path `B = 0`, used for noise-free runs.
    pub fn zero(tg: &TimeGrid) -> Self {
        Self::from_increments(tg.dt(), vec![0.0; tg.steps()])
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn steps(&self) -> usize {
        self.increments.len()
    }

    pub fn increments(&self) -> &[f64] {
        &self.increments
    }

    pub fn increment(&self, k: usize) -> f64 {
        self.increments[k]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn terminal(&self) -> f64 {
        *self.values.last().unwrap_or(&0.0)
    }

    /// Same path on a grid `factor` times coarser (increments summed).
    pub fn coarsen(&self, factor: usize) -> Result<Self> {
        if factor == 0 || self.steps() % factor != 0 {
            return Err(Error::Precondition(format!(
                "cannot coarsen {} steps by {factor}",
                self.steps()
            )));
        }
        let inc = self.increments.chunks(factor).map(|c| c.iter().sum()).collect();
        let mut p = Self::from_increments(self.dt * factor as f64, inc);
        p.seed = self.seed;
        p.index = self.index;
        Ok(p)
    }
}

/// Path `path_index` of the ensemble keyed by `seed`; increments are
/// `N(0, dt)`.
pub fn sample_brownian(seed: u64, path_index: u64, tg: &TimeGrid) -> BrownianPath {
    let sd = tg.dt().sqrt();
    let mut rng = stream(seed, path_index);
    let increments = (0..tg.steps()).map(|_| sd * box_muller(&mut rng)).collect();
    let mut p = BrownianPath::from_increments(tg.dt(), increments);
    p.seed = seed;
    p.index = path_index;
    p
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScalarTrajectory {
    pub grid: TimeGrid,
    pub values: Vec<f64>,
}

impl ScalarTrajectory {
    pub fn terminal(&self) -> f64 {
        *self.values.last().expect("trajectory has at least x(0)")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OdeMode {
    /// `x_{k+1} = (1 + a(t_k) dt) x_k`
    Euler,
    /// `x_{k+1} = exp(a(t_k + dt/2) dt) x_k`; exact for constant `a`.
    Exponential,
}

/// Integrates `x' = a(t) x`, `x(0) = x0`.
pub fn integrate_linear_ode(
    a: &dyn Fn(f64) -> f64,
    x0: f64,
    tg: &TimeGrid,
    mode: OdeMode,
) -> ScalarTrajectory {
    let dt = tg.dt();
    let mut values = Vec::with_capacity(tg.steps() + 1);
    let mut x = x0;
    values.push(x);
    for k in 0..tg.steps() {
        let t = tg.time(k);
        x *= match mode {
            OdeMode::Euler => 1.0 + a(t) * dt,
            OdeMode::Exponential => (a(t + 0.5 * dt) * dt).exp(),
        };
        values.push(x);
    }
    ScalarTrajectory {
        grid: tg.clone(),
        values,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ToyCarlemanReport {
    /// `e^{-2 varsigma T} x(T)^2`
    pub lhs: f64,
    /// `x(0)^2`
    pub rhs: f64,
    pub pass: bool,
    /// `t -> e^{-2 varsigma t} x(t)^2` is nonincreasing on the grid.
    pub monotone: bool,
    /// Steps where the weighted square increased.
    pub violations: Vec<usize>,
    pub sup_a: f64,
}

/// Relative slack for round-off in the toy check; both integrators satisfy
/// the discrete bound exactly in exact arithmetic.
pub const TOY_ROUNDOFF: f64 = 1e-12;

/// Checks `e^{-2 varsigma T} x(T)^2 <= x(0)^2` and monotonicity of the
/// weighted square for `x' = a x`. With `varsigma < sup|a|` the bound is not
/// guaranteed: this is an error unless `exploratory` is set, in which case
/// violations are recorded.
pub fn toy_carleman_check(
    a: &dyn Fn(f64) -> f64,
    x0: f64,
    tg: &TimeGrid,
    varsigma: f64,
    mode: OdeMode,
    exploratory: bool,
) -> Result<ToyCarlemanReport> {
    let dt = tg.dt();
    let sup_a = (0..tg.steps())
        .flat_map(|k| {
            let t = tg.time(k);
            [t, t + 0.5 * dt, t + dt]
        })
        .chain(std::iter::once(0.0))
        .map(|t| a(t).abs())
        .fold(0.0, f64::max);
    if varsigma < sup_a && !exploratory {
        return Err(Error::Precondition(format!(
            "varsigma = {varsigma} below sup|a| = {sup_a}"
        )));
    }
    let traj = integrate_linear_ode(a, x0, tg, mode);
    let weighted: Vec<f64> = traj
        .values
        .iter()
        .enumerate()
        .map(|(k, x)| (-2.0 * varsigma * tg.time(k)).exp() * x * x)
        .collect();
    let violations: Vec<usize> = weighted
        .windows(2)
        .enumerate()
        .filter(|(_, w)| w[1] > w[0] * (1.0 + TOY_ROUNDOFF))
        .map(|(k, _)| k)
        .collect();
    let lhs = *weighted.last().unwrap();
    let rhs = x0 * x0;
    let monotone = violations.is_empty();
    Ok(ToyCarlemanReport {
        lhs,
        rhs,
        pass: monotone && lhs <= rhs * (1.0 + TOY_ROUNDOFF),
        monotone,
        violations,
        sup_a,
    })
}

/// Euler-Maruyama for `dx = a x dt + b x dB` along `path`.
pub fn euler_maruyama_linear(a: f64, b: f64, x0: f64, path: &BrownianPath) -> Vec<f64> {
    let dt = path.dt();
    let mut x = x0;
    let mut out = Vec::with_capacity(path.steps() + 1);
    out.push(x);
    for &db in path.increments() {
        x += a * x * dt + b * x * db;
        out.push(x);
    }
    out
}

/// Closed form `x0 exp((a - b^2/2) t + b B(t))` along `path`.
pub fn linear_sde_exact(a: f64, b: f64, x0: f64, path: &BrownianPath) -> Vec<f64> {
    path.values()
        .iter()
        .enumerate()
        .map(|(k, &bt)| x0 * ((a - 0.5 * b * b) * k as f64 * path.dt() + b * bt).exp())
        .collect()
}

/// Mean endpoint error of Euler-Maruyama against the closed form on shared
/// paths, for each coarsening factor of a fine grid. Returns `(dt, error)`.
pub fn strong_convergence_probe(
    a: f64,
    b: f64,
    x0: f64,
    fine: &TimeGrid,
    factors: &[usize],
    paths: u64,
    seed: u64,
) -> Result<Vec<(f64, f64)>> {
    let mut sums = vec![0.0; factors.len()];
    for i in 0..paths {
        let p = sample_brownian(seed, i, fine);
        let exact = linear_sde_exact(a, b, x0, &p).last().copied().unwrap_or(x0);
        for (s, &f) in sums.iter_mut().zip(factors) {
            let c = p.coarsen(f)?;
            let em = *euler_maruyama_linear(a, b, x0, &c).last().unwrap();
            *s += (em - exact).abs();
        }
    }
    Ok(factors
        .iter()
        .zip(sums)
        .map(|(&f, s)| (fine.dt() * f as f64, s / paths as f64))
        .collect())
}

/// Largest deviation from the discrete Ito identity
/// `X_k^2 = X_0^2 + sum_{j<k} [2 X Phi dt + 2 X Psi dB + (Phi dt + Psi dB)^2]`.
///
/// The supplied drift `phi` and diffusion `psi` must generate `x` through
/// `X_{k+1} = X_k + Phi_k dt + Psi_k dB_k` (checked to round-off).
pub fn ito_residual_scalar(
    x: &ScalarTrajectory,
    phi: &[f64],
    psi: &[f64],
    path: &BrownianPath,
) -> Result<f64> {
    let n = path.steps();
    if x.values.len() != n + 1 || phi.len() < n || psi.len() < n {
        return Err(Error::Precondition(format!(
            "trajectory lengths inconsistent with {n} steps"
        )));
    }
    let dt = path.dt();
    let xs = &x.values;
    for k in 0..n {
        let dx = phi[k] * dt + psi[k] * path.increment(k);
        let scale = 1.0 + xs[k].abs() + xs[k + 1].abs();
        if (xs[k + 1] - xs[k] - dx).abs() > 1e-12 * scale {
            return Err(Error::Precondition(format!(
                "step {k} is not X_k + Phi dt + Psi dB"
            )));
        }
    }
    let mut acc = xs[0] * xs[0];
    let mut worst: f64 = 0.0;
    for k in 0..n {
        let dx = phi[k] * dt + psi[k] * path.increment(k);
        acc += 2.0 * xs[k] * phi[k] * dt + 2.0 * xs[k] * psi[k] * path.increment(k) + dx * dx;
        worst = worst.max((xs[k + 1] * xs[k + 1] - acc).abs());
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn keyed_and_sequential_draws_agree() {
        let tg = TimeGrid::new(1.0, 16).unwrap();
        let p = sample_brownian(7, 3, &tg);
        for k in [0usize, 5, 15] {
            let z = standard_normal(7, 3, k as u64);
            assert!((p.increment(k) - tg.dt().sqrt() * z).abs() < 1e-14);
        }
        assert_eq!(p, sample_brownian(7, 3, &tg));
        assert_ne!(p.increments(), sample_brownian(7, 4, &tg).increments());
    }

    #[test]
    fn empty_grid_gives_empty_path() {
        let tg = TimeGrid::new(1.0, 0).unwrap();
        let p = sample_brownian(1, 0, &tg);
        assert!(p.increments().is_empty());
        assert_eq!(p.values(), &[0.0]);
    }

    #[test]
    fn path_invariants() {
        let tg = TimeGrid::new(2.0, 64).unwrap();
        let p = sample_brownian(11, 0, &tg);
        assert_eq!(p.values()[0], 0.0);
        for k in 0..64 {
            assert_eq!(p.values()[k + 1] - p.values()[k], p.increment(k));
        }
        let c = p.coarsen(4).unwrap();
        assert_eq!(c.steps(), 16);
        assert!((c.terminal() - p.terminal()).abs() < 1e-12);
        assert!(p.coarsen(5).is_err());
    }

    #[test]
    fn ode_examples() {
        let tg = TimeGrid::new(1.0, 1000).unwrap();
        let x = integrate_linear_ode(&|_| 0.0, 1.0, &tg, OdeMode::Euler);
        assert_eq!(x.terminal(), 1.0);
        let e = integrate_linear_ode(&|_| 1.0, 1.0, &tg, OdeMode::Exponential);
        assert!((e.terminal() - 1f64.exp()).abs() < 1e-12);
        let e = integrate_linear_ode(&|_| -2.0, 3.0, &tg, OdeMode::Exponential);
        assert!((e.terminal() - 3.0 * (-2f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn euler_error_is_first_order() {
        let errs: Vec<(f64, f64)> = [100usize, 200, 400]
            .iter()
            .map(|&n| {
                let tg = TimeGrid::new(1.0, n).unwrap();
                let x = integrate_linear_ode(&|_| 1.0, 1.0, &tg, OdeMode::Euler);
                (tg.dt(), (x.terminal() - 1f64.exp()).abs())
            })
            .collect();
        let (h, e): (Vec<f64>, Vec<f64>) = errs.into_iter().unzip();
        let p = crate::fit::convergence_order(&h, &e).unwrap();
        assert!((p - 1.0).abs() < 0.05, "order {p}");
    }

    #[test]
    fn toy_examples() {
        let tg = TimeGrid::new(1.0, 100).unwrap();
        let r = toy_carleman_check(&|_| 0.0, 2.0, &tg, 0.0, OdeMode::Exponential, false).unwrap();
        assert_eq!((r.lhs, r.rhs), (4.0, 4.0));
        assert!(r.pass);

        let r = toy_carleman_check(&|_| 1.0, 1.0, &tg, 1.0, OdeMode::Exponential, false).unwrap();
        assert!((r.lhs - 1.0).abs() < 1e-13 && r.pass);

        let r = toy_carleman_check(&|_| 1.0, 1.0, &tg, 2.0, OdeMode::Exponential, false).unwrap();
        assert!((r.lhs - (-2f64).exp()).abs() < 1e-13 && r.pass);
    }

    #[test]
    fn toy_precondition_and_exploratory_mode() {
        let tg = TimeGrid::new(1.0, 50).unwrap();
        assert!(toy_carleman_check(&|_| 1.0, 1.0, &tg, 0.5, OdeMode::Euler, false).is_err());
        let r = toy_carleman_check(&|_| 1.0, 1.0, &tg, 0.5, OdeMode::Euler, true).unwrap();
        assert!(!r.pass && !r.monotone);
        assert_eq!(r.violations.len(), 50);
    }

    #[test]
    fn ito_residual_trivial_and_inconsistent() {
        let tg = TimeGrid::new(1.0, 10).unwrap();
        let path = sample_brownian(1, 0, &tg);
        let x = ScalarTrajectory {
            grid: tg.clone(),
            values: vec![3.0; 11],
        };
        assert_eq!(ito_residual_scalar(&x, &[0.0; 10], &[0.0; 10], &path).unwrap(), 0.0);
        assert!(ito_residual_scalar(&x, &[1.0; 10], &[0.0; 10], &path).is_err());
    }

    #[test]
    fn ito_residual_of_euler_maruyama_is_roundoff() {
        let tg = TimeGrid::new(1.0, 500).unwrap();
        let path = sample_brownian(5, 2, &tg);
        let xs = euler_maruyama_linear(0.0, 1.0, 1.0, &path);
        let psi = xs[..500].to_vec();
        let x = ScalarTrajectory {
            grid: tg,
            values: xs,
        };
        assert!(ito_residual_scalar(&x, &[0.0; 500], &psi, &path).unwrap() <= 1e-12);
    }

    #[test]
    fn ito_residual_of_ode() {
        let tg = TimeGrid::new(1.0, 200).unwrap();
        let x = integrate_linear_ode(&|_| 1.0, 1.0, &tg, OdeMode::Euler);
        let phi = x.values[..200].to_vec();
        let path = BrownianPath::zero(&tg);
        assert!(ito_residual_scalar(&x, &phi, &[0.0; 200], &path).unwrap() <= 1e-12);
    }
}
