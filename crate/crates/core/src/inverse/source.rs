use std::sync::Arc;

use crate::coeffs::{CoefficientSet, ScalarFn, VectorFn};
use crate::error::{Error, Result};
use crate::grid::{SpatialGrid, TimeGrid};
use crate::sde::BrownianPath;
use crate::spde::{SpdeSolver, SpdeTrajectory};

/// Source `h(t)` (interval) or `h(t, x2)` (rectangle) given by nodal values
/// and interpolated linearly; there is no way to express `x1` dependence.
#[derive(Clone, Debug, PartialEq)]
pub struct SourceSpec {
    pub label: String,
    horizon: f64,
    /// `values[k][j]`: time node `k`, transverse node `j` (one node in 1D).
    values: Arc<Vec<Vec<f64>>>,
    transverse: Option<f64>,
}

impl SourceSpec {
    pub fn time_only(label: &str, tg: &TimeGrid, h: impl Fn(f64) -> f64) -> Self {
        Self {
            label: label.into(),
            horizon: tg.horizon(),
            values: Arc::new(tg.times().iter().map(|&t| vec![h(t)]).collect()),
            transverse: None,
        }
    }

    /// Nodal values on the time grid times the full `x2` nodes of `grid`.
    pub fn time_transverse(label: &str, tg: &TimeGrid, grid: &SpatialGrid, h: impl Fn(f64, f64) -> f64) -> Result<Self> {
        if grid.dim() != 2 {
            return Err(Error::Precondition("transverse sources need a rectangle".into()));
        }
        let ax = *grid.axis(1);
        let values = tg
            .times()
            .iter()
            .map(|&t| (0..ax.nodes()).map(|j| h(t, ax.coord(j))).collect())
            .collect();
        Ok(Self {
            label: label.into(),
            horizon: tg.horizon(),
            values: Arc::new(values),
            transverse: Some(ax.length),
        })
    }

    pub fn is_transverse(&self) -> bool {
        self.transverse.is_some()
    }

    pub fn nodal(&self) -> &[Vec<f64>] {
        &self.values
    }

    pub fn eval(&self, t: f64, x2: f64) -> f64 {
        let nt = self.values.len() - 1;
        let (k, a) = locate(t / self.horizon, nt);
        let row = |k: usize| -> f64 {
            let r = &self.values[k];
            match self.transverse {
                None => r[0],
                Some(l) => {
                    let (j, b) = locate(x2 / l, r.len() - 1);
                    if b == 0.0 {
                        r[j]
                    } else {
                        (1.0 - b) * r[j] + b * r[j + 1]
                    }
                }
            }
        };
        if a == 0.0 {
            row(k)
        } else {
            (1.0 - a) * row(k) + a * row(k + 1)
        }
    }

    /// `alpha self + beta other` on the same nodes.
    pub fn combine(&self, alpha: f64, other: &SourceSpec, beta: f64, label: &str) -> Result<Self> {
        if self.values.len() != other.values.len() || self.transverse != other.transverse {
            return Err(Error::Precondition("sources live on different grids".into()));
        }
        let values = self
            .values
            .iter()
            .zip(other.values.iter())
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| alpha * x + beta * y).collect())
            .collect();
        Ok(Self {
            label: label.into(),
            horizon: self.horizon,
            values: Arc::new(values),
            transverse: self.transverse,
        })
    }

    /// `L^2(0, T; L^2(G'))` inner product by trapezoid rules on the nodes.
    pub fn inner(&self, other: &SourceSpec) -> f64 {
        let nt = self.values.len() - 1;
        let dt = self.horizon / nt.max(1) as f64;
        let mut acc = 0.0;
        for (k, (a, b)) in self.values.iter().zip(other.values.iter()).enumerate() {
            let wt = if nt == 0 || k == 0 || k == nt { 0.5 * dt } else { dt };
            let s: f64 = match self.transverse {
                None => a[0] * b[0],
                Some(l) => {
                    let m = a.len() - 1;
                    let h = l / m as f64;
                    a.iter()
                        .zip(b)
                        .enumerate()
                        .map(|(j, (x, y))| if j == 0 || j == m { 0.5 * h * x * y } else { h * x * y })
                        .sum()
                }
            };
            acc += wt * s;
        }
        acc
    }

    pub fn norm(&self) -> f64 {
        self.inner(self).sqrt()
    }
}

// cell index and fraction of `u` in [0, 1] split into n cells
fn locate(u: f64, n: usize) -> (usize, f64) {
    if n == 0 {
        return (0, 0.0);
    }
    let p = (u.clamp(0.0, 1.0) * n as f64).min(n as f64);
    let k = (p.floor() as usize).min(n - 1);
    let a = p - k as f64;
    if a < 1e-12 {
        (k, 0.0)
    } else if a > 1.0 - 1e-12 {
        (k + 1, 0.0)
    } else {
        (k, a)
    }
}

/// Modulator `R(t, x)` with its derivatives `R_t`, `grad R`, `lap R`.
#[derive(Clone)]
pub struct ModulatorR {
    pub r: ScalarFn,
    pub r_t: ScalarFn,
    pub grad: VectorFn,
    pub lap: ScalarFn,
    /// Required lower bound for `|R|`.
    pub floor: f64,
}

impl std::fmt::Debug for ModulatorR {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ModulatorR").field("floor", &self.floor).finish_non_exhaustive()
    }
}

impl ModulatorR {
    pub fn new(
        r: impl Fn(f64, [f64; 2]) -> f64 + Send + Sync + 'static,
        r_t: impl Fn(f64, [f64; 2]) -> f64 + Send + Sync + 'static,
        grad: impl Fn(f64, [f64; 2]) -> [f64; 2] + Send + Sync + 'static,
        lap: impl Fn(f64, [f64; 2]) -> f64 + Send + Sync + 'static,
        floor: f64,
    ) -> Self {
        Self {
            r: Arc::new(r),
            r_t: Arc::new(r_t),
            grad: Arc::new(grad),
            lap: Arc::new(lap),
            floor,
        }
    }

    pub fn constant(c: f64) -> Self {
        Self::new(move |_, _| c, |_, _| 0.0, |_, _| [0.0; 2], |_, _| 0.0, c.abs())
    }

    /// `a + b x1`; the floor is its minimum over `[0, l]`.
    pub fn affine_x1(a: f64, b: f64, l: f64) -> Self {
        let floor = a.abs().min((a + b * l).abs());
        Self::new(move |_, x| a + b * x[0], |_, _| 0.0, move |_, _| [b, 0.0], |_, _| 0.0, floor)
    }

    pub fn at(&self, t: f64, x: [f64; 2]) -> f64 {
        (self.r)(t, x)
    }

    /// `|R| >= floor > 0` on every full node and time node.
    pub fn check_floor(&self, grid: &SpatialGrid, tg: &TimeGrid) -> Result<()> {
        if !(self.floor > 0.0) {
            return Err(Error::Precondition(format!("modulator floor {} must be positive", self.floor)));
        }
        for t in tg.times() {
            for idx in 0..grid.full_len() {
                let x = grid.full_coords(idx);
                let v = self.at(t, x);
                if !(v.abs() >= self.floor) {
                    return Err(Error::ModulatorFloor {
                        value: v.abs(),
                        floor: self.floor,
                        t,
                        x1: x[0],
                        x2: x[1],
                    });
                }
            }
        }
        Ok(())
    }

    /// `2 grad R / R`
    pub fn drift(&self, t: f64, x: [f64; 2]) -> [f64; 2] {
        let r = self.at(t, x);
        let g = (self.grad)(t, x);
        [2.0 * g[0] / r, 2.0 * g[1] / r]
    }
}

/// Smooth cutoff: 1 for `t <= t1`, 0 for `t >= t2`, with the `exp(-1/x)`
/// blend in between.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CutoffChi {
    pub t1: f64,
    pub t2: f64,
}

fn bump(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        (-1.0 / x).exp()
    }
}

fn bump_prime(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        bump(x) / (x * x)
    }
}

impl CutoffChi {
    pub fn new(t1: f64, t2: f64) -> Result<Self> {
        if !(t1 < t2) {
            return Err(Error::Precondition(format!("cutoff needs t1 < t2 (t1={t1}, t2={t2})")));
        }
        Ok(Self { t1, t2 })
    }

    pub fn value(&self, t: f64) -> f64 {
        if t <= self.t1 {
            return 1.0;
        }
        if t >= self.t2 {
            return 0.0;
        }
        let tau = (t - self.t1) / (self.t2 - self.t1);
        let (a, b) = (bump(1.0 - tau), bump(tau));
        a / (a + b)
    }

    pub fn derivative(&self, t: f64) -> f64 {
        if t <= self.t1 || t >= self.t2 {
            return 0.0;
        }
        let tau = (t - self.t1) / (self.t2 - self.t1);
        let (a, b) = (bump(1.0 - tau), bump(tau));
        let (da, db) = (-bump_prime(1.0 - tau), bump_prime(tau));
        (da * b - a * db) / ((a + b) * (a + b)) / (self.t2 - self.t1)
    }
}

/// Forward problem with separated source `h R` on `[0, t0]` (the horizon of
/// `tg`): `dy - lap y dt = [(b1, grad y) + b2 y + h R] dt + b3 y dB`,
/// `y(0) = 0`.
#[derive(Clone, Debug)]
pub struct SourceProblem {
    pub grid: Arc<SpatialGrid>,
    pub tg: TimeGrid,
    /// `a1 = b1`, `a2 = b2`, `a3 = b3`; `b`, `f`, `g` are ignored.
    pub lower: CoefficientSet,
    pub r: ModulatorR,
}

impl SourceProblem {
    pub fn new(grid: Arc<SpatialGrid>, tg: TimeGrid, lower: &CoefficientSet, r: ModulatorR) -> Result<Self> {
        r.check_floor(&grid, &tg)?;
        let mut c = CoefficientSet::laplacian();
        c.a1 = lower.a1.clone();
        c.a2 = lower.a2.clone();
        c.a3 = lower.a3.clone();
        c.sup = lower.sup;
        Ok(Self {
            grid,
            tg,
            lower: c,
            r,
        })
    }

    pub fn coefficients(&self, h: &SourceSpec) -> CoefficientSet {
        let (h, r) = (h.clone(), self.r.r.clone());
        self.lower.clone().with_f(move |t, x| h.eval(t, x[1]) * r(t, x))
    }

    pub fn solver(&self, h: &SourceSpec) -> Result<SpdeSolver> {
        SpdeSolver::new(self.grid.clone(), self.tg.clone(), self.coefficients(h))
    }
}

pub fn forward_source(problem: &SourceProblem, h: &SourceSpec, path: &BrownianPath) -> Result<SpdeTrajectory> {
    let solver = problem.solver(h)?;
    solver.solve_values(&vec![0.0; problem.grid.interior_len()], path)
}
