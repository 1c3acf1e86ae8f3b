use std::io::Write;
use std::sync::{Arc, OnceLock};

use crate::coeffs::{check_ellipticity, CoefficientSet};
use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::grid::{SpatialGrid, TimeGrid};
use crate::linalg::{BandedCholesky, SparseMatrix};
use crate::sde::BrownianPath;

use super::operator::{assemble_elliptic, EllipticOperator};

/// Bound on `dt (|a1|/h + |a2| + |a3|^2)` for the explicit terms.
pub const STABILITY_BUDGET: f64 = 1.0;

/// Relative residual above which an implicit solve is reported as failed.
pub const SOLVE_TOLERANCE: f64 = 1e-10;

// at most this many time nodes are sampled when sizing the explicit terms
const BUDGET_TIME_SAMPLES: usize = 64;

#[derive(Debug)]
struct Implicit {
    op: Arc<EllipticOperator>,
    system: SparseMatrix,
    chol: BandedCholesky,
}

/// Semi-implicit scheme
///
/// ```text
/// (I - dt A(t_{k+1})) y_{k+1} = y_k + dt [(a1, grad y_k) + a2 y_k + f(t_k)]
///                               + (a3 y_k + g(t_k)) dB_k
/// ```
///
/// on a fixed space-time grid. Factorizations are cached: once for
/// autonomous `b`, lazily per step otherwise.
#[derive(Debug)]
pub struct SpdeSolver {
    grid: Arc<SpatialGrid>,
    tg: TimeGrid,
    coeffs: CoefficientSet,
    x: Vec<[f64; 2]>,
    fixed: Option<Arc<Implicit>>,
    per_step: Vec<OnceLock<Arc<Implicit>>>,
}

impl SpdeSolver {
    pub fn new(grid: Arc<SpatialGrid>, tg: TimeGrid, coeffs: CoefficientSet) -> Result<Self> {
        check_ellipticity(&coeffs, &grid, &tg).ensure()?;
        let budget = explicit_budget(&coeffs, &grid, &tg);
        if budget > STABILITY_BUDGET {
            return Err(Error::StabilityBudget(format!(
                "dt (|a1|/h + |a2| + |a3|^2) = {budget:.3} > {STABILITY_BUDGET}"
            )));
        }
        let x = (0..grid.interior_len()).map(|i| grid.interior_coords(i)).collect();
        let mut s = Self {
            grid,
            tg,
            coeffs,
            x,
            fixed: None,
            per_step: Vec::new(),
        };
        if s.coeffs.b_autonomous {
            s.fixed = Some(Arc::new(s.build_implicit(0.0)?));
        } else {
            s.per_step = (0..s.tg.steps()).map(|_| OnceLock::new()).collect();
        }
        Ok(s)
    }

    fn build_implicit(&self, t: f64) -> Result<Implicit> {
        let op = assemble_elliptic(&self.grid, &self.coeffs, t);
        let system = op.matrix().shifted_identity(-self.tg.dt());
        let chol = BandedCholesky::factor(&system)?;
        Ok(Implicit {
            op: Arc::new(op),
            system,
            chol,
        })
    }

    fn implicit(&self, k: usize) -> Result<Arc<Implicit>> {
        if let Some(f) = &self.fixed {
            return Ok(f.clone());
        }
        if let Some(f) = self.per_step[k].get() {
            return Ok(f.clone());
        }
        let built = Arc::new(self.build_implicit(self.tg.time(k + 1))?);
        Ok(self.per_step[k].get_or_init(|| built).clone())
    }

    pub fn grid(&self) -> &Arc<SpatialGrid> {
        &self.grid
    }

    pub fn time_grid(&self) -> &TimeGrid {
        &self.tg
    }

    pub fn coeffs(&self) -> &CoefficientSet {
        &self.coeffs
    }

    /// Operator `A(t_{k+1})` treated implicitly in step `k`.
    pub fn implicit_operator(&self, k: usize) -> Result<Arc<EllipticOperator>> {
        Ok(self.implicit(k)?.op.clone())
    }

    /// Explicit parts of step `k` at interior nodes: the drift
    /// `(a1, grad y) + a2 y + f` and the noise coefficient `a3 y + g`, both
    /// at `t_k`.
    pub fn explicit_parts(&self, k: usize, y: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let t = self.tg.time(k);
        let c = &self.coeffs;
        let mut drift = vec![0.0; y.len()];
        if let Some(a1) = &c.a1 {
            let (n1, n2) = self.grid.interior_shape();
            let get = |i1: isize, i2: isize| -> f64 {
                if i1 < 0 || i2 < 0 || i1 as usize >= n1 || i2 as usize >= n2 {
                    0.0
                } else {
                    y[i1 as usize + n1 * i2 as usize]
                }
            };
            let h1 = self.grid.spacing(0);
            let h2 = if self.grid.dim() == 2 { self.grid.spacing(1) } else { 1.0 };
            for (idx, d) in drift.iter_mut().enumerate() {
                let (i1, i2) = ((idx % n1) as isize, (idx / n1) as isize);
                let a = a1(t, self.x[idx]);
                let mut v = a[0] * (get(i1 + 1, i2) - get(i1 - 1, i2)) / (2.0 * h1);
                if self.grid.dim() == 2 {
                    v += a[1] * (get(i1, i2 + 1) - get(i1, i2 - 1)) / (2.0 * h2);
                }
                *d = v;
            }
        }
        if let Some(a2) = &c.a2 {
            for (idx, d) in drift.iter_mut().enumerate() {
                *d += a2(t, self.x[idx]) * y[idx];
            }
        }
        if let Some(f) = &c.f {
            for (idx, d) in drift.iter_mut().enumerate() {
                *d += f(t, self.x[idx]);
            }
        }
        let mut noise = vec![0.0; y.len()];
        if let Some(a3) = &c.a3 {
            for (idx, d) in noise.iter_mut().enumerate() {
                *d = a3(t, self.x[idx]) * y[idx];
            }
        }
        if let Some(g) = &c.g {
            for (idx, d) in noise.iter_mut().enumerate() {
                *d += g(t, self.x[idx]);
            }
        }
        (drift, noise)
    }

    /// Advances interior values `y_k` by one step with increment `db`.
    pub fn step(&self, k: usize, yk: &[f64], db: f64) -> Result<Vec<f64>> {
        if yk.len() != self.grid.interior_len() {
            return Err(Error::DimensionMismatch {
                expected: self.grid.interior_len(),
                got: yk.len(),
            });
        }
        let dt = self.tg.dt();
        let (drift, noise) = self.explicit_parts(k, yk);
        let rhs: Vec<f64> = (0..yk.len())
            .map(|i| yk[i] + dt * drift[i] + noise[i] * db)
            .collect();
        let imp = self.implicit(k)?;
        let mut y = rhs.clone();
        imp.chol.solve_in_place(&mut y);
        let check = imp.system.apply(&y);
        let scale = rhs.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        let res = check
            .iter()
            .zip(&rhs)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        if !res.is_finite() || y.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("implicit step"));
        }
        if res > SOLVE_TOLERANCE * scale {
            return Err(Error::LinearSolve(format!(
                "step {k}: residual {res:.3e} exceeds {SOLVE_TOLERANCE:e}"
            )));
        }
        Ok(y)
    }

    pub fn step_field(&self, yk: &ScalarField, k: usize, db: f64) -> Result<ScalarField> {
        ScalarField::new(self.grid.clone(), self.step(k, yk.values(), db)?)
    }

    fn check_path(&self, path: &BrownianPath) -> Result<()> {
        if path.steps() != self.tg.steps() {
            return Err(Error::DimensionMismatch {
                expected: self.tg.steps(),
                got: path.steps(),
            });
        }
        if (path.dt() - self.tg.dt()).abs() > 1e-12 * self.tg.dt().max(1e-300) {
            return Err(Error::Precondition(format!(
                "path step {} differs from grid step {}",
                path.dt(),
                self.tg.dt()
            )));
        }
        Ok(())
    }

    /// Runs the scheme from interior values `y0`, handing every slice to
    /// `visit(k, y_k)` without storing the trajectory.
    pub fn run(
        &self,
        y0: &[f64],
        path: &BrownianPath,
        mut visit: impl FnMut(usize, &[f64]),
    ) -> Result<()> {
        self.check_path(path)?;
        if y0.len() != self.grid.interior_len() {
            return Err(Error::DimensionMismatch {
                expected: self.grid.interior_len(),
                got: y0.len(),
            });
        }
        if y0.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("initial data"));
        }
        let mut y = y0.to_vec();
        visit(0, &y);
        for k in 0..self.tg.steps() {
            y = self.step(k, &y, path.increment(k))?;
            visit(k + 1, &y);
        }
        Ok(())
    }

    pub fn solve_values(&self, y0: &[f64], path: &BrownianPath) -> Result<SpdeTrajectory> {
        let n = self.grid.interior_len();
        let mut values = Vec::with_capacity(n * (self.tg.steps() + 1));
        self.run(y0, path, |_, y| values.extend_from_slice(y))?;
        Ok(SpdeTrajectory {
            grid: self.grid.clone(),
            tg: self.tg.clone(),
            values,
            path: path.clone(),
        })
    }

    pub fn solve_forward(&self, y0: &ScalarField, path: &BrownianPath) -> Result<SpdeTrajectory> {
        if y0.grid().as_ref() != self.grid.as_ref() {
            return Err(Error::Precondition("initial data lives on another grid".into()));
        }
        self.solve_values(y0.values(), path)
    }
}

fn explicit_budget(c: &CoefficientSet, grid: &SpatialGrid, tg: &TimeGrid) -> f64 {
    if tg.steps() == 0 {
        return 0.0;
    }
    let stride = tg.steps().div_ceil(BUDGET_TIME_SAMPLES).max(1);
    let (mut a1, mut a2, mut a3) = (0.0f64, 0.0f64, 0.0f64);
    for k in (0..=tg.steps()).step_by(stride).chain(std::iter::once(tg.steps())) {
        let t = tg.time(k);
        for idx in 0..grid.full_len() {
            let x = grid.full_coords(idx);
            let v = c.a1_at(t, x);
            a1 = a1.max(v[0].abs().max(v[1].abs()));
            a2 = a2.max(c.a2_at(t, x).abs());
            a3 = a3.max(c.a3_at(t, x).abs());
        }
    }
    tg.dt() * (a1 / grid.min_spacing() + a2 + a3 * a3)
}

/// Interior slices `y(t_k)` for `k = 0..=N` along one Brownian path.
#[derive(Clone, Debug)]
pub struct SpdeTrajectory {
    grid: Arc<SpatialGrid>,
    tg: TimeGrid,
    values: Vec<f64>,
    path: BrownianPath,
}

pub const TRAJECTORY_CSV_HEADER: &str = "path_index,k,t,node_index,x,value";

impl SpdeTrajectory {
    /// Wraps interior slices stored back to back (`N + 1` of them).
    pub fn from_slices(grid: Arc<SpatialGrid>, tg: TimeGrid, values: Vec<f64>, path: BrownianPath) -> Result<Self> {
        let expected = grid.interior_len() * (tg.steps() + 1);
        if values.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                got: values.len(),
            });
        }
        if path.steps() != tg.steps() {
            return Err(Error::DimensionMismatch {
                expected: tg.steps(),
                got: path.steps(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("trajectory"));
        }
        Ok(Self {
            grid,
            tg,
            values,
            path,
        })
    }

    pub fn grid(&self) -> &Arc<SpatialGrid> {
        &self.grid
    }

    pub fn time_grid(&self) -> &TimeGrid {
        &self.tg
    }

    pub fn path(&self) -> &BrownianPath {
        &self.path
    }

    pub fn steps(&self) -> usize {
        self.tg.steps()
    }

    pub fn slice(&self, k: usize) -> &[f64] {
        let n = self.grid.interior_len();
        &self.values[k * n..(k + 1) * n]
    }

    /// Slice `k` on the full node set (zero boundary).
    pub fn full(&self, k: usize) -> Vec<f64> {
        self.grid.embed(self.slice(k))
    }

    pub fn field(&self, k: usize) -> ScalarField {
        ScalarField::new(self.grid.clone(), self.slice(k).to_vec())
            .expect("solver slices are finite")
    }

    pub fn terminal(&self) -> &[f64] {
        self.slice(self.tg.steps())
    }

    /// One row per time node and full node; `x` is the first coordinate and
    /// `node_index` the full-node index (first axis fastest).
    pub fn write_csv(&self, mut w: impl Write, header: bool) -> std::io::Result<()> {
        if header {
            writeln!(w, "{TRAJECTORY_CSV_HEADER}")?;
        }
        for k in 0..=self.tg.steps() {
            let t = self.tg.time(k);
            for (idx, v) in self.full(k).iter().enumerate() {
                let x = self.grid.full_coords(idx)[0];
                writeln!(w, "{},{k},{t:e},{idx},{x:e},{v:e}", self.path.index)?;
            }
        }
        Ok(())
    }
}
