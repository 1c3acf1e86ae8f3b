use std::io::Write;

use crate::error::{Error, Result};
use crate::field::{gradient, SpaceQuadrature};
use crate::grid::TimeGrid;
use crate::spde::{mean_stderr, Ensemble};
use crate::weight::{CarlemanWeight, Psi};

use super::log_scale;

/// Per-path time profiles `|grad y(t_k)|^2` and `|y(t_k)|^2`, plus the
/// path-independent data profile `int (f^2 + g^2 + |grad g|^2)`. Every
/// weighted functional is a time quadrature of these.
#[derive(Clone, Debug)]
pub struct PathProfiles {
    pub tg: TimeGrid,
    pub grad_sq: Vec<Vec<f64>>,
    pub l2_sq: Vec<Vec<f64>>,
    pub data: Vec<f64>,
}

pub fn collect_profiles(ens: &Ensemble) -> Result<PathProfiles> {
    let solver = ens.solver();
    let grid = solver.grid().clone();
    let tg = solver.time_grid().clone();
    let q = SpaceQuadrature::new(&grid);
    let per_path = ens.fold(
        |_| (Vec::new(), Vec::new()),
        |acc: &mut (Vec<f64>, Vec<f64>), _, y| {
            let full = grid.embed(y);
            acc.0.push(q.grad_sq(&full));
            acc.1.push(q.l2_sq(&full));
        },
    )?;
    let c = solver.coeffs();
    let data = tg
        .times()
        .iter()
        .map(|&t| {
            let f = grid.sample_full(|x| c.f_at(t, x));
            let g = grid.sample_full(|x| c.g_at(t, x));
            let mut d = q.l2_sq(&f) + q.l2_sq(&g);
            if c.g.is_some() {
                d += gradient(&grid, &g).iter().map(|p| q.l2_sq(p)).sum::<f64>();
            }
            d
        })
        .collect();
    let (grad_sq, l2_sq) = per_path.into_iter().unzip();
    Ok(PathProfiles {
        tg,
        grad_sq,
        l2_sq,
        data,
    })
}

/// Both sides of the Carleman inequality without its constant. Values are
/// multiplied by `exp(-2 log_scale)`; ratios are unaffected.
#[derive(Clone, Debug, PartialEq)]
pub struct CarlemanFunctionals {
    pub s: f64,
    pub lambda: f64,
    pub delta: f64,
    /// `lambda E int theta^2 |grad y|^2`
    pub lhs_grad: f64,
    /// `s lambda^2 E int phi theta^2 y^2`
    pub lhs_zero: f64,
    /// `E[theta^2(T) (|grad y(T)|^2 + s lambda phi(T) |y(T)|^2)]`
    pub rhs_terminal: f64,
    /// Same at `delta`.
    pub rhs_initial: f64,
    /// `int (1 + phi) theta^2 (f^2 + g^2 + |grad g|^2)`
    pub rhs_data: f64,
    /// Standard error of the left side, in units of `rhs`.
    pub mc_stderr: f64,
    pub log_scale: f64,
}

impl CarlemanFunctionals {
    pub fn lhs(&self) -> f64 {
        self.lhs_grad + self.lhs_zero
    }

    pub fn rhs(&self) -> f64 {
        self.rhs_terminal + self.rhs_initial + self.rhs_data
    }

    /// `lhs / rhs`, zero when both vanish.
    pub fn ratio(&self) -> f64 {
        let (l, r) = (self.lhs(), self.rhs());
        if l == 0.0 && r == 0.0 {
            0.0
        } else {
            l / r
        }
    }
}

/// The five right-hand terms separately (same scaling as the functionals).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RhsTerms {
    pub grad_terminal: f64,
    pub grad_initial: f64,
    pub zero_terminal: f64,
    pub zero_initial: f64,
    pub data: f64,
}

impl RhsTerms {
    pub fn sum(&self) -> f64 {
        self.grad_terminal + self.grad_initial + self.zero_terminal + self.zero_initial + self.data
    }
}

impl PathProfiles {
    pub fn paths(&self) -> usize {
        self.grad_sq.len()
    }

    fn check(&self, k_delta: usize) -> Result<()> {
        if self.grad_sq.is_empty() {
            return Err(Error::EmptyEnsemble);
        }
        if k_delta >= self.tg.steps() && self.tg.steps() > 0 {
            return Err(Error::Precondition(format!(
                "delta index {k_delta} must lie before the horizon"
            )));
        }
        Ok(())
    }

    pub fn rhs_terms(&self, w: &CarlemanWeight, k_delta: usize) -> Result<RhsTerms> {
        self.check(k_delta)?;
        let n = self.tg.steps();
        let ls = log_scale(w, &self.tg, k_delta, n)?;
        let th2 = |k: usize| (2.0 * (w.log_theta(self.tg.time(k)) - ls)).exp();
        let sl = w.s * w.lambda;
        let m = self.paths() as f64;
        let mean = |v: &Vec<Vec<f64>>, k: usize| v.iter().map(|p| p[k]).sum::<f64>() / m;
        let wt = self.tg.trapezoid_weights(k_delta, n);
        let data = (k_delta..=n)
            .map(|k| wt[k - k_delta] * (1.0 + w.phi(self.tg.time(k))) * th2(k) * self.data[k])
            .sum();
        Ok(RhsTerms {
            grad_terminal: th2(n) * mean(&self.grad_sq, n),
            grad_initial: th2(k_delta) * mean(&self.grad_sq, k_delta),
            zero_terminal: sl * w.phi(self.tg.time(n)) * th2(n) * mean(&self.l2_sq, n),
            zero_initial: sl * w.phi(self.tg.time(k_delta)) * th2(k_delta) * mean(&self.l2_sq, k_delta),
            data,
        })
    }

    pub fn functionals(&self, w: &CarlemanWeight, k_delta: usize) -> Result<CarlemanFunctionals> {
        let rhs = self.rhs_terms(w, k_delta)?;
        let n = self.tg.steps();
        let ls = log_scale(w, &self.tg, k_delta, n)?;
        let wt = self.tg.trapezoid_weights(k_delta, n);
        let th2: Vec<f64> = (k_delta..=n)
            .map(|k| (2.0 * (w.log_theta(self.tg.time(k)) - ls)).exp())
            .collect();
        let phi: Vec<f64> = (k_delta..=n).map(|k| w.phi(self.tg.time(k))).collect();
        let per_path: Vec<(f64, f64)> = (0..self.paths())
            .map(|p| {
                let (mut g, mut z) = (0.0, 0.0);
                for k in k_delta..=n {
                    let j = k - k_delta;
                    g += wt[j] * th2[j] * self.grad_sq[p][k];
                    z += wt[j] * phi[j] * th2[j] * self.l2_sq[p][k];
                }
                (w.lambda * g, w.s * w.lambda * w.lambda * z)
            })
            .collect();
        let m = per_path.len() as f64;
        let lhs_grad = per_path.iter().map(|p| p.0).sum::<f64>() / m;
        let lhs_zero = per_path.iter().map(|p| p.1).sum::<f64>() / m;
        let totals: Vec<f64> = per_path.iter().map(|p| p.0 + p.1).collect();
        let (_, se) = mean_stderr(&totals);
        let r = rhs.grad_terminal + rhs.grad_initial + rhs.zero_terminal + rhs.zero_initial + rhs.data;
        Ok(CarlemanFunctionals {
            s: w.s,
            lambda: w.lambda,
            delta: self.tg.time(k_delta),
            lhs_grad,
            lhs_zero,
            rhs_terminal: rhs.grad_terminal + rhs.zero_terminal,
            rhs_initial: rhs.grad_initial + rhs.zero_initial,
            rhs_data: rhs.data,
            mc_stderr: if r > 0.0 { se / r } else { 0.0 },
            log_scale: ls,
        })
    }
}

/// `(lambda E int theta^2 |grad y|^2, s lambda^2 E int phi theta^2 y^2)` over
/// `[t_{k_delta}, T]`.
pub fn carleman_lhs(ens: &Ensemble, w: &CarlemanWeight, k_delta: usize) -> Result<(f64, f64)> {
    let f = collect_profiles(ens)?.functionals(w, k_delta)?;
    Ok((f.lhs_grad, f.lhs_zero))
}

pub fn carleman_rhs(ens: &Ensemble, w: &CarlemanWeight, k_delta: usize) -> Result<RhsTerms> {
    collect_profiles(ens)?.rhs_terms(w, k_delta)
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepCell {
    pub s: f64,
    pub lambda: f64,
    /// `None` when the weight overflowed; the reason is kept.
    pub values: std::result::Result<CarlemanFunctionals, String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepTable {
    pub cells: Vec<SweepCell>,
}

pub const SWEEP_CSV_HEADER: &str =
    "s,lambda,lhs_grad,lhs_zero,rhs_terminal,rhs_initial,rhs_data,ratio,mc_stderr";

/// Functionals for every `(s, lambda)`; lists must be ascending. Overflowing
/// cells are kept and flagged.
pub fn carleman_sweep(
    profiles: &PathProfiles,
    psi: Psi,
    s_list: &[f64],
    lambda_list: &[f64],
    k_delta: usize,
) -> Result<SweepTable> {
    for (name, l) in [("s", s_list), ("lambda", lambda_list)] {
        if l.is_empty() || l.windows(2).any(|p| !(p[0] < p[1])) {
            return Err(Error::Precondition(format!("{name} list must be nonempty and ascending")));
        }
    }
    let mut cells = Vec::new();
    for &lambda in lambda_list {
        for &s in s_list {
            let w = CarlemanWeight::new(psi, lambda, s)?;
            let values = match profiles.functionals(&w, k_delta) {
                Ok(f) => Ok(f),
                Err(e @ Error::WeightOverflow { .. }) => Err(e.to_string()),
                Err(e) => return Err(e),
            };
            cells.push(SweepCell { s, lambda, values });
        }
    }
    Ok(SweepTable { cells })
}

impl SweepTable {
    pub fn ratios(&self, lambda: f64) -> Vec<(f64, Option<f64>)> {
        self.cells
            .iter()
            .filter(|c| c.lambda == lambda)
            .map(|c| (c.s, c.values.as_ref().ok().map(|f| f.ratio())))
            .collect()
    }

    pub fn lambdas(&self) -> Vec<f64> {
        let mut l: Vec<f64> = self.cells.iter().map(|c| c.lambda).collect();
        l.dedup();
        l
    }

    pub fn skipped(&self) -> usize {
        self.cells.iter().filter(|c| c.values.is_err()).count()
    }

    pub fn all_finite(&self) -> bool {
        self.cells
            .iter()
            .all(|c| c.values.as_ref().is_ok_and(|f| f.ratio().is_finite()))
    }

    /// Pairs `(s, 2s)` present in the table with `ratio(2s) / ratio(s)`.
    pub fn doubling_factors(&self) -> Vec<(f64, f64, f64)> {
        let mut out = Vec::new();
        for lambda in self.lambdas() {
            let r = self.ratios(lambda);
            for &(s, a) in &r {
                if let Some(&(_, b)) = r.iter().find(|(s2, _)| *s2 == 2.0 * s) {
                    if let (Some(a), Some(b)) = (a, b) {
                        let q = if a == 0.0 && b == 0.0 { 0.0 } else { b / a };
                        out.push((lambda, s, q));
                    }
                }
            }
        }
        out
    }

    /// `max ratio / median ratio` over `s` for each `lambda`.
    pub fn spread(&self) -> Vec<(f64, f64)> {
        self.lambdas()
            .into_iter()
            .map(|lambda| {
                let mut r: Vec<f64> = self.ratios(lambda).into_iter().filter_map(|x| x.1).collect();
                r.sort_by(f64::total_cmp);
                let max = r.last().copied().unwrap_or(0.0);
                let med = if r.is_empty() {
                    0.0
                } else if r.len() % 2 == 1 {
                    r[r.len() / 2]
                } else {
                    0.5 * (r[r.len() / 2 - 1] + r[r.len() / 2])
                };
                (lambda, if med > 0.0 { max / med } else { 0.0 })
            })
            .collect()
    }

    pub fn write_csv(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "{SWEEP_CSV_HEADER}")?;
        for c in &self.cells {
            match &c.values {
                Ok(f) => writeln!(
                    w,
                    "{},{},{:e},{:e},{:e},{:e},{:e},{:e},{:e}",
                    c.s,
                    c.lambda,
                    f.lhs_grad,
                    f.lhs_zero,
                    f.rhs_terminal,
                    f.rhs_initial,
                    f.rhs_data,
                    f.ratio(),
                    f.mc_stderr
                )?,
                Err(_) => writeln!(w, "{},{},skipped,skipped,skipped,skipped,skipped,skipped,skipped", c.s, c.lambda)?,
            }
        }
        Ok(())
    }
}
