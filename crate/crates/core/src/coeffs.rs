//! Coefficients of the forward equation.
//!
//! Absent lower-order coefficients and data (`None`) are identically zero,
//! which lets the solver skip their evaluation and lets ensembles detect the
//! noise-free case.

use std::fmt;
use std::sync::Arc;

use crate::grid::{SpatialGrid, TimeGrid};

pub type ScalarFn = Arc<dyn Fn(f64, [f64; 2]) -> f64 + Send + Sync>;
pub type VectorFn = Arc<dyn Fn(f64, [f64; 2]) -> [f64; 2] + Send + Sync>;
pub type MatrixFn = Arc<dyn Fn(f64, [f64; 2]) -> [[f64; 2]; 2] + Send + Sync>;

/// Sup-norm metadata: `|a1|_inf`, `|a2|_inf` and `|a3|_{W^{1,inf}}`
/// (taken as `|a3|_inf + |grad a3|_inf`).
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SupNorms {
    pub a1: f64,
    pub a2: f64,
    pub a3_w1inf: f64,
}

#[derive(Clone)]
pub struct CoefficientSet {
    pub b: MatrixFn,
    pub a1: Option<VectorFn>,
    pub a2: Option<ScalarFn>,
    pub a3: Option<ScalarFn>,
    pub f: Option<ScalarFn>,
    pub g: Option<ScalarFn>,
    /// Ellipticity constant.
    pub sigma: f64,
    pub sup: SupNorms,
    /// `b` does not depend on time.
    pub b_autonomous: bool,
}

impl fmt::Debug for CoefficientSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CoefficientSet")
            .field("a1", &self.a1.is_some())
            .field("a2", &self.a2.is_some())
            .field("a3", &self.a3.is_some())
            .field("f", &self.f.is_some())
            .field("g", &self.g.is_some())
            .field("sigma", &self.sigma)
            .field("sup", &self.sup)
            .field("b_autonomous", &self.b_autonomous)
            .finish()
    }
}

impl CoefficientSet {
    /// `b = I`, everything else zero.
    pub fn laplacian() -> Self {
        Self {
            b: Arc::new(|_, _| [[1.0, 0.0], [0.0, 1.0]]),
            a1: None,
            a2: None,
            a3: None,
            f: None,
            g: None,
            sigma: 1.0,
            sup: SupNorms::default(),
            b_autonomous: true,
        }
    }

    pub fn with_b(
        mut self,
        b: impl Fn(f64, [f64; 2]) -> [[f64; 2]; 2] + Send + Sync + 'static,
        sigma: f64,
        autonomous: bool,
    ) -> Self {
        self.b = Arc::new(b);
        self.sigma = sigma;
        self.b_autonomous = autonomous;
        self
    }

    pub fn with_a1(
        mut self,
        a1: impl Fn(f64, [f64; 2]) -> [f64; 2] + Send + Sync + 'static,
        sup: f64,
    ) -> Self {
        self.a1 = Some(Arc::new(a1));
        self.sup.a1 = sup;
        self
    }

    pub fn with_a2(mut self, a2: impl Fn(f64, [f64; 2]) -> f64 + Send + Sync + 'static, sup: f64) -> Self {
        self.a2 = Some(Arc::new(a2));
        self.sup.a2 = sup;
        self
    }

    /// `sup` bounds `|a3|` and `grad_sup` bounds `|grad a3|`.
    pub fn with_a3(
        mut self,
        a3: impl Fn(f64, [f64; 2]) -> f64 + Send + Sync + 'static,
        sup: f64,
        grad_sup: f64,
    ) -> Self {
        self.a3 = Some(Arc::new(a3));
        self.sup.a3_w1inf = sup + grad_sup;
        self
    }

    pub fn with_f(mut self, f: impl Fn(f64, [f64; 2]) -> f64 + Send + Sync + 'static) -> Self {
        self.f = Some(Arc::new(f));
        self
    }

    pub fn with_g(mut self, g: impl Fn(f64, [f64; 2]) -> f64 + Send + Sync + 'static) -> Self {
        self.g = Some(Arc::new(g));
        self
    }

    pub fn with_a1_const(self, c: [f64; 2]) -> Self {
        let sup = (c[0] * c[0] + c[1] * c[1]).sqrt();
        self.with_a1(move |_, _| c, sup)
    }

    pub fn with_a2_const(self, c: f64) -> Self {
        self.with_a2(move |_, _| c, c.abs())
    }

    pub fn with_a3_const(self, c: f64) -> Self {
        self.with_a3(move |_, _| c, c.abs(), 0.0)
    }

    /// Copy with `f` and `g` removed.
    pub fn homogeneous(&self) -> Self {
        Self {
            f: None,
            g: None,
            ..self.clone()
        }
    }

    /// No `dB` term at all: `a3 = g = 0`.
    pub fn is_noise_free(&self) -> bool {
        self.a3.is_none() && self.g.is_none()
    }

    pub fn b_at(&self, t: f64, x: [f64; 2]) -> [[f64; 2]; 2] {
        (self.b)(t, x)
    }

    pub fn a1_at(&self, t: f64, x: [f64; 2]) -> [f64; 2] {
        self.a1.as_ref().map_or([0.0; 2], |a| a(t, x))
    }

    pub fn a2_at(&self, t: f64, x: [f64; 2]) -> f64 {
        self.a2.as_ref().map_or(0.0, |a| a(t, x))
    }

    pub fn a3_at(&self, t: f64, x: [f64; 2]) -> f64 {
        self.a3.as_ref().map_or(0.0, |a| a(t, x))
    }

    pub fn f_at(&self, t: f64, x: [f64; 2]) -> f64 {
        self.f.as_ref().map_or(0.0, |a| a(t, x))
    }

    pub fn g_at(&self, t: f64, x: [f64; 2]) -> f64 {
        self.g.as_ref().map_or(0.0, |a| a(t, x))
    }

    /// Samples the sup norms over all full grid nodes and time nodes, with
    /// `grad a3` from centered differences of step `1e-6`.
    pub fn sampled_sup_norms(&self, grid: &SpatialGrid, tg: &TimeGrid) -> SupNorms {
        let eps = 1e-6;
        let mut out = SupNorms::default();
        let (mut a3_sup, mut a3_grad) = (0.0f64, 0.0f64);
        for t in tg.times() {
            for idx in 0..grid.full_len() {
                let x = grid.full_coords(idx);
                let a1 = self.a1_at(t, x);
                out.a1 = out.a1.max((a1[0] * a1[0] + a1[1] * a1[1]).sqrt());
                out.a2 = out.a2.max(self.a2_at(t, x).abs());
                a3_sup = a3_sup.max(self.a3_at(t, x).abs());
                let mut g2 = 0.0;
                for d in 0..grid.dim() {
                    let (mut xp, mut xm) = (x, x);
                    xp[d] += eps;
                    xm[d] -= eps;
                    let di = (self.a3_at(t, xp) - self.a3_at(t, xm)) / (2.0 * eps);
                    g2 += di * di;
                }
                a3_grad = a3_grad.max(g2.sqrt());
            }
        }
        out.a3_w1inf = a3_sup + a3_grad;
        out
    }
}

/// `r1 = |a1|^2 + |a2|^2 + |a3|^2_{W^{1,inf}} + 1`.
pub fn compute_r1(c: &CoefficientSet) -> f64 {
    let s = &c.sup;
    s.a1 * s.a1 + s.a2 * s.a2 + s.a3_w1inf * s.a3_w1inf + 1.0
}

#[derive(Clone, Debug, PartialEq)]
pub struct EllipticityViolation {
    pub t: f64,
    pub x: [f64; 2],
    pub xi: [f64; 2],
    pub margin: f64,
}

#[derive(Clone, Debug)]
pub struct EllipticityReport {
    pub pass: bool,
    pub symmetric: bool,
    pub min_margin: f64,
    pub violations: Vec<EllipticityViolation>,
}

fn probe_directions(dim: usize) -> Vec<[f64; 2]> {
    if dim == 1 {
        return vec![[1.0, 0.0]];
    }
    let r = std::f64::consts::FRAC_1_SQRT_2;
    vec![[1.0, 0.0], [0.0, 1.0], [r, r], [r, -r]]
}

/// Samples `b xi . xi - sigma |xi|^2` over every full node, time node and
/// probe direction (axis unit vectors and diagonals).
pub fn check_ellipticity(c: &CoefficientSet, grid: &SpatialGrid, tg: &TimeGrid) -> EllipticityReport {
    let dirs = probe_directions(grid.dim());
    let mut min_margin = f64::INFINITY;
    let mut symmetric = true;
    let mut violations = Vec::new();
    for t in tg.times() {
        for idx in 0..grid.full_len() {
            let x = grid.full_coords(idx);
            let b = c.b_at(t, x);
            if grid.dim() == 2 && b[0][1] != b[1][0] {
                symmetric = false;
            }
            for xi in &dirs {
                let mut margin = 0.0;
                for i in 0..grid.dim() {
                    for j in 0..grid.dim() {
                        let shifted = b[i][j] - if i == j { c.sigma } else { 0.0 };
                        margin += shifted * xi[i] * xi[j];
                    }
                }
                min_margin = min_margin.min(margin);
                if margin < 0.0 || !margin.is_finite() {
                    violations.push(EllipticityViolation {
                        t,
                        x,
                        xi: *xi,
                        margin,
                    });
                }
            }
        }
    }
    EllipticityReport {
        pass: violations.is_empty() && symmetric,
        symmetric,
        min_margin,
        violations,
    }
}

impl EllipticityReport {
    pub fn ensure(&self) -> crate::Result<()> {
        if self.pass {
            Ok(())
        } else if !self.symmetric {
            Err(crate::Error::Precondition("b is not symmetric".into()))
        } else {
            Err(crate::Error::NotElliptic {
                count: self.violations.len(),
                worst_margin: self.min_margin,
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grids() -> (SpatialGrid, TimeGrid) {
        (SpatialGrid::new_1d(1.0, 31).unwrap(), TimeGrid::new(1.0, 4).unwrap())
    }

    #[test]
    fn r1_examples() {
        assert_eq!(compute_r1(&CoefficientSet::laplacian()), 1.0);
        assert_eq!(compute_r1(&CoefficientSet::laplacian().with_a2_const(2.0)), 5.0);
        let c = CoefficientSet::laplacian()
            .with_a1_const([1.0, 0.0])
            .with_a2_const(1.0)
            .with_a3_const(1.0);
        assert_eq!(compute_r1(&c), 4.0);
    }

    #[test]
    fn r1_sign_invariant() {
        let p = CoefficientSet::laplacian().with_a2_const(0.7).with_a3_const(-0.3);
        let m = CoefficientSet::laplacian().with_a2_const(-0.7).with_a3_const(0.3);
        assert_eq!(compute_r1(&p), compute_r1(&m));
        assert!(compute_r1(&p) >= 1.0);
    }

    #[test]
    fn sampled_sup_norms_match_metadata() {
        let (g, tg) = grids();
        let c = CoefficientSet::laplacian().with_a3(|_, x| x[0], 1.0, 1.0);
        let s = c.sampled_sup_norms(&g, &tg);
        assert!((s.a3_w1inf - c.sup.a3_w1inf).abs() < 1e-6);
    }

    #[test]
    fn unit_b_is_elliptic_with_zero_margin() {
        let (g, tg) = grids();
        let r = check_ellipticity(&CoefficientSet::laplacian(), &g, &tg);
        assert!(r.pass);
        assert_eq!(r.min_margin, 0.0);
    }

    #[test]
    fn scaled_identity_in_2d_has_exact_zero_margin() {
        let g = SpatialGrid::new_2d(1.0, 4, 1.0, 3).unwrap();
        let tg = TimeGrid::new(1.0, 2).unwrap();
        let c = CoefficientSet::laplacian().with_b(|_, _| [[0.3, 0.0], [0.0, 0.3]], 0.3, true);
        let r = check_ellipticity(&c, &g, &tg);
        assert!(r.pass);
        assert_eq!(r.min_margin, 0.0);
    }

    #[test]
    fn too_large_sigma_fails_everywhere() {
        let (g, tg) = grids();
        let mut c = CoefficientSet::laplacian();
        c.sigma = 2.0;
        let r = check_ellipticity(&c, &g, &tg);
        assert!(!r.pass);
        assert_eq!(r.violations.len(), g.full_len() * (tg.steps() + 1));
        assert!(r.ensure().is_err());
    }

    #[test]
    fn varying_b_margin_from_grid_minimum() {
        let (g, tg) = grids();
        let c = CoefficientSet::laplacian().with_b(|_, x| [[2.0 + x[0].sin(), 0.0], [0.0, 1.0]], 1.0, true);
        let r = check_ellipticity(&c, &g, &tg);
        // brute-force minimum over the sampled nodes
        let oracle = (0..g.full_len())
            .map(|i| 1.0 + g.full_coords(i)[0].sin())
            .fold(f64::INFINITY, f64::min);
        assert!(r.pass);
        assert!((r.min_margin - oracle).abs() < 1e-15);
        assert!((r.min_margin - 1.0).abs() < 1e-12);
    }
}
