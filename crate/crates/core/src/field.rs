//! Scalar fields, discrete gradients and quadrature norms.
//!
//! Gradients use centered differences at interior nodes and second-order
//! one-sided differences at boundary nodes; integrals use the tensor
//! trapezoid rule over the full node set.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::grid::SpatialGrid;

/// Values at interior nodes at one time instant; boundary values are 0.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField {
    grid: Arc<SpatialGrid>,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(grid: Arc<SpatialGrid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.interior_len() {
            return Err(Error::DimensionMismatch {
                expected: grid.interior_len(),
                got: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("scalar field"));
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: Arc<SpatialGrid>) -> Self {
        let n = grid.interior_len();
        Self {
            grid,
            values: vec![0.0; n],
        }
    }

    pub fn from_fn(grid: Arc<SpatialGrid>, f: impl Fn([f64; 2]) -> f64) -> Result<Self> {
        let values = grid.sample_interior(f);
        Self::new(grid, values)
    }

    pub fn grid(&self) -> &Arc<SpatialGrid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Values on the full node set with the Dirichlet zeros filled in.
    pub fn full(&self) -> Vec<f64> {
        self.grid.embed(&self.values)
    }

    pub fn l2_norm(&self) -> f64 {
        SpaceQuadrature::new(&self.grid).l2_sq(&self.full()).sqrt()
    }

    pub fn h1_seminorm(&self) -> f64 {
        SpaceQuadrature::new(&self.grid).grad_sq(&self.full()).sqrt()
    }

    /// Full H1 norm, `sqrt(|y|^2 + |grad y|^2)`.
    pub fn h1_norm(&self) -> f64 {
        let q = SpaceQuadrature::new(&self.grid);
        let full = self.full();
        (q.l2_sq(&full) + q.grad_sq(&full)).sqrt()
    }
}

pub fn l2_norm(field: &ScalarField) -> f64 {
    field.l2_norm()
}

pub fn h1_seminorm(field: &ScalarField) -> f64 {
    field.h1_seminorm()
}

/// Derivative along `axis` at every full node.
pub fn partial(grid: &SpatialGrid, full: &[f64], axis: usize) -> Vec<f64> {
    let (m1, m2) = grid.full_shape();
    let h = grid.spacing(axis);
    let (m, stride) = if axis == 0 { (m1, 1) } else { (m2, m1) };
    let mut out = vec![0.0; full.len()];
    for idx in 0..full.len() {
        let i = if axis == 0 { idx % m1 } else { idx / m1 };
        let at = |off: isize| full[(idx as isize + off * stride as isize) as usize];
        out[idx] = if i == 0 {
            (-3.0 * at(0) + 4.0 * at(1) - at(2)) / (2.0 * h)
        } else if i == m - 1 {
            (3.0 * at(0) - 4.0 * at(-1) + at(-2)) / (2.0 * h)
        } else {
            (at(1) - at(-1)) / (2.0 * h)
        };
    }
    out
}

/// Gradient at every full node, one vector per axis.
pub fn gradient(grid: &SpatialGrid, full: &[f64]) -> Vec<Vec<f64>> {
    (0..grid.dim()).map(|a| partial(grid, full, a)).collect()
}

/// Trapezoid quadrature on a fixed grid.
#[derive(Clone, Debug)]
pub struct SpaceQuadrature<'g> {
    grid: &'g SpatialGrid,
    weights: Vec<f64>,
}

impl<'g> SpaceQuadrature<'g> {
    pub fn new(grid: &'g SpatialGrid) -> Self {
        Self {
            grid,
            weights: grid.trapezoid_weights(),
        }
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn integrate(&self, full: &[f64]) -> f64 {
        self.weights.iter().zip(full).map(|(w, v)| w * v).sum()
    }

    pub fn inner(&self, a: &[f64], b: &[f64]) -> f64 {
        self.weights.iter().zip(a.iter().zip(b)).map(|(w, (x, y))| w * x * y).sum()
    }

    pub fn l2_sq(&self, full: &[f64]) -> f64 {
        self.inner(full, full)
    }

    pub fn grad_sq(&self, full: &[f64]) -> f64 {
        gradient(self.grid, full).iter().map(|g| self.l2_sq(g)).sum()
    }

    pub fn grad_inner(&self, a: &[f64], b: &[f64]) -> f64 {
        let ga = gradient(self.grid, a);
        let gb = gradient(self.grid, b);
        ga.iter().zip(&gb).map(|(x, y)| self.inner(x, y)).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn grid(n: usize) -> Arc<SpatialGrid> {
        Arc::new(SpatialGrid::new_1d(1.0, n).unwrap())
    }

    #[test]
    fn zero_field_has_zero_norms() {
        let f = ScalarField::zeros(grid(7));
        assert_eq!(f.l2_norm(), 0.0);
        assert_eq!(f.h1_seminorm(), 0.0);
    }

    #[test]
    fn sine_norms_match_analytic_integrals() {
        let g = grid(255);
        let h = g.spacing(0);
        let f = ScalarField::from_fn(g, |x| (PI * x[0]).sin()).unwrap();
        assert!((f.l2_norm() - 0.5f64.sqrt()).abs() < 10.0 * h * h);
        assert!((f.h1_seminorm() - PI / 2f64.sqrt()).abs() < 10.0 * h * h);
    }

    #[test]
    fn parabola_l2_norm() {
        let g = grid(255);
        let h = g.spacing(0);
        let f = ScalarField::from_fn(g, |x| x[0] * (1.0 - x[0])).unwrap();
        assert!((f.l2_norm() - (1.0f64 / 30.0).sqrt()).abs() < h * h);
    }

    #[test]
    fn gradient_exact_on_quadratics() {
        let g = grid(9);
        let full = g.sample_full(|x| x[0] * x[0] - 3.0 * x[0] + 1.0);
        let d = partial(&g, &full, 0);
        for (i, v) in d.iter().enumerate() {
            let x = g.full_coords(i)[0];
            assert!((v - (2.0 * x - 3.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn two_d_gradient_along_second_axis() {
        let g = SpatialGrid::new_2d(1.0, 5, 2.0, 7).unwrap();
        let full = g.sample_full(|x| x[1] * x[1] + x[0]);
        let d2 = partial(&g, &full, 1);
        for (i, v) in d2.iter().enumerate() {
            assert!((v - 2.0 * g.full_coords(i)[1]).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_wrong_length_and_nan() {
        assert!(ScalarField::new(grid(3), vec![0.0; 2]).is_err());
        assert!(ScalarField::new(grid(3), vec![0.0, f64::NAN, 0.0]).is_err());
    }
}
