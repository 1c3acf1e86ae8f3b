use std::sync::Arc;

use crate::coeffs::CoefficientSet;
use crate::grid::SpatialGrid;
use crate::linalg::SparseMatrix;

/// `y -> sum_ij (b^{ij} y_{x_i})_{x_j}` on interior nodes with homogeneous
/// Dirichlet data, frozen at time `t`.
///
/// Diagonal parts use the conservative flux form with `b` at half nodes;
/// mixed parts use `D_j (b^{ij} D_i y)` with centered differences, which is
/// symmetric whenever `b` is.
#[derive(Clone, Debug)]
pub struct EllipticOperator {
    grid: Arc<SpatialGrid>,
    t: f64,
    matrix: SparseMatrix,
}

impl EllipticOperator {
    pub fn grid(&self) -> &Arc<SpatialGrid> {
        &self.grid
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    pub fn matrix(&self) -> &SparseMatrix {
        &self.matrix
    }

    pub fn apply(&self, y: &[f64]) -> Vec<f64> {
        self.matrix.apply(y)
    }

    /// Gershgorin upper bound on the spectrum; `<= 0` certifies negative
    /// semidefiniteness.
    pub fn gershgorin_upper(&self) -> f64 {
        self.matrix.gershgorin_upper()
    }

    /// `-<A v, v>_h`, the discrete Dirichlet energy.
    pub fn energy(&self, v: &[f64]) -> f64 {
        let av = self.matrix.apply(v);
        -self.grid.cell_volume() * av.iter().zip(v).map(|(a, b)| a * b).sum::<f64>()
    }
}

pub fn assemble_elliptic(grid: &Arc<SpatialGrid>, c: &CoefficientSet, t: f64) -> EllipticOperator {
    let (n1, n2) = grid.interior_shape();
    let dim = grid.dim();
    let hs: Vec<f64> = (0..dim).map(|a| grid.spacing(a)).collect();
    let at = |i1: isize, i2: isize| -> Option<usize> {
        let ok1 = i1 >= 0 && (i1 as usize) < n1;
        let ok2 = i2 >= 0 && (i2 as usize) < n2;
        (ok1 && ok2).then(|| i1 as usize + n1 * i2 as usize)
    };
    // coordinates of interior index (i1, i2), fractional offsets allowed
    let coord = |i1: f64, i2: f64| -> [f64; 2] {
        let x1 = (i1 + 1.0) * hs[0];
        let x2 = if dim == 2 { (i2 + 1.0) * hs[1] } else { 0.0 };
        [x1, x2]
    };

    let mut rows = Vec::with_capacity(n1 * n2);
    for i2 in 0..n2 as isize {
        for i1 in 0..n1 as isize {
            let mut row = Vec::with_capacity(9);
            let (f1, f2) = (i1 as f64, i2 as f64);
            for axis in 0..dim {
                let (e1, e2) = if axis == 0 { (1, 0) } else { (0, 1) };
                let (d1, d2) = (e1 as f64 * 0.5, e2 as f64 * 0.5);
                let h2 = hs[axis] * hs[axis];
                let bp = c.b_at(t, coord(f1 + d1, f2 + d2))[axis][axis] / h2;
                let bm = c.b_at(t, coord(f1 - d1, f2 - d2))[axis][axis] / h2;
                let me = at(i1, i2).unwrap();
                row.push((me, -(bp + bm)));
                if let Some(j) = at(i1 + e1, i2 + e2) {
                    row.push((j, bp));
                }
                if let Some(j) = at(i1 - e1, i2 - e2) {
                    row.push((j, bm));
                }
            }
            if dim == 2 {
                let q = 1.0 / (4.0 * hs[0] * hs[1]);
                // d_x2 (b12 d_x1 y): b12 sampled at (i1, i2 +- 1)
                for s2 in [-1isize, 1] {
                    let b12 = c.b_at(t, coord(f1, f2 + s2 as f64))[0][1];
                    for s1 in [-1isize, 1] {
                        if let Some(j) = at(i1 + s1, i2 + s2) {
                            row.push((j, (s1 * s2) as f64 * b12 * q));
                        }
                    }
                }
                // d_x1 (b21 d_x2 y): b21 sampled at (i1 +- 1, i2)
                for s1 in [-1isize, 1] {
                    let b21 = c.b_at(t, coord(f1 + s1 as f64, f2))[1][0];
                    for s2 in [-1isize, 1] {
                        if let Some(j) = at(i1 + s1, i2 + s2) {
                            row.push((j, (s1 * s2) as f64 * b21 * q));
                        }
                    }
                }
            }
            rows.push(row);
        }
    }
    EllipticOperator {
        grid: grid.clone(),
        t,
        matrix: SparseMatrix::from_rows(rows),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn laplacian_stencil() {
        let g = Arc::new(SpatialGrid::new_1d(1.0, 3).unwrap());
        let a = assemble_elliptic(&g, &CoefficientSet::laplacian(), 0.0);
        let m = a.matrix();
        assert_eq!((m.get(1, 0), m.get(1, 1), m.get(1, 2)), (16.0, -32.0, 16.0));
        assert_eq!(m.get(0, 2), 0.0);
    }

    #[test]
    fn discrete_eigenvalue() {
        let n = 255;
        let g = Arc::new(SpatialGrid::new_1d(1.0, n).unwrap());
        let h = g.spacing(0);
        let a = assemble_elliptic(&g, &CoefficientSet::laplacian(), 0.0);
        let y = g.sample_interior(|x| (PI * x[0]).sin());
        let ay = a.apply(&y);
        let mu = -(4.0 / (h * h)) * (PI * h / 2.0).sin().powi(2);
        for (p, q) in ay.iter().zip(&y) {
            assert!((p - mu * q).abs() < 1e-9);
            assert!((p + PI * PI * q).abs() < 1e-3);
        }
    }

    #[test]
    fn variable_coefficient_symmetric_and_negative() {
        let g = Arc::new(SpatialGrid::new_2d(1.0, 7, 2.0, 5).unwrap());
        let c = CoefficientSet::laplacian().with_b(
            |_, x| {
                let off = 0.3 * (x[0] * x[1]).sin();
                [[2.0 + x[0], off], [off, 2.0 + x[1].cos()]]
            },
            1.0,
            true,
        );
        let a = assemble_elliptic(&g, &c, 0.0);
        assert!(a.matrix().asymmetry() < 1e-12);
        let y = g.sample_interior(|x| x[0] * (1.0 - x[0]) + x[1]);
        assert!(a.energy(&y) > 0.0);
    }

    #[test]
    fn laplacian_gershgorin() {
        let g = Arc::new(SpatialGrid::new_2d(1.0, 5, 1.0, 6).unwrap());
        let a = assemble_elliptic(&g, &CoefficientSet::laplacian(), 0.0);
        assert!(a.gershgorin_upper() <= 1e-12);
        assert_eq!(a.matrix().bandwidth(), 5);
    }
}
