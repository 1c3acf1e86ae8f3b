use std::io::Write;

use crate::error::{Error, Result};
use crate::grid::{SpatialGrid, TimeGrid};
use crate::spde::SpdeTrajectory;

pub const FLUX_CSV_HEADER: &str = "t,boundary_site,flux_value";

/// Boundary node where the flux is sampled, with its outward normal axis and
/// direction and its quadrature weight along the boundary.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundarySite {
    pub full_index: usize,
    pub axis: usize,
    /// `-1` on the low face, `+1` on the high face.
    pub sign: f64,
    pub weight: f64,
    pub x: [f64; 2],
}

/// Boundary sites of `grid`: both endpoints of an interval, or every
/// non-corner boundary node of a rectangle (the normal is undefined at
/// corners, where the flux of a Dirichlet solution is zero anyway).
pub fn boundary_sites(grid: &SpatialGrid) -> Vec<BoundarySite> {
    let (m1, m2) = grid.full_shape();
    let mut out = Vec::new();
    if grid.dim() == 1 {
        for (idx, sign) in [(0, -1.0), (m1 - 1, 1.0)] {
            out.push(BoundarySite {
                full_index: idx,
                axis: 0,
                sign,
                weight: 1.0,
                x: grid.full_coords(idx),
            });
        }
        return out;
    }
    let (h1, h2) = (grid.spacing(0), grid.spacing(1));
    for (i2, sign) in [(0, -1.0), (m2 - 1, 1.0)] {
        for i1 in 1..m1 - 1 {
            let idx = i1 + m1 * i2;
            out.push(BoundarySite {
                full_index: idx,
                axis: 1,
                sign,
                weight: h1,
                x: grid.full_coords(idx),
            });
        }
    }
    for (i1, sign) in [(0, -1.0), (m1 - 1, 1.0)] {
        for i2 in 1..m2 - 1 {
            let idx = i1 + m1 * i2;
            out.push(BoundarySite {
                full_index: idx,
                axis: 0,
                sign,
                weight: h2,
                x: grid.full_coords(idx),
            });
        }
    }
    out
}

/// Outward normal derivative at `site` of a full-node field, by the
/// one-sided second-order difference `(3 y_0 - 4 y_1 + y_2) / 2h` taken
/// into the domain.
pub fn site_flux(grid: &SpatialGrid, full: &[f64], site: &BoundarySite) -> f64 {
    let (m1, _) = grid.full_shape();
    let stride = if site.axis == 0 { 1 } else { m1 } as isize;
    let inward = -site.sign as isize * stride;
    let at = |o: isize| full[(site.full_index as isize + o * inward) as usize];
    // derivative along the inward direction, negated
    -(-3.0 * at(0) + 4.0 * at(1) - at(2)) / (2.0 * grid.spacing(site.axis))
}

/// `dy/dnu` sampled at boundary sites and time nodes `0..=k`.
#[derive(Clone, Debug, PartialEq)]
pub struct FluxObservation {
    pub times: Vec<f64>,
    pub sites: Vec<BoundarySite>,
    /// `values[k][site]`
    pub values: Vec<Vec<f64>>,
    dt: f64,
}

impl FluxObservation {
    /// Copy keeping only the listed sites (partial-boundary observation).
    pub fn restrict(&self, keep: impl Fn(&BoundarySite) -> bool) -> Self {
        let sel: Vec<usize> = (0..self.sites.len()).filter(|&i| keep(&self.sites[i])).collect();
        Self {
            times: self.times.clone(),
            sites: sel.iter().map(|&i| self.sites[i]).collect(),
            values: self.values.iter().map(|row| sel.iter().map(|&i| row[i]).collect()).collect(),
            dt: self.dt,
        }
    }

    /// `L^2(0, t0; L^2(dG))` inner product: trapezoid in time, site weights on
    /// the boundary.
    pub fn inner(&self, other: &FluxObservation) -> Result<f64> {
        if self.values.len() != other.values.len() || self.sites.len() != other.sites.len() {
            return Err(Error::DimensionMismatch {
                expected: self.values.len() * self.sites.len(),
                got: other.values.len() * other.sites.len(),
            });
        }
        let n = self.values.len() - 1;
        let mut acc = 0.0;
        for (k, (a, b)) in self.values.iter().zip(&other.values).enumerate() {
            let wt = if n == 0 || k == 0 || k == n { 0.5 * self.dt } else { self.dt };
            let s: f64 = self.sites.iter().zip(a.iter().zip(b)).map(|(s, (x, y))| s.weight * x * y).sum();
            acc += wt * s;
        }
        Ok(acc)
    }

    pub fn norm(&self) -> f64 {
        self.inner(self).map(f64::sqrt).unwrap_or(f64::NAN)
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().flatten().all(|v| v.is_finite())
    }

    pub fn write_csv(&self, mut w: impl Write, header: bool) -> std::io::Result<()> {
        if header {
            writeln!(w, "{FLUX_CSV_HEADER}")?;
        }
        for (t, row) in self.times.iter().zip(&self.values) {
            for (i, v) in row.iter().enumerate() {
                writeln!(w, "{t},{i},{v:e}")?;
            }
        }
        Ok(())
    }
}

/// Flux of `traj` on `[0, t0]`, `t0` snapped to the nearest time node.
pub fn normal_flux(traj: &SpdeTrajectory, t0: f64) -> Result<FluxObservation> {
    let tg: &TimeGrid = traj.time_grid();
    let k0 = tg.index_of(t0)?;
    let grid = traj.grid();
    let sites = boundary_sites(grid);
    let values = (0..=k0)
        .map(|k| {
            let full = traj.full(k);
            sites.iter().map(|s| site_flux(grid, &full, s)).collect()
        })
        .collect();
    Ok(FluxObservation {
        times: (0..=k0).map(|k| tg.time(k)).collect(),
        sites,
        values,
        dt: tg.dt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn sites_and_weights() {
        let g = SpatialGrid::new_1d(1.0, 5).unwrap();
        assert_eq!(boundary_sites(&g).len(), 2);
        let g = SpatialGrid::new_2d(1.0, 3, 2.0, 4).unwrap();
        let s = boundary_sites(&g);
        assert_eq!(s.len(), 2 * 3 + 2 * 4);
        let perimeter: f64 = s.iter().map(|s| s.weight).sum();
        // weights sum to the perimeter minus the four half-cells at corners
        assert!((perimeter - (2.0 * 1.0 + 2.0 * 2.0 - 2.0 * 0.25 - 2.0 * 0.4)).abs() < 1e-12);
    }

    #[test]
    fn flux_of_sine_2d_faces() {
        let g = SpatialGrid::new_2d(1.0, 63, 1.0, 63).unwrap();
        let f = g.sample_full(|x| (PI * x[0]).sin() * (PI * x[1]).sin());
        // one-sided truncation error is h^2 |y'''| / 3
        let tol = 0.5 * g.spacing(0).powi(2) * PI.powi(3);
        for s in boundary_sites(&g) {
            let other = if s.axis == 0 { s.x[1] } else { s.x[0] };
            let exact = -PI * (PI * other).sin();
            assert!((site_flux(&g, &f, &s) - exact).abs() < tol, "{s:?}");
        }
    }
}
