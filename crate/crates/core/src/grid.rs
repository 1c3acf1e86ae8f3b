//! Uniform tensor grids in space and time.
//!
//! Spatial fields are stored either on interior nodes only (Dirichlet data
//! implicit) or on the full node set including the boundary. Full-node arrays
//! are ordered with the first axis fastest.

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Axis {
    pub length: f64,
    pub interior: usize,
}

impl Axis {
    pub fn spacing(&self) -> f64 {
        self.length / (self.interior + 1) as f64
    }

    /// Node count including both boundary nodes.
    pub fn nodes(&self) -> usize {
        self.interior + 2
    }

    pub fn coord(&self, i: usize) -> f64 {
        self.length * i as f64 / (self.interior + 1) as f64
    }

    /// One-dimensional trapezoid weights over all nodes.
    pub fn trapezoid_weights(&self) -> Vec<f64> {
        let h = self.spacing();
        let mut w = vec![h; self.nodes()];
        w[0] = 0.5 * h;
        w[self.nodes() - 1] = 0.5 * h;
        w
    }
}

/// Interval `(0, l)` or rectangle `(0, l) x (0, l')`.
#[derive(Clone, Debug, PartialEq)]
pub struct SpatialGrid {
    axes: Vec<Axis>,
}

impl SpatialGrid {
    pub fn new_1d(length: f64, interior: usize) -> Result<Self> {
        Self::from_axes(vec![Axis { length, interior }])
    }

    pub fn new_2d(l1: f64, n1: usize, l2: f64, n2: usize) -> Result<Self> {
        Self::from_axes(vec![
            Axis {
                length: l1,
                interior: n1,
            },
            Axis {
                length: l2,
                interior: n2,
            },
        ])
    }

    fn from_axes(axes: Vec<Axis>) -> Result<Self> {
        for a in &axes {
            if !(a.length.is_finite() && a.length > 0.0) {
                return Err(Error::InvalidGrid(format!("length {} must be positive", a.length)));
            }
            if a.interior == 0 {
                return Err(Error::InvalidGrid("need at least one interior point per axis".into()));
            }
        }
        Ok(Self { axes })
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn axis(&self, i: usize) -> &Axis {
        &self.axes[i]
    }

    pub fn axes(&self) -> &[Axis] {
        &self.axes
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        self.axes[axis].spacing()
    }

    pub fn min_spacing(&self) -> f64 {
        self.axes.iter().map(Axis::spacing).fold(f64::INFINITY, f64::min)
    }

    /// Interior node counts `(n1, n2)`; `n2 = 1` in 1D.
    pub fn interior_shape(&self) -> (usize, usize) {
        match self.axes.as_slice() {
            [a] => (a.interior, 1),
            [a, b] => (a.interior, b.interior),
            _ => unreachable!(),
        }
    }

    /// Full node counts `(m1, m2)`; `m2 = 1` in 1D.
    pub fn full_shape(&self) -> (usize, usize) {
        match self.axes.as_slice() {
            [a] => (a.nodes(), 1),
            [a, b] => (a.nodes(), b.nodes()),
            _ => unreachable!(),
        }
    }

    pub fn interior_len(&self) -> usize {
        let (n1, n2) = self.interior_shape();
        n1 * n2
    }

    pub fn full_len(&self) -> usize {
        let (m1, m2) = self.full_shape();
        m1 * m2
    }

    pub fn cell_volume(&self) -> f64 {
        self.axes.iter().map(Axis::spacing).product()
    }

    /// Full-node index of the interior node with interior index `idx`.
    pub fn interior_to_full(&self, idx: usize) -> usize {
        let (n1, _) = self.interior_shape();
        let (m1, _) = self.full_shape();
        let (i1, i2) = (idx % n1, idx / n1);
        match self.dim() {
            1 => i1 + 1,
            _ => (i1 + 1) + m1 * (i2 + 1),
        }
    }

    pub fn is_boundary_full(&self, idx: usize) -> bool {
        let (m1, m2) = self.full_shape();
        let (i1, i2) = (idx % m1, idx / m1);
        let on1 = i1 == 0 || i1 == m1 - 1;
        match self.dim() {
            1 => on1,
            _ => on1 || i2 == 0 || i2 == m2 - 1,
        }
    }

    pub fn full_coords(&self, idx: usize) -> [f64; 2] {
        let (m1, _) = self.full_shape();
        let (i1, i2) = (idx % m1, idx / m1);
        match self.axes.as_slice() {
            [a] => [a.coord(i1), 0.0],
            [a, b] => [a.coord(i1), b.coord(i2)],
            _ => unreachable!(),
        }
    }

    pub fn interior_coords(&self, idx: usize) -> [f64; 2] {
        self.full_coords(self.interior_to_full(idx))
    }

    /// Pads interior values with zero boundary values.
    pub fn embed(&self, interior: &[f64]) -> Vec<f64> {
        let mut full = vec![0.0; self.full_len()];
        for (idx, &v) in interior.iter().enumerate() {
            full[self.interior_to_full(idx)] = v;
        }
        full
    }

    pub fn restrict(&self, full: &[f64]) -> Vec<f64> {
        (0..self.interior_len())
            .map(|idx| full[self.interior_to_full(idx)])
            .collect()
    }

    /// Tensor-product trapezoid weights over the full node set.
    pub fn trapezoid_weights(&self) -> Vec<f64> {
        let w1 = self.axes[0].trapezoid_weights();
        match self.axes.get(1) {
            None => w1,
            Some(a2) => {
                let w2 = a2.trapezoid_weights();
                w2.iter().flat_map(|&b| w1.iter().map(move |&a| a * b)).collect()
            }
        }
    }

    pub fn sample_full(&self, f: impl Fn([f64; 2]) -> f64) -> Vec<f64> {
        (0..self.full_len()).map(|i| f(self.full_coords(i))).collect()
    }

    pub fn sample_interior(&self, f: impl Fn([f64; 2]) -> f64) -> Vec<f64> {
        (0..self.interior_len()).map(|i| f(self.interior_coords(i))).collect()
    }

    /// Grid with every spacing halved.
    pub fn refined(&self) -> Self {
        Self {
            axes: self
                .axes
                .iter()
                .map(|a| Axis {
                    length: a.length,
                    interior: 2 * a.interior + 1,
                })
                .collect(),
        }
    }
}

/// Uniform grid on `[0, T]` with named marked times snapped to nodes.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeGrid {
    horizon: f64,
    steps: usize,
    marks: Vec<(String, usize)>,
}

impl TimeGrid {
    pub fn new(horizon: f64, steps: usize) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::InvalidGrid(format!("horizon {horizon} must be positive")));
        }
        Ok(Self {
            horizon,
            steps,
            marks: Vec::new(),
        })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Step size; zero for the degenerate grid with no steps.
    pub fn dt(&self) -> f64 {
        if self.steps == 0 {
            0.0
        } else {
            self.horizon / self.steps as f64
        }
    }

    pub fn time(&self, k: usize) -> f64 {
        if self.steps == 0 {
            0.0
        } else {
            self.horizon * k as f64 / self.steps as f64
        }
    }

    pub fn times(&self) -> Vec<f64> {
        (0..=self.steps).map(|k| self.time(k)).collect()
    }

    /// Nearest node index to `t`.
    pub fn index_of(&self, t: f64) -> Result<usize> {
        if !(t.is_finite() && (0.0..=self.horizon * (1.0 + 1e-12)).contains(&t)) {
            return Err(Error::Precondition(format!(
                "time {t} outside [0, {}]",
                self.horizon
            )));
        }
        if self.steps == 0 {
            return Ok(0);
        }
        Ok(((t / self.dt()).round() as usize).min(self.steps))
    }

    /// Adds (or replaces) a marked time, snapped to the nearest node.
    pub fn with_mark(mut self, label: &str, t: f64) -> Result<Self> {
        let k = self.index_of(t)?;
        self.marks.retain(|(l, _)| l != label);
        self.marks.push((label.to_string(), k));
        self.marks.sort_by_key(|&(_, k)| k);
        Ok(self)
    }

    pub fn mark(&self, label: &str) -> Option<usize> {
        self.marks.iter().find(|(l, _)| l == label).map(|&(_, k)| k)
    }

    pub fn marks(&self) -> &[(String, usize)] {
        &self.marks
    }

    /// Same horizon with `factor` times as many steps; marks keep their times.
    pub fn refined(&self, factor: usize) -> Self {
        Self {
            horizon: self.horizon,
            steps: self.steps * factor,
            marks: self.marks.iter().map(|(l, k)| (l.clone(), k * factor)).collect(),
        }
    }

    /// Trapezoid weights in time over nodes `from..=to`.
    pub fn trapezoid_weights(&self, from: usize, to: usize) -> Vec<f64> {
        let dt = self.dt();
        let mut w = vec![dt; to - from + 1];
        if to > from {
            w[0] = 0.5 * dt;
            w[to - from] = 0.5 * dt;
        } else {
            w[0] = 0.0;
        }
        w
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spacing_and_coords() {
        let g = SpatialGrid::new_1d(1.0, 3).unwrap();
        assert_eq!(g.spacing(0), 0.25);
        assert_eq!(g.full_coords(4), [1.0, 0.0]);
        assert!(g.is_boundary_full(0) && g.is_boundary_full(4) && !g.is_boundary_full(2));
        assert_eq!(g.embed(&[1.0, 2.0, 3.0]), vec![0.0, 1.0, 2.0, 3.0, 0.0]);
    }

    #[test]
    fn two_d_indexing_round_trips() {
        let g = SpatialGrid::new_2d(1.0, 3, 2.0, 2).unwrap();
        assert_eq!(g.full_shape(), (5, 4));
        let vals: Vec<f64> = (0..g.interior_len()).map(|i| i as f64 + 1.0).collect();
        let full = g.embed(&vals);
        assert_eq!(g.restrict(&full), vals);
        let boundary_sum: f64 = (0..g.full_len())
            .filter(|&i| g.is_boundary_full(i))
            .map(|i| full[i])
            .sum();
        assert_eq!(boundary_sum, 0.0);
        let w: f64 = g.trapezoid_weights().iter().sum();
        assert!((w - 2.0).abs() < 1e-14);
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(SpatialGrid::new_1d(0.0, 3).is_err());
        assert!(SpatialGrid::new_1d(1.0, 0).is_err());
        assert!(TimeGrid::new(-1.0, 4).is_err());
    }

    #[test]
    fn marks_snap_to_nodes() {
        let tg = TimeGrid::new(1.0, 10).unwrap().with_mark("t0", 0.52).unwrap();
        assert_eq!(tg.mark("t0"), Some(5));
        assert_eq!(tg.refined(4).mark("t0"), Some(20));
        assert!(tg.clone().with_mark("x", 1.5).is_err());
        assert_eq!(tg.time(10), 1.0);
    }

    #[test]
    fn zero_step_grid() {
        let tg = TimeGrid::new(1.0, 0).unwrap();
        assert_eq!(tg.dt(), 0.0);
        assert_eq!(tg.times(), vec![0.0]);
    }
}
