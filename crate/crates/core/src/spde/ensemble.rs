use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::sde::{sample_brownian, BrownianPath};

use super::solver::{SpdeSolver, SpdeTrajectory};

/// `M` paths of one solver from a common initial field.
///
/// Per-path work runs on the current rayon pool; results always come back in
/// path-index order so every reduction over them is schedule independent.
/// Without any `dB` term all paths coincide and only one is solved.
#[derive(Clone, Debug)]
pub struct Ensemble<'s> {
    solver: &'s SpdeSolver,
    y0: Vec<f64>,
    seed: u64,
    paths: usize,
}

impl<'s> Ensemble<'s> {
    pub fn new(solver: &'s SpdeSolver, y0: &ScalarField, seed: u64, paths: usize) -> Result<Self> {
        Self::from_values(solver, y0.values().to_vec(), seed, paths)
    }

    pub fn from_values(solver: &'s SpdeSolver, y0: Vec<f64>, seed: u64, paths: usize) -> Result<Self> {
        if paths == 0 {
            return Err(Error::EmptyEnsemble);
        }
        if y0.len() != solver.grid().interior_len() {
            return Err(Error::DimensionMismatch {
                expected: solver.grid().interior_len(),
                got: y0.len(),
            });
        }
        Ok(Self {
            solver,
            y0,
            seed,
            paths,
        })
    }

    pub fn solver(&self) -> &'s SpdeSolver {
        self.solver
    }

    pub fn y0(&self) -> &[f64] {
        &self.y0
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn len(&self) -> usize {
        self.paths
    }

    pub fn is_empty(&self) -> bool {
        self.paths == 0
    }

    /// All paths give the same trajectory.
    pub fn is_noise_free(&self) -> bool {
        self.solver.coeffs().is_noise_free()
    }

    pub fn path(&self, i: usize) -> BrownianPath {
        sample_brownian(self.seed, i as u64, self.solver.time_grid())
    }

    pub fn trajectory(&self, i: usize) -> Result<SpdeTrajectory> {
        self.solver.solve_values(&self.y0, &self.path(i))
    }

    fn replicate<T: Clone>(&self, one: T) -> Vec<T> {
        vec![one; self.paths]
    }

    pub fn map<T, F>(&self, f: F) -> Result<Vec<T>>
    where
        T: Send + Clone,
        F: Fn(&SpdeTrajectory) -> T + Sync,
    {
        if self.is_noise_free() {
            return Ok(self.replicate(f(&self.trajectory(0)?)));
        }
        (0..self.paths)
            .into_par_iter()
            .map(|i| self.trajectory(i).map(|tr| f(&tr)))
            .collect()
    }

    /// Streams every path through `visit(acc, k, y_k)` starting from
    /// `init(path)`, without storing trajectories.
    pub fn fold<A, I, V>(&self, init: I, visit: V) -> Result<Vec<A>>
    where
        A: Send + Clone,
        I: Fn(&BrownianPath) -> A + Sync,
        V: Fn(&mut A, usize, &[f64]) + Sync,
    {
        let one = |i: usize| -> Result<A> {
            let path = self.path(i);
            let mut acc = init(&path);
            self.solver.run(&self.y0, &path, |k, y| visit(&mut acc, k, y))?;
            Ok(acc)
        };
        if self.is_noise_free() {
            return Ok(self.replicate(one(0)?));
        }
        (0..self.paths).into_par_iter().map(one).collect()
    }

    /// Nodewise mean and sample standard deviation of `y(t_k)`.
    pub fn moments_at(&self, k: usize) -> Result<(Vec<f64>, Vec<f64>)> {
        let slices = self.fold(|_| Vec::new(), |acc, j, y| {
            if j == k {
                acc.extend_from_slice(y)
            }
        })?;
        let n = self.y0.len();
        let mut mean = vec![0.0; n];
        let mut sd = vec![0.0; n];
        for i in 0..n {
            let col: Vec<f64> = slices.iter().map(|s| s[i]).collect();
            let (m, s) = mean_sd(&col);
            mean[i] = m;
            sd[i] = s;
        }
        Ok((mean, sd))
    }
}

/// Mean and sample standard deviation (zero for fewer than two values),
/// summed in index order.
pub fn mean_sd(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Mean and its standard error.
pub fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let (m, sd) = mean_sd(xs);
    (m, sd / (xs.len().max(1) as f64).sqrt())
}
