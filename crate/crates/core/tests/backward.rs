use std::f64::consts::PI;
use std::sync::Arc;

use spde_lab::backward::*;
use spde_lab::sde::{sample_brownian, standard_normal};
use spde_lab::spde::*;
use spde_lab::*;

fn grid1(n: usize) -> Arc<SpatialGrid> {
    Arc::new(SpatialGrid::new_1d(1.0, n).unwrap())
}

fn half() -> HolderExponent {
    HolderExponent::fitted(0.5).unwrap()
}

fn multiplicative() -> CoefficientSet {
    CoefficientSet::laplacian().with_a2_const(1.0).with_a3_const(0.5)
}

fn rel_l2(grid: &SpatialGrid, a: &[f64], b: &[f64]) -> f64 {
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    discrete_l2(grid, &d) / discrete_l2(grid, b)
}

#[test]
fn zero_data_ratio_is_zero() {
    let g = grid1(15);
    let tg = TimeGrid::new(1.0, 20).unwrap();
    let s = SpdeSolver::new(g, tg, multiplicative()).unwrap();
    let ens = Ensemble::from_values(&s, vec![0.0; 15], 0, 5).unwrap();
    let r = interpolation_ratio(&ens, 10, &half()).unwrap();
    assert_eq!((r.num, r.ratio, r.anomaly), (0.0, 0.0, false));
    assert!(interpolation_ratio(&ens, 0, &half()).is_err());
}

#[test]
fn heat_ratio_matches_eigenfunction_closed_form() {
    let g = grid1(127);
    let tg = TimeGrid::new(1.0, 20_000).unwrap();
    let s = SpdeSolver::new(g.clone(), tg, CoefficientSet::laplacian()).unwrap();
    let y0 = ScalarField::from_fn(g, |x| (PI * x[0]).sin()).unwrap();
    let ens = Ensemble::new(&s, &y0, 0, 10).unwrap();
    let r = interpolation_ratio(&ens, 10_000, &half()).unwrap();
    let p2 = PI * PI;
    let num = (-p2 / 2.0).exp() / 2f64.sqrt();
    let l2 = ((1.0 - (-2.0 * p2).exp()) / (4.0 * p2)).sqrt();
    let h1 = (-p2).exp() * (0.5 + p2 / 2.0).sqrt();
    let ratio = num / (l2.sqrt() * h1.sqrt());
    assert!((r.num / num - 1.0).abs() < 0.01, "{} {num}", r.num);
    assert!((r.ratio / ratio - 1.0).abs() < 0.01, "{} {ratio}", r.ratio);
}

/// Unit-norm initial data from five sine modes with keyed Gaussian weights.
fn random_unit(g: &Arc<SpatialGrid>, draw: u64) -> ScalarField {
    let a: Vec<f64> = (0..5).map(|j| standard_normal(77, draw, j)).collect();
    let f = ScalarField::from_fn(g.clone(), |x| {
        a.iter().enumerate().map(|(j, c)| c * ((j + 1) as f64 * PI * x[0]).sin()).sum()
    })
    .unwrap();
    let n = f.l2_norm();
    ScalarField::new(g.clone(), f.values().iter().map(|v| v / n).collect()).unwrap()
}

fn ratios_over_random_data(n: usize, steps: usize) -> Vec<f64> {
    let g = grid1(n);
    let tg = TimeGrid::new(1.0, steps).unwrap();
    let s = SpdeSolver::new(g.clone(), tg, multiplicative()).unwrap();
    (0..50)
        .map(|d| {
            let ens = Ensemble::new(&s, &random_unit(&g, d), d, 20).unwrap();
            let r = interpolation_ratio(&ens, steps / 2, &half()).unwrap();
            assert!(!r.anomaly);
            r.ratio
        })
        .collect()
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    0.5 * (s[(s.len() - 1) / 2] + s[s.len() / 2])
}

#[test]
fn ratio_bounded_over_random_data_and_refinements() {
    let mut maxima = Vec::new();
    for (n, steps) in [(15, 50), (31, 200)] {
        let r = ratios_over_random_data(n, steps);
        let max = r.iter().copied().fold(0.0, f64::max);
        assert!(max.is_finite());
        assert!(max <= 10.0 * median(&r), "max {max} median {}", median(&r));
        maxima.push(max);
    }
    let mid = 0.5 * (maxima[0] + maxima[1]);
    assert!(maxima.iter().all(|m| (m / mid - 1.0).abs() <= 0.5), "{maxima:?}");
}

#[test]
fn ratio_is_homogeneous() {
    let g = grid1(15);
    let tg = TimeGrid::new(1.0, 50).unwrap();
    let s = SpdeSolver::new(g.clone(), tg, multiplicative()).unwrap();
    let y0 = random_unit(&g, 3);
    let base = interpolation_ratio(&Ensemble::new(&s, &y0, 1, 30).unwrap(), 25, &half()).unwrap();
    for kappa in [1e-3, 7.0, 1e4] {
        let scaled = ScalarField::new(g.clone(), y0.values().iter().map(|v| kappa * v).collect()).unwrap();
        let r = interpolation_ratio(&Ensemble::new(&s, &scaled, 1, 30).unwrap(), 25, &half()).unwrap();
        assert!((r.ratio / base.ratio - 1.0).abs() < 1e-12);
    }
}

#[test]
fn operator_at_time_zero_is_identity() {
    let g = grid1(9);
    let tg = TimeGrid::new(0.01, 4).unwrap();
    let op = build_path_operator(g, tg.clone(), &multiplicative(), &sample_brownian(1, 0, &tg), 0).unwrap();
    assert_eq!(op.at_t0, nalgebra::DMatrix::identity(9, 9));
    assert!(op.sigma_min() > 0.0);
}

#[test]
fn heat_operator_eigenvalues() {
    let n = 15;
    let g = grid1(n);
    let (t, steps) = (0.02, 200);
    let tg = TimeGrid::new(t, steps).unwrap();
    let op = build_path_operator(g.clone(), tg.clone(), &CoefficientSet::laplacian(), &BrownianPath::zero(&tg), 100).unwrap();
    let h = g.spacing(0);
    let dt = t / steps as f64;
    let mut mu: Vec<f64> = (1..=n).map(|k| 4.0 / (h * h) * (k as f64 * PI * h / 2.0).sin().powi(2)).collect();
    mu.sort_by(|a, b| b.total_cmp(a));
    let ev = op.symmetric_eigenvalues();
    let top = ev[n - 1];
    for (e, m) in ev.iter().zip(&mu) {
        let euler = (1.0 + dt * m).powi(-(steps as i32));
        assert!((e - euler).abs() < 1e-12 * top, "{e} {euler}");
    }
    for m in &mu[n - 3..] {
        let e = ev[mu.iter().position(|x| x == m).unwrap()];
        assert!((e / (-m * t).exp() - 1.0).abs() < 0.01);
    }
    assert!(op.sigma_min() > 0.0);
}

#[test]
fn operator_matches_direct_solve() {
    let g = grid1(15);
    let tg = TimeGrid::new(0.02, 40).unwrap();
    let c = multiplicative().with_a1_const([0.5, 0.0]);
    let path = sample_brownian(4, 2, &tg);
    let op = build_path_operator(g.clone(), tg.clone(), &c, &path, 20).unwrap();
    assert!(op.sigma_min() > 0.0);
    let y0: Vec<f64> = (0..15).map(|i| standard_normal(5, 0, i)).collect();
    let s = SpdeSolver::new(g, tg, c).unwrap();
    let traj = s.solve_values(&y0, &path).unwrap();
    for (k, mapped) in [(20, op.apply_t0(&y0)), (40, op.apply_terminal(&y0))] {
        let scale = traj.slice(k).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for (a, b) in mapped.iter().zip(traj.slice(k)) {
            assert!((a - b).abs() <= 1e-10 * scale);
        }
    }
}

#[test]
fn operator_budget_is_enforced() {
    let g = grid1(MAX_DENSE_NODES + 1);
    let tg = TimeGrid::new(0.01, 2).unwrap();
    let r = build_path_operator(g, tg.clone(), &CoefficientSet::laplacian(), &BrownianPath::zero(&tg), 1);
    assert!(matches!(r, Err(Error::OperatorBudget { .. })));
}

fn short_heat_operator(c: &CoefficientSet, seed: u64) -> (Arc<SpatialGrid>, PathSolutionOperator) {
    let g = grid1(15);
    let tg = TimeGrid::new(0.02, 20).unwrap();
    let path = sample_brownian(seed, 0, &tg);
    let op = build_path_operator(g.clone(), tg, c, &path, 10).unwrap();
    (g, op)
}

#[test]
fn tikhonov_zero_observation() {
    let (_, op) = short_heat_operator(&CoefficientSet::laplacian(), 0);
    let obs = observe(&op, &vec![0.0; 15], 0.0, 1, 0);
    let rec = tikhonov_backward(&op, &obs, 1e-12).unwrap();
    assert!(rec.y_t0.iter().all(|v| v.abs() <= 1e-8));
    assert!(tikhonov_backward(&op, &obs, 0.0).is_err());
}

#[test]
fn tikhonov_noise_free_recovery_and_monotone_in_alpha() {
    for c in [CoefficientSet::laplacian(), multiplicative()] {
        let (g, op) = short_heat_operator(&c, 6);
        assert!(op.sigma_min() > 0.0);
        let y0 = g.sample_interior(|x| (PI * x[0]).sin());
        let truth = op.apply_t0(&y0);
        let obs = observe(&op, &y0, 0.0, 1, 0);
        let err = |alpha: f64| rel_l2(&g, &tikhonov_backward(&op, &obs, alpha).unwrap().y_t0, &truth);
        assert!(err(1e-10) <= 1e-4, "{}", err(1e-10));
        let errs: Vec<f64> = [1e-8, 1e-7, 1e-6].iter().map(|&a| err(a)).collect();
        assert!(errs.windows(2).all(|w| w[0] < w[1]), "{errs:?}");
    }
}

#[test]
fn holder_rate_of_tikhonov_reconstruction() {
    let deltas = [1e-1, 3e-2, 1e-2, 3e-3, 1e-3, 3e-4, 1e-4];
    for c in [CoefficientSet::laplacian(), multiplicative()] {
        let (g, op) = short_heat_operator(&c, 2);
        let theta = fitted_theta(&op, &deltas).unwrap().slope;
        assert!(theta > 0.0 && theta < 1.0);
        let y0 = g.sample_interior(|x| x[0] * (1.0 - x[0]));
        let rows = rate_experiment(&op, &y0, &deltas, 20, 7).unwrap();
        let pairs: Vec<(f64, f64)> = rows.iter().map(|r| (r.delta_noise, r.err_t0)).collect();
        let slope = fit_holder_rate(&pairs).unwrap().slope;
        assert!(slope > 0.0 && slope <= 1.0, "{slope}");
        assert!(slope >= 0.9 * theta, "slope {slope} theta {theta}");
        assert!(rows[0].slope_running.is_none() && rows[1].slope_running.is_some());
        let mut buf = Vec::new();
        write_rate_csv(&rows, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().next(), Some(RATE_CSV_HEADER));
    }
}
