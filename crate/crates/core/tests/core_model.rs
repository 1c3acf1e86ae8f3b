use std::f64::consts::PI;
use std::sync::Arc;

use proptest::prelude::*;
use spde_lab::coeffs::{check_ellipticity, compute_r1};
use spde_lab::fit::convergence_order;
use spde_lab::weight::eval_weight;
use spde_lab::*;

proptest! {
    #[test]
    fn weight_is_monotone(s in 0.01f64..5.0, lambda in 0.01f64..3.0, t1 in 0.0f64..1.0, dt in 0.0f64..1.0) {
        let t2 = t1 + dt * (1.0 - t1);
        let up = CarlemanWeight::new(Psi::increasing(), lambda, s).unwrap();
        let down = CarlemanWeight::new(Psi::decreasing(), lambda, s).unwrap();
        let (p1, th1) = eval_weight(&up, t1).unwrap();
        let (p2, th2) = eval_weight(&up, t2).unwrap();
        prop_assert!(p1 <= p2 && th1 <= th2 && th1 >= 1.0 && p1 >= 0.0);
        let (_, d1) = eval_weight(&down, t1).unwrap();
        let (_, d2) = eval_weight(&down, t2).unwrap();
        prop_assert!(d1 >= d2 && d2 >= 1.0);
    }

    #[test]
    fn r1_at_least_one_and_sign_blind(a1 in -3.0f64..3.0, a2 in -3.0f64..3.0, a3 in -3.0f64..3.0) {
        let c = CoefficientSet::laplacian().with_a1_const([a1, 0.0]).with_a2_const(a2).with_a3_const(a3);
        let m = CoefficientSet::laplacian().with_a1_const([-a1, 0.0]).with_a2_const(-a2).with_a3_const(-a3);
        prop_assert!(compute_r1(&c) >= 1.0);
        prop_assert_eq!(compute_r1(&c), compute_r1(&m));
        prop_assert!((compute_r1(&c) - (1.0 + a1 * a1 + a2 * a2 + a3 * a3)).abs() < 1e-12);
    }

    #[test]
    fn scaled_identity_is_elliptic_with_zero_margin(sigma in 0.1f64..10.0) {
        let g = SpatialGrid::new_2d(1.0, 4, 2.0, 3).unwrap();
        let tg = TimeGrid::new(1.0, 3).unwrap();
        let c = CoefficientSet::laplacian().with_b(move |_, _| [[sigma, 0.0], [0.0, sigma]], sigma, true);
        let r = check_ellipticity(&c, &g, &tg);
        prop_assert!(r.pass);
        prop_assert_eq!(r.min_margin, 0.0);
    }
}

#[test]
fn l2_norm_is_second_order() {
    let mut hs = Vec::new();
    let mut errs = Vec::new();
    for n in [15, 31, 63] {
        let g = Arc::new(SpatialGrid::new_1d(1.0, n).unwrap());
        let f = ScalarField::from_fn(g.clone(), |x| x[0] * (1.0 - x[0])).unwrap();
        hs.push(g.spacing(0));
        errs.push((f.l2_norm() - (1.0f64 / 30.0).sqrt()).abs());
    }
    let order = convergence_order(&hs, &errs).unwrap();
    assert!(order >= 1.8, "l2 order {order}");
}

#[test]
fn h1_seminorm_of_sine_converges() {
    let mut errs = Vec::new();
    for n in [31, 63, 127] {
        let g = Arc::new(SpatialGrid::new_1d(1.0, n).unwrap());
        let f = ScalarField::from_fn(g, |x| (PI * x[0]).sin()).unwrap();
        assert!((f.l2_norm() - 0.5f64.sqrt()).abs() < 1e-3);
        errs.push((f.h1_seminorm() - PI / 2f64.sqrt()).abs());
    }
    assert!(errs[2] < errs[1] && errs[1] < errs[0] && errs[2] < 1e-3);
}

#[test]
fn marked_times_snap_and_order() {
    let tg = TimeGrid::new(1.0, 20)
        .unwrap()
        .with_mark("t1", 0.26)
        .unwrap()
        .with_mark("t0", 0.5)
        .unwrap();
    assert_eq!(tg.mark("t1"), Some(5));
    assert_eq!(tg.mark("t0"), Some(10));
    assert_eq!(tg.marks()[0].0, "t1");
    assert!(tg.clone().with_mark("bad", 1.5).is_err());
}
