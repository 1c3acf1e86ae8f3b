//! One PASS/FAIL line per acceptance criterion. Runs without the libtest
//! harness so the lines always reach stdout; exits non-zero on any failure.

use std::f64::consts::PI;
use std::sync::Arc;
use std::time::{Duration, Instant};

use spde_lab::fit::convergence_order;
use spde_lab::sde::sample_brownian;
use spde_lab::spde::weak_residual;
use spde_lab::{BrownianPath, CoefficientSet, ScalarField, SpatialGrid, SpdeSolver, TimeGrid};
use spde_lab_cli::config::defaults_for;
use spde_lab_cli::report::{RunReport, Table, Verdict};
use spde_lab_cli::run;

type Criterion = (&'static str, fn() -> Check);

const TOTAL_BUDGET: Duration = Duration::from_secs(15 * 60);

struct Check {
    pass: bool,
    detail: String,
}

fn experiment(name: &str, budget: Option<Duration>) -> Check {
    let r = run(&defaults_for(name).expect("defaults are valid"), 0);
    let failed: Vec<&str> = r.verdicts.iter().filter(|v| !v.pass).map(|v| v.name.as_str()).collect();
    let in_time = budget.is_none_or(|b| r.wall_clock_s < b.as_secs_f64());
    let mut detail = format!("{name}: {} verdicts, {:.2} s", r.verdicts.len(), r.wall_clock_s);
    if let Some(b) = budget {
        detail.push_str(&format!(" (budget {} s)", b.as_secs()));
    }
    if let Some(e) = &r.error {
        detail.push_str(&format!("; error: {e}"));
    }
    if !failed.is_empty() {
        detail.push_str(&format!("; failed: {}", failed.join(" | ")));
    }
    Check {
        pass: r.passed() && in_time && !r.verdicts.is_empty(),
        detail,
    }
}

fn both(a: Check, b: Check) -> Check {
    Check {
        pass: a.pass && b.pass,
        detail: format!("{}; {}", a.detail, b.detail),
    }
}

/// Max weak residual over time on three levels sharing one fine path, with
/// `dt` proportional to `h^2`.
fn weak_residuals(c: &CoefficientSet, seed: Option<u64>) -> (Vec<f64>, Vec<f64>) {
    let (t, levels) = (0.25, [7usize, 15, 31]);
    let fine_steps = (t * 32f64.powi(2)).round() as usize;
    let fine_tg = TimeGrid::new(t, fine_steps).unwrap();
    let fine = seed.map_or_else(|| BrownianPath::zero(&fine_tg), |s| sample_brownian(s, 0, &fine_tg));
    let (mut dts, mut res) = (Vec::new(), Vec::new());
    for n in levels {
        let factor = (32 / (n + 1)).pow(2);
        let tg = TimeGrid::new(t, fine_steps / factor).unwrap();
        let g = Arc::new(SpatialGrid::new_1d(1.0, n).unwrap());
        let s = SpdeSolver::new(g.clone(), tg.clone(), c.clone()).unwrap();
        let y0 = ScalarField::from_fn(g.clone(), |x| (PI * x[0]).sin()).unwrap();
        let traj = s.solve_forward(&y0, &fine.coarsen(factor).unwrap()).unwrap();
        let p = g.sample_full(|x| (PI * x[0]).sin() * (1.0 + x[0]));
        dts.push(tg.dt());
        res.push((0..=tg.steps()).map(|k| weak_residual(&traj, c, &p, k).unwrap()).fold(0.0, f64::max));
    }
    (dts, res)
}

fn weak_solution() -> Check {
    let start = Instant::now();
    let det = CoefficientSet::laplacian().with_a1_const([0.5, 0.0]).with_a2_const(0.4).with_f(|t, x| t * x[0]);
    let (dts, res) = weak_residuals(&det, None);
    let det_order = convergence_order(&dts, &res).unwrap();
    let det_ok = det_order >= 0.8 && res.windows(2).all(|w| w[1] < w[0]);
    let sto = CoefficientSet::laplacian()
        .with_a2_const(0.4)
        .with_a3(|_, x| 0.5 + 0.2 * x[0], 0.7, 0.2)
        .with_g(|_, x| x[0] * (1.0 - x[0]));
    let mut orders = Vec::new();
    let mut decreasing = true;
    for seed in [1, 2, 3] {
        let (dts, res) = weak_residuals(&sto, Some(seed));
        decreasing &= res[2] < res[0];
        orders.push(convergence_order(&dts, &res).unwrap());
    }
    let mean = orders.iter().sum::<f64>() / orders.len() as f64;
    let secs = start.elapsed().as_secs_f64();
    Check {
        pass: det_ok && decreasing && mean >= 0.4 && secs < 120.0,
        detail: format!(
            "deterministic order {det_order:.3} (>= 0.8), stochastic mean order {mean:.3} (>= 0.4) over seeds 1-3, {secs:.2} s"
        ),
    }
}

fn harness() -> Check {
    let mut cfg = defaults_for("carleman-sweep").unwrap();
    cfg.ensemble.paths = 400;
    let csv = |workers| run(&cfg, workers).tables.iter().map(Table::to_csv).collect::<Vec<_>>();
    let reference = csv(1);
    let identical = [2, 4, 0].iter().all(|&w| csv(w) == reference);

    let mut nan = Table::new("nan", &["x"]);
    nan.push(vec![f64::NAN.into()]);
    let nan_report = RunReport {
        tables: vec![nan],
        ..Default::default()
    };
    let breach = RunReport {
        verdicts: vec![Verdict::at_most("breach", 2.0, 1.0)],
        ..Default::default()
    };
    let nan_verdict = RunReport {
        verdicts: vec![Verdict::at_most("nan", f64::NAN, 1.0)],
        ..Default::default()
    };
    let closed = !nan_report.passed() && !breach.passed() && !nan_verdict.passed();
    Check {
        pass: identical && closed,
        detail: format!("CSV bytes identical for workers 1/2/4/all: {identical}; NaN and breach fail closed: {closed}"),
    }
}

fn main() {
    let start = Instant::now();
    let criteria: [Criterion; 10] = [
        ("toy Carleman bound", || experiment("toy-carleman", Some(Duration::from_secs(1)))),
        ("discrete Ito identity", || experiment("ito-check", Some(Duration::from_secs(5)))),
        ("forward solver convergence and mean field", || {
            experiment("forward-convergence", Some(Duration::from_secs(120)))
        }),
        ("weak-solution residual", weak_solution),
        ("energy bound stability", || experiment("energy-bound", None)),
        ("integrated weighted identity", || experiment("identity-check", None)),
        ("Carleman sweep", || experiment("carleman-sweep", None)),
        ("interpolation inequality", || experiment("interpolation", None)),
        ("backward reconstruction", || experiment("backward-rate", None)),
        ("inverse source", || both(experiment("inverse-source-gram", None), experiment("transform-residuals", None))),
    ];
    let mut all = true;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let c = f();
        all &= c.pass;
        println!("criterion {:>2} {} {name}: {}", i + 1, if c.pass { "PASS" } else { "FAIL" }, c.detail);
    }
    let mut h = harness();
    let total = start.elapsed();
    h.pass &= total < TOTAL_BUDGET;
    h.detail.push_str(&format!("; full acceptance runtime {:.1} s (budget {} s)", total.as_secs_f64(), TOTAL_BUDGET.as_secs()));
    all &= h.pass;
    println!("criterion 11 {} harness: {}", if h.pass { "PASS" } else { "FAIL" }, h.detail);
    if !all {
        std::process::exit(1);
    }
}
