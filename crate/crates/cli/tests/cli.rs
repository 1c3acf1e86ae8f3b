use std::path::Path;
use std::process::{Command, Output};

use spde_lab_cli::config::{defaults_for, parse_config, ConfigError, EXPERIMENTS};
use spde_lab_cli::presets::{lookup, PRESETS};
use spde_lab_cli::report::{Cell, REPORT_FILE};
use spde_lab_cli::run;

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spde-lab")).args(args).output().unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

#[test]
fn empty_config_is_missing_experiment() {
    assert!(matches!(parse_config(""), Err(ConfigError::MissingExperiment)));
    let d = tempfile::tempdir().unwrap();
    let out = bin(&["validate", &write(d.path(), "e.toml", "")]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing experiment"));
}

#[test]
fn unknown_key_reports_its_line() {
    let err = parse_config("experiment = \"toy-carleman\"\n\n[grid]\nnx = 3\n").unwrap_err();
    let msg = err.to_string();
    assert!(msg.contains("line 4") && msg.contains("nx"), "{msg}");
    assert!(matches!(parse_config("experiment = \"nope\""), Err(ConfigError::UnknownExperiment(_))));
}

#[test]
fn defaults_echo_round_trips() {
    for (name, _) in EXPERIMENTS {
        let cfg = defaults_for(name).unwrap();
        assert_eq!(parse_config(&cfg.echo()).unwrap(), cfg, "{name}");
    }
    let cfg = defaults_for("toy-carleman").unwrap();
    assert_eq!((cfg.seed, cfg.grid.n, cfg.time.steps, cfg.toy.cases), (1, 15, 1000, 100));
}

#[test]
fn ordering_violations_are_config_errors() {
    let e = parse_config("experiment = \"backward-rate\"\n[backward]\nt1 = 0.02\n").unwrap_err();
    assert!(e.to_string().contains("backward ordering"), "{e}");
    let e = parse_config("experiment = \"inverse-source-gram\"\n[source]\nt1 = 0.6\n").unwrap_err();
    assert!(e.to_string().contains("source ordering"), "{e}");
    let e = parse_config("experiment = \"carleman-sweep\"\n[weight]\ns = [2.0, 1.0]\n").unwrap_err();
    assert!(matches!(e, ConfigError::Invalid(_)));
    let e = parse_config("experiment = \"heat\"\npresets = [\"lava\"]\n").unwrap_err();
    assert!(matches!(e, ConfigError::UnknownExperiment(_)));
    let e = parse_config("experiment = \"toy-carleman\"\npresets = [\"lava\"]\n").unwrap_err();
    assert!(e.to_string().contains("lava"), "{e}");
}

#[test]
fn presets_resolve() {
    for (name, _) in PRESETS {
        assert!(lookup(name).is_some(), "{name}");
    }
    assert!(lookup("lava").is_none());
}

#[test]
fn list_experiments_prints_all_names() {
    let out = bin(&["list-experiments"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().count(), EXPERIMENTS.len());
}

#[test]
fn toy_default_passes_quickly_through_the_binary() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write(d.path(), "toy.toml", "experiment = \"toy-carleman\"\n");
    let out_dir = d.path().join("out");
    let out = bin(&["run", &cfg, "--out", out_dir.to_str().unwrap(), "--seed", "3"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let report = std::fs::read_to_string(out_dir.join(REPORT_FILE)).unwrap();
    assert!(report.contains("status = PASS") && report.contains("seed = 3"));
    let secs: f64 = report.lines().find_map(|l| l.strip_prefix("wall_clock_s = ")).unwrap().parse().unwrap();
    assert!(secs < 1.0, "{secs}");
    assert!(out_dir.join("toy_cases.csv").exists() && out_dir.join("plots.gp").exists());
}

#[test]
fn verdict_failure_exits_one() {
    // an exploratory weight below sup|a| breaks the toy bound for some drift
    let d = tempfile::tempdir().unwrap();
    let cfg = write(d.path(), "t.toml", "experiment = \"toy-carleman\"\n[toy]\nvarsigma_factor = 0.1\n");
    let out = bin(&["run", &cfg, "--out", d.path().join("o").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1), "{}", String::from_utf8_lossy(&out.stdout));
}

#[test]
fn sweep_default_table_shape() {
    let r = run(&defaults_for("carleman-sweep").unwrap(), 0);
    assert!(r.passed(), "{}", r.to_text());
    let t = r.tables.iter().find(|t| t.name == "sweep_heat").unwrap();
    assert_eq!(t.rows.len(), 6);
    assert!(t.rows.iter().flatten().all(|c| matches!(c, Cell::Num(v) if v.is_finite())));
}

#[test]
fn csv_bytes_do_not_depend_on_worker_count() {
    let mut cfg = defaults_for("energy-bound").unwrap();
    cfg.presets = vec!["multiplicative".into(), "additive".into()];
    let a = run(&cfg, 1);
    let b = run(&cfg, 3);
    assert!(!a.tables.is_empty());
    for (x, y) in a.tables.iter().zip(&b.tables) {
        assert_eq!(x.to_csv(), y.to_csv(), "{}", x.name);
    }
}
