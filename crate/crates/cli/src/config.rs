//! Experiment configuration: sectioned `key = value` text (TOML syntax).
//!
//! User text is checked against an all-optional schema, so typos and type
//! errors are reported with their position. The accepted keys are then laid
//! over the base default table and the per-experiment defaults; the merged
//! table is the resolved configuration and its echo.

use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::presets;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("missing experiment")]
    MissingExperiment,
    #[error("{0}")]
    Parse(String),
    #[error("unknown experiment `{0}` (see list-experiments)")]
    UnknownExperiment(String),
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

pub const EXPERIMENTS: [(&str, &str); 10] = [
    ("toy-carleman", "weighted bound e^{-2 s T} x(T)^2 <= x(0)^2 for scalar linear ODEs"),
    ("ito-check", "discrete Ito identity along Euler-Maruyama paths"),
    ("forward-convergence", "heat benchmark orders and the mean-field property"),
    ("energy-bound", "energy ratio stability across ensembles and grids"),
    ("identity-check", "integrated weighted identity ledger and residual"),
    ("carleman-sweep", "Carleman functionals over s and lambda"),
    ("interpolation", "backward interpolation ratio over random initial data"),
    ("backward-rate", "Tikhonov reconstruction of y(t0) from y(T) and its Hoelder rate"),
    ("inverse-source-gram", "source-to-flux map: linearity, Gram witness, lower-bound probes"),
    ("transform-residuals", "z/u/w transform chain residuals and the Volterra identity"),
];

/// Defaults shared by every experiment.
pub const BASE_DEFAULTS: &str = r#"seed = 1
presets = ["heat"]

[grid]
n = 15
n2 = 0
length = 1.0
length2 = 1.0

[time]
horizon = 1.0
steps = 100

[ensemble]
paths = 100

[weight]
s = [1.0]
lambda = [1.0]
psi = "increasing"
delta = 0.0

[toy]
cases = 100
varsigma_factor = 1.0

[backward]
t0 = 0.5
t1 = 0.25
t2 = 0.4
theta = 0.5
samples = 50
noise = [1e-1, 3e-2, 1e-2, 3e-3, 1e-3, 3e-4, 1e-4]
draws = 20
alpha_free = 1e-10
lambda3 = 1.0
c_abs = 2.0

[source]
t0 = 0.5
epsilon = 0.25
t1 = 0.3
t2 = 0.45
basis = 4
r_slope = 0.5
observe = "all"

[output]
dir = "out"
"#;

/// Per-experiment overrides of [`BASE_DEFAULTS`].
pub fn experiment_defaults(name: &str) -> Option<&'static str> {
    Some(match name {
        "toy-carleman" => "[time]\nhorizon = 1.0\nsteps = 1000\n",
        "ito-check" => "[time]\nhorizon = 1.0\nsteps = 200\n",
        "forward-convergence" => {
            "presets = [\"additive\", \"multiplicative\"]\n[time]\nhorizon = 0.2\nsteps = 40\n[ensemble]\npaths = 10000\n"
        }
        "energy-bound" => "presets = [\"multiplicative\"]\n[time]\nsteps = 64\n",
        "identity-check" => "[grid]\nn = 129\n[time]\nsteps = 512\n[ensemble]\npaths = 10000\n",
        "carleman-sweep" => {
            "presets = [\"heat\", \"multiplicative\"]\n[grid]\nn = 65\n[time]\nhorizon = 0.5\nsteps = 256\n[ensemble]\npaths = 2000\n[weight]\ns = [1.0, 2.0, 4.0]\nlambda = [1.0, 2.0]\n"
        }
        "interpolation" => "presets = [\"heat\", \"multiplicative\"]\n[time]\nsteps = 50\n[ensemble]\npaths = 20\n",
        "backward-rate" => {
            "presets = [\"heat\", \"multiplicative\"]\n[time]\nhorizon = 0.02\nsteps = 20\n[backward]\nt0 = 0.01\nt1 = 0.0025\nt2 = 0.005\n"
        }
        "inverse-source-gram" => "presets = [\"source-1d\"]\n[time]\nhorizon = 0.5\nsteps = 64\n",
        "transform-residuals" => "presets = [\"source-1d\"]\n[time]\nhorizon = 0.5\n",
        _ => return None,
    })
}

macro_rules! section {
    ($name:ident, $partial:ident { $($field:ident : $ty:ty),* $(,)? }) => {
        #[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
        #[serde(deny_unknown_fields)]
        pub struct $name {
            $(pub $field: $ty),*
        }

        #[derive(Debug, Default, Serialize, Deserialize)]
        #[serde(deny_unknown_fields)]
        struct $partial {
            $(#[serde(skip_serializing_if = "Option::is_none")] $field: Option<$ty>),*
        }
    };
}

section!(GridSection, GridPartial { n: usize, n2: usize, length: f64, length2: f64 });
section!(TimeSection, TimePartial { horizon: f64, steps: usize });
section!(EnsembleSection, EnsemblePartial { paths: usize });
section!(WeightSection, WeightPartial { s: Vec<f64>, lambda: Vec<f64>, psi: String, delta: f64 });
section!(ToySection, ToyPartial { cases: usize, varsigma_factor: f64 });
section!(BackwardSection, BackwardPartial {
    t0: f64,
    t1: f64,
    t2: f64,
    theta: f64,
    samples: usize,
    noise: Vec<f64>,
    draws: u64,
    alpha_free: f64,
    lambda3: f64,
    c_abs: f64,
});
section!(SourceSection, SourcePartial {
    t0: f64,
    epsilon: f64,
    t1: f64,
    t2: f64,
    basis: usize,
    r_slope: f64,
    observe: String,
});
section!(OutputSection, OutputPartial { dir: String });

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Partial {
    #[serde(skip_serializing_if = "Option::is_none")]
    experiment: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    presets: Option<Vec<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    grid: Option<GridPartial>,
    #[serde(skip_serializing_if = "Option::is_none")]
    time: Option<TimePartial>,
    #[serde(skip_serializing_if = "Option::is_none")]
    ensemble: Option<EnsemblePartial>,
    #[serde(skip_serializing_if = "Option::is_none")]
    weight: Option<WeightPartial>,
    #[serde(skip_serializing_if = "Option::is_none")]
    toy: Option<ToyPartial>,
    #[serde(skip_serializing_if = "Option::is_none")]
    backward: Option<BackwardPartial>,
    #[serde(skip_serializing_if = "Option::is_none")]
    source: Option<SourcePartial>,
    #[serde(skip_serializing_if = "Option::is_none")]
    output: Option<OutputPartial>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: String,
    pub seed: u64,
    pub presets: Vec<String>,
    pub grid: GridSection,
    pub time: TimeSection,
    pub ensemble: EnsembleSection,
    pub weight: WeightSection,
    pub toy: ToySection,
    pub backward: BackwardSection,
    pub source: SourceSection,
    pub output: OutputSection,
}

fn merge(base: &mut Table, over: Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(Value::Table(b)), Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

fn table(text: &str) -> Table {
    text.parse().expect("built-in default table is valid")
}

/// Resolved defaults for `experiment` with no user overrides.
pub fn defaults_for(experiment: &str) -> Result<ExperimentConfig, ConfigError> {
    parse_config(&format!("experiment = \"{experiment}\"\n"))
}

pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let partial: Partial = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string().trim_end().to_string()))?;
    let name = partial.experiment.clone().ok_or(ConfigError::MissingExperiment)?;
    let overrides = experiment_defaults(&name).ok_or_else(|| ConfigError::UnknownExperiment(name.clone()))?;
    let mut merged = table(BASE_DEFAULTS);
    merge(&mut merged, table(overrides));
    let user = Table::try_from(&partial).map_err(|e| ConfigError::Parse(e.to_string()))?;
    merge(&mut merged, user);
    let cfg: ExperimentConfig = merged.try_into().map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

fn ascending(v: &[f64]) -> bool {
    !v.is_empty() && v.windows(2).all(|p| p[0] < p[1])
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if self.presets.is_empty() {
            return bad("presets must name at least one coefficient preset".into());
        }
        for p in &self.presets {
            if presets::lookup(p).is_none() {
                return bad(format!("unknown preset `{p}` (table {})", presets::PRESET_TABLE));
            }
        }
        let g = &self.grid;
        if g.n < 1 || !(g.length > 0.0 && g.length.is_finite()) || !(g.length2 > 0.0 && g.length2.is_finite()) {
            return bad("grid needs n >= 1 and positive finite lengths".into());
        }
        let t = &self.time;
        if !(t.horizon > 0.0 && t.horizon.is_finite()) || t.steps == 0 {
            return bad("time needs a positive horizon and steps >= 1".into());
        }
        if self.ensemble.paths == 0 {
            return bad("ensemble.paths must be at least 1".into());
        }
        let w = &self.weight;
        if !ascending(&w.s) || !ascending(&w.lambda) {
            return bad("weight.s and weight.lambda must be nonempty and strictly ascending".into());
        }
        if w.s.iter().chain(&w.lambda).any(|v| !(*v >= 0.0 && v.is_finite())) {
            return bad("weight.s and weight.lambda must be finite and nonnegative".into());
        }
        if w.psi != "increasing" && w.psi != "decreasing" {
            return bad(format!("weight.psi must be `increasing` or `decreasing`, got `{}`", w.psi));
        }
        if !(0.0 <= w.delta && w.delta < t.horizon) {
            return bad(format!("weight.delta must satisfy 0 <= delta < T (delta={}, T={})", w.delta, t.horizon));
        }
        if self.toy.cases == 0 || !(self.toy.varsigma_factor > 0.0) {
            return bad("toy.cases >= 1 and toy.varsigma_factor > 0 required".into());
        }
        let b = &self.backward;
        match self.experiment.as_str() {
            "backward-rate" => {
                if !(0.0 < b.t1 && b.t1 < b.t2 && b.t2 < b.t0 && b.t0 <= t.horizon) {
                    return bad(format!(
                        "backward ordering 0 < t1 < t2 < t0 <= T violated (t1={}, t2={}, t0={}, T={})",
                        b.t1, b.t2, b.t0, t.horizon
                    ));
                }
                if b.noise.len() < 4 || b.noise.iter().any(|d| !(*d > 0.0)) || b.draws == 0 || !(b.alpha_free > 0.0) {
                    return bad("backward needs >= 4 positive noise levels, draws >= 1 and alpha_free > 0".into());
                }
                if !(b.lambda3 > 0.0 && b.c_abs > 0.0) {
                    return bad("backward.lambda3 and backward.c_abs must be positive".into());
                }
            }
            "interpolation" => {
                if !(0.0 < b.t0 && b.t0 <= t.horizon) {
                    return bad(format!("interpolation ordering 0 < t0 <= T violated (t0={}, T={})", b.t0, t.horizon));
                }
                if !(0.0 < b.theta && b.theta < 1.0) || b.samples < 2 {
                    return bad("backward.theta must lie in (0, 1) and samples >= 2".into());
                }
            }
            "inverse-source-gram" | "transform-residuals" => {
                let s = &self.source;
                if !(0.0 < s.t0 - s.epsilon && s.t0 - s.epsilon < s.t1 && s.t1 < s.t2 && s.t2 < s.t0 && s.t0 <= t.horizon) {
                    return bad(format!(
                        "source ordering 0 < t0 - epsilon < t1 < t2 < t0 <= T violated (t0={}, epsilon={}, t1={}, t2={}, T={})",
                        s.t0, s.epsilon, s.t1, s.t2, t.horizon
                    ));
                }
                if s.basis == 0 || s.observe != "all" && s.observe != "low" {
                    return bad("source.basis >= 1 and source.observe in {all, low} required".into());
                }
                if self.grid.n < 3 {
                    return bad("flux stencils need grid.n >= 3".into());
                }
            }
            _ => {}
        }
        Ok(())
    }

    /// Resolved configuration as `key = value` text.
    pub fn echo(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    pub fn is_2d(&self) -> bool {
        self.grid.n2 > 0
    }
}
