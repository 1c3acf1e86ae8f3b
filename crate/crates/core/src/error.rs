use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("exp overflow evaluating weight at s={s}, lambda={lambda}, t={t}: s*phi={s_phi:.3e}")]
    WeightOverflow {
        s: f64,
        lambda: f64,
        t: f64,
        s_phi: f64,
    },

    #[error("ellipticity violated at {count} (t, x, xi) probes, worst margin {worst_margin:.3e}")]
    NotElliptic { count: usize, worst_margin: f64 },

    #[error("explicit terms exceed stability budget: {0}")]
    StabilityBudget(String),

    #[error("linear solve failed: {0}")]
    LinearSolve(String),

    #[error("empty ensemble")]
    EmptyEnsemble,

    #[error("dense operator budget exceeded: {nodes} interior nodes (max {max})")]
    OperatorBudget { nodes: usize, max: usize },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("modulator R has |R| = {value:.3e} below floor {floor:.3e} at t={t}, x=({x1}, {x2})")]
    ModulatorFloor {
        value: f64,
        floor: f64,
        t: f64,
        x1: f64,
        x2: f64,
    },

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}
