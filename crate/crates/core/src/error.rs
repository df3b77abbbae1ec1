use thiserror::Error;

/// Errors raised anywhere in the audit pipeline.
#[derive(Debug, Error)]
pub enum AuditError {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("timestamps are not strictly increasing at row {row}")]
    NonMonotoneTime { row: usize },
    #[error("degenerate series: {0}")]
    DegenerateSeries(String),
    #[error("too few observations for {what}: need {needed}, have {have}")]
    LowSample {
        what: &'static str,
        needed: usize,
        have: usize,
    },
    #[error("series is constant")]
    ConstantSeries,
    #[error("target column {0} is constant")]
    DegenerateTarget(usize),
    #[error("too few points: need {needed}, have {have}")]
    TooFewPoints { needed: usize, have: usize },
    #[error("p-value {0} outside [0, 1]")]
    InvalidP(f64),
    #[error("singular design matrix in {0}")]
    SingularDesign(&'static str),
    #[error("missing feature {0}")]
    MissingFeature(String),
    #[error("invalid effective sample size: t_eff = {t_eff}, t = {t}")]
    InvalidTeff { t_eff: f64, t: f64 },
    #[error("insufficient labels: {0}")]
    InsufficientLabels(String),
    #[error("optimizer did not converge after {iterations} iterations (gradient norm {grad_norm:.3e})")]
    NonConvergence { iterations: usize, grad_norm: f64 },
    #[error("zero denominator in abstention threshold")]
    ZeroDenominator,
    #[error("method catalog is empty")]
    EmptyCatalog,
    #[error("all drawn VAR matrices were zero after {0} attempts")]
    DegenerateDraw(usize),
    #[error("simulation produced non-finite values after {0} attempts")]
    UnstableSimulation(usize),
    #[error("graph universes differ: {0}")]
    UniverseMismatch(String),
    #[error("predictions contain a single class")]
    SingleClass,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Yaml(#[from] serde_yaml::Error),
}

pub type Result<T> = std::result::Result<T, AuditError>;
