use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("non-consecutive instance: stats at t={current}, samples for t={found}")]
    NonConsecutiveTime { current: usize, found: usize },

    /// `G_kk + c_k` dropped below the configured floor for element `index`.
    #[error("diagonal floor violated at element {index}: G_kk + c_k = {value:e} < {floor:e}")]
    DiagonalFloor { index: usize, value: f64, floor: f64 },

    #[error("weighted regularization requires an RLS estimate")]
    MissingRlsEstimate,

    #[error("invariant violated at t={t}: {detail}")]
    InvariantViolation { t: usize, detail: String },

    #[error("nodes disagree after round t={t}: max deviation {deviation:e}")]
    NodeDisagreement { t: usize, deviation: f64 },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("unknown preset `{0}`")]
    UnknownPreset(String),

    #[error("malformed snapshot: {0}")]
    Snapshot(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Toml(#[from] toml::de::Error),
}
