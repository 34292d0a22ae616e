use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("ill-posed problem: {0}")]
    IllPosed(String),

    #[error("near-singular problem: {0}")]
    NearSingular(String),

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("no sign change on [{lo}, {hi}]: f(lo) = {f_lo}, f(hi) = {f_hi}")]
    NoSignChange { lo: f64, hi: f64, f_lo: f64, f_hi: f64 },

    #[error("no bracket found: {0}")]
    NoBracket(String),

    #[error("inadmissible correlation profile: {0}")]
    InadmissibleProfile(String),

    #[error("inadmissible clock: {0}")]
    InadmissibleClock(String),

    #[error("{value} is outside the domain [{lo}, {hi}]")]
    OutOfDomain { value: f64, lo: f64, hi: f64 },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("degenerate correlation window ending at index {index}: zero realized variance")]
    DegenerateWindow { index: usize },

    #[error("budget exceeded: {0}")]
    Budget(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
