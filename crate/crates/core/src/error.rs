use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("bitstring length must be at least 1")]
    EmptyBitstring,
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("mutation parameter c = {c} outside [0, {n}]")]
    MutationRate { c: f64, n: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("no sign change on [{lo}, {hi}]: drift {f_lo} at lo, {f_hi} at hi")]
    NoSignChange {
        lo: f64,
        hi: f64,
        f_lo: f64,
        f_hi: f64,
    },
    #[error("linear solve for state value r = {r} diverged (denominator {denominator})")]
    Divergent { r: usize, denominator: f64 },
    #[error("generation cap overflows a 64-bit counter: {0}")]
    Overflow(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
