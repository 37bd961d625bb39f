use thiserror::Error;

/// Crate-wide error type.
///
/// Variants split into two families the CLI maps to exit codes:
/// configuration/parse problems (exit 1) and numerical failures (exit 2).
#[derive(Debug, Error)]
pub enum Error {
    #[error("grid alignment: {name} = {value} is not an integer (tolerance {tol:e})")]
    Misaligned { name: &'static str, value: f64, tol: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("time {t} outside the path domain [{lo}, {hi}]")]
    TimeOutOfRange { t: f64, lo: f64, hi: f64 },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("model file: {0}")]
    ModelFile(String),

    #[error("expression: {0}")]
    Expr(String),

    #[error("csv: {0}")]
    Csv(String),

    #[error("coefficient returned a non-finite value at t={t}, x={x:?}, y={y:?}")]
    NonFiniteCoefficient { t: f64, x: Vec<f64>, y: Vec<f64> },

    #[error("state blew up at step {step} (t={t}): |x| = {norm:e}")]
    BlowUp { step: usize, t: f64, norm: f64 },

    #[error("fixed-point sweep diverged on [{t_lo}, {t_hi}]: update grew for 3 consecutive sweeps")]
    PicardDiverged { t_lo: f64, t_hi: f64 },

    #[error("truncation level n = {n} is active at convergence (path reaches {reached}); increase n")]
    TruncationActive { n: f64, reached: f64 },

    #[error("non-finite objective value during optimization")]
    NonFiniteObjective,

    #[error("decay-rate fit needs at least 3 usable rows, got {0}")]
    FitUnderdetermined(usize),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// True for failures of the numerics (as opposed to bad inputs).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NonFiniteCoefficient { .. }
                | Error::BlowUp { .. }
                | Error::PicardDiverged { .. }
                | Error::TruncationActive { .. }
                | Error::NonFiniteObjective
                | Error::FitUnderdetermined(_)
        )
    }
}
