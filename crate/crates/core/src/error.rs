use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dimensions: {0}")]
    InvalidDimensions(String),

    #[error("message has {len} bits but L*J = {expected}")]
    InvalidLength { len: usize, expected: usize },

    #[error("codeword index {index} outside [1, {max}]")]
    IndexOutOfRange { index: usize, max: usize },

    #[error("cannot activate {active} users out of {total}")]
    TooManyActive { active: usize, total: usize },

    #[error("operation needs at least one active user")]
    NoActiveUsers,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("detector produced non-finite values at iteration {iteration}")]
    NonFinite {
        iteration: usize,
        /// Per-iteration `(u, v)` history up to the failure.
        trace: Vec<(f64, f64)>,
    },

    #[error(
        "fixed point needs (2^J/n0 - 1)*eps/(1 - eps) < 1, i.e. fewer active codewords than \
         sub-slot symbols (K_a < n0); got {value:.6}"
    )]
    FixedPointCondition { value: f64 },

    #[error("expansion requires alpha < 1 < beta, got alpha = {alpha}, beta = {beta}")]
    ExpansionDomain { alpha: f64, beta: f64 },

    #[error("threshold interval requires a < b, got a = {a}, b = {b}")]
    InvalidInterval { a: f64, b: f64 },

    #[error("codebook file: {0}")]
    CodebookFormat(String),

    #[error("config: {0}")]
    Config(String),

    #[error("unknown figure id {0:?}; valid ids: convergence, ka_sensitivity, snr_m, saturation, p1_theory, stitcher_compare")]
    UnknownFigure(String),

    #[error("trial {trial} (seed {seed}): {source}")]
    Trial {
        trial: usize,
        seed: u64,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
