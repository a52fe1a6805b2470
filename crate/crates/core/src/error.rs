use thiserror::Error;

/// Errors raised across the simulator.
#[derive(Debug, Error)]
pub enum Error {
    #[error("missing configuration key `{0}`")]
    MissingKey(String),
    #[error("{0}")]
    InvalidParameter(String),
    #[error("grid too coarse: dt*max_rate = {product:.4} (must be < 0.05)")]
    GridTooCoarse { product: f64 },
    #[error("pulse does not fit on grid: needs {needed_s:e} s, grid spans {available_s:e} s")]
    PulseTooLong { needed_s: f64, available_s: f64 },
    #[error("drive not vanishing at grid edge (|edge|/peak = {ratio:e}); aliasing risk")]
    EdgeNotVanishing { ratio: f64 },
    #[error("envelope length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("no weak port: kappa_w of chip 2 is zero")]
    NoWeakPort,
    #[error("denominator identically zero: pair not compensatable through chip-2 weak port")]
    DegenerateDenominator,
    #[error(
        "full parity matching requested: both pairs cannot be matched with two drives \
         (requires 2*chi = kappa on both chips)"
    )]
    FullParityUnsupported,
    #[error("invalid state pair: {0}")]
    InvalidPair(String),
    #[error("matrix is not Hermitian (max asymmetry {0:e})")]
    NotHermitian(f64),
    #[error("rank-deficient system (condition estimate {0:e})")]
    RankDeficient(f64),
    #[error("invalid density matrix: {0}")]
    InvalidState(String),
    #[error("integration unstable: {0}; reduce dt")]
    Unstable(String),
    #[error("classifier needs both classes in the training set")]
    SingleClass,
    #[error("{0}")]
    InvalidInput(String),
    #[error("config parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
