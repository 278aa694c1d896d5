use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not positive definite (pivot {pivot:.3e} at index {index}, floor {floor:.3e})")]
    NotPositiveDefinite { index: usize, pivot: f64, floor: f64 },

    #[error("matrix is not Hermitian (max asymmetry {asymmetry:.3e})")]
    NotHermitian { asymmetry: f64 },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid QAM order {0}: must be a perfect square >= 4")]
    InvalidOrder(usize),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("channel gain vector is zero")]
    ZeroGain,

    #[error("correlation magnitude {0} too close to 1 for a stable inverse")]
    NearSingular(f64),

    #[error("noise covariance estimate is rank deficient")]
    RankDeficient,

    #[error("degenerate observation block: {0}")]
    DegenerateBlock(String),

    #[error("total posterior second moment is not positive")]
    ZeroPosteriorMass,

    #[error("all symbol estimates are zero; calibration undefined")]
    ZeroEstimate,

    #[error("malformed input{}: {msg}", line.map(|l| format!(" at line {l}")).unwrap_or_default())]
    MalformedInput { line: Option<usize>, msg: String },

    #[error("unknown estimator `{0}`")]
    UnknownEstimator(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn malformed(line: Option<usize>, msg: impl Into<String>) -> Self {
        Error::MalformedInput { line, msg: msg.into() }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// Process exit status used by the CLI: 2 for bad data, 3 for numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::NotPositiveDefinite { .. }
            | Error::NotHermitian { .. }
            | Error::ZeroGain
            | Error::NearSingular(_)
            | Error::RankDeficient
            | Error::DegenerateBlock(_)
            | Error::ZeroPosteriorMass
            | Error::ZeroEstimate => 3,
            Error::DimensionMismatch(_)
            | Error::InvalidOrder(_)
            | Error::InvalidParameter(_)
            | Error::MalformedInput { .. }
            | Error::UnknownEstimator(_)
            | Error::Io { .. } => 2,
        }
    }
}
