use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Point-level arithmetic was requested for a field other than Q_p.
    #[error("unsupported mode: {0} requires K = Q_p (e = f = 1)")]
    UnsupportedMode(&'static str),

    #[error("degenerate ball: radius exponent is +infinity")]
    DegenerateBall,

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("refinement depth {requested} is below the required depth {required}")]
    RefineDepth { requested: i64, required: i64 },

    #[error("covering is not verticial: {0}")]
    NotVerticial(String),

    #[error("eigen-solver did not converge (residual {residual:e})")]
    EigenNonConvergence { residual: f64 },

    #[error("pole {pole} of the Moebius transformation lies in the domain")]
    PoleInDomain { pole: String },

    #[error("parameter error: {0}")]
    Parameter(String),

    #[error("unsupported structure: {0}")]
    UnsupportedStructure(String),

    #[error("index {index} out of range 0..={max}")]
    IndexOutOfRange { index: usize, max: usize },

    #[error("numeric property failure: {0}")]
    PropertyFailure(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidInput(msg.into()))
}

impl Error {
    /// Process exit code: 2 for invalid input, 3 for numeric failures, 4 for
    /// unsupported modes or structures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::EigenNonConvergence { .. } | Error::PropertyFailure(_) => 3,
            Error::UnsupportedMode(_) | Error::UnsupportedStructure(_) => 4,
            _ => 2,
        }
    }
}
