use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument violated an operation's precondition.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("fit error: {0}")]
    Fit(String),

    /// The success curve has no local maximum; the noise overwhelms the search.
    #[error("no local maximum in the success curve")]
    NoMaximum,

    #[error("threshold out of range: P_S does not cross {p_th} for epsilon in [{lo:e}, {hi:e}]")]
    ThresholdOutOfRange { p_th: f64, lo: f64, hi: f64 },

    #[error("fault-tolerant preparation failed after {attempts} attempts")]
    PreparationFailed { attempts: usize },

    #[error("decode failure: corrected word {0:07b} is not a codeword")]
    DecodeFailure(u8),

    #[error("internal error: {0}")]
    Internal(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
