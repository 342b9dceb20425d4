use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("port index {index} out of range 1..={max}")]
    PortOutOfRange { index: usize, max: usize },

    #[error(
        "resolvent is singular or badly conditioned at omega = {omega} (condition estimate {condition:.3e}); \
         nudge the frequency or use the ribbon regularizer"
    )]
    Pole { omega: f64, condition: f64 },

    #[error("phase {phi} is a multiple of pi (sin phi = 0)")]
    SingularPhase { phi: f64 },

    #[error("omega equals the atomic resonance; the per-atom transfer matrix is singular")]
    ResonanceSingularity,

    #[error("ribbon momentum denominator {denominator:.3e} is smaller than epsilon/10 for mode {mode}")]
    NearSingularMomentum { mode: usize, denominator: f64 },

    #[error("transfer-matrix network is singular at omega = {omega}")]
    SingularNetwork { omega: f64 },

    #[error("spectral reconstruction unreliable: flagged states carry weight {weight:.3e}")]
    ReconstructionUnreliable { weight: f64 },

    #[error("linear algebra failure: {0}")]
    Linalg(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}

impl From<ndarray_linalg::error::LinalgError> for Error {
    fn from(e: ndarray_linalg::error::LinalgError) -> Self {
        Error::Linalg(e.to_string())
    }
}
