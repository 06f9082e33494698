use thiserror::Error;

/// Errors raised by the forward model, synthesis, estimation and ensemble layers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error in {op}: {detail}")]
    Domain { op: &'static str, detail: String },

    #[error("invalid detector layout: {0}")]
    Layout(String),

    #[error("measurement set is already noisy; noise must be applied to an exact set")]
    AlreadyNoisy,

    #[error("unknown minimizer `{name}` (registered: {available})")]
    UnknownMinimizer { name: String, available: String },

    #[error("unlocalizable: only {converged} converged fits, at least {required} required")]
    Unlocalizable { converged: usize, required: usize },

    #[error("insufficient data for band fit: {0}")]
    InsufficientData(String),
}

impl Error {
    pub(crate) fn domain(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Domain {
            op,
            detail: detail.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
