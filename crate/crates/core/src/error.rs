use thiserror::Error;

/// Errors raised anywhere in the reconstruction pipeline.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A value violated one of its type invariants.
    #[error("invalid {what}: {reason}")]
    Validation { what: &'static str, reason: String },

    /// A function was evaluated outside its mathematical domain.
    #[error("domain error in {function}: {reason}")]
    Domain {
        function: &'static str,
        reason: String,
    },

    /// The detected moments admit no non-negative field decomposition.
    #[error("infeasible moments (efficiency margin {margin:.6e}): {reason}")]
    Infeasible { margin: f64, reason: String },

    /// A numerical procedure could not reach the accuracy it promises.
    #[error("numerical failure in {context}: {reason}")]
    Numerical {
        context: &'static str,
        reason: String,
    },
}

impl Error {
    pub(crate) fn validation(what: &'static str, reason: impl Into<String>) -> Self {
        Error::Validation {
            what,
            reason: reason.into(),
        }
    }

    pub(crate) fn domain(function: &'static str, reason: impl Into<String>) -> Self {
        Error::Domain {
            function,
            reason: reason.into(),
        }
    }

    pub(crate) fn numerical(context: &'static str, reason: impl Into<String>) -> Self {
        Error::Numerical {
            context,
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
