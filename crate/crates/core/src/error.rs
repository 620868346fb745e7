use thiserror::Error;

/// Errors surfaced by the simulation library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// Caller supplied arguments that violate an operation's preconditions.
    #[error("invalid input: {0}")]
    Input(String),
    /// A transport endpoint failed or a peer disappeared mid-session.
    #[error("communication error: {0}")]
    Communication(String),
    /// A peer sent a message that does not fit the session state machine.
    #[error("session error: {0}")]
    Session(String),
    /// No parameter choice satisfies the requested target.
    #[error("infeasible: {0}")]
    Infeasible(String),
    /// The pattern is larger than the desk-scale simulator supports.
    #[error("pattern too large: {0}")]
    TooLarge(String),
}

pub type Result<T> = std::result::Result<T, Error>;

macro_rules! input_err {
    ($($arg:tt)*) => {
        $crate::error::Error::Input(format!($($arg)*))
    };
}
pub(crate) use input_err;
