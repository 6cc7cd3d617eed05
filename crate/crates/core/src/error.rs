use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

/// Errors produced by the ranking engine.
///
/// `Input` errors mean the caller handed over data that violates a
/// precondition (bad scores, unknown ids, malformed records). `State`
/// errors mean the call is not valid for the current state of a sorter
/// or session (stale request ids, ranking before completion).
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A value violates a documented precondition.
    Input(String),
    /// Some referenced item ids do not exist or are missing a record.
    UnknownItems(Vec<String>),
    /// Item ids must be unique within a session.
    DuplicateItem(String),
    /// The operation is not valid in the current state.
    State(String),
    /// A judgment does not match the outstanding request.
    StaleRequest { expected: Option<u64>, got: u64 },
    /// Correlation is undefined for constant input.
    UndefinedCorrelation,
    /// Replaying an event log diverged from the recorded events.
    ReplayDivergence { seq: u64, detail: String },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Input(msg) => write!(f, "invalid input: {msg}"),
            Error::UnknownItems(ids) => write!(f, "unknown or missing item ids: {}", ids.join(", ")),
            Error::DuplicateItem(id) => write!(f, "duplicate item id: {id}"),
            Error::State(msg) => write!(f, "invalid state: {msg}"),
            Error::StaleRequest { expected: Some(e), got } => {
                write!(f, "request {got} is not pending (pending request is {e})")
            }
            Error::StaleRequest { expected: None, got } => {
                write!(f, "request {got} is not pending (no request outstanding)")
            }
            Error::UndefinedCorrelation => write!(f, "correlation is undefined for constant input"),
            Error::ReplayDivergence { seq, detail } => {
                write!(f, "event log replay diverged at seq {seq}: {detail}")
            }
        }
    }
}

impl core::error::Error for Error {}

pub type Result<T> = core::result::Result<T, Error>;

pub(crate) fn input<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Input(msg.into()))
}
