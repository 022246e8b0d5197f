use alloc::string::String;
use core::fmt;

pub type Result<T, E = Error> = core::result::Result<T, E>;

/// Errors raised by the core algorithms. Every variant carries enough
/// context to name the offending value.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A caller-supplied parameter violates its precondition.
    InvalidArgument { name: &'static str, reason: String },
    /// A tag string could not be split into delimited runs.
    UnbalancedTag { fragment: String },
    /// A tag surface normalizes to no words.
    EmptyTag { surface: String },
    /// Two graphs being merged were built from different sources.
    GraphMismatch,
    /// A knowledge base has no entries.
    EmptyKnowledgeBase,
    /// Two knowledge entries share a normalized key.
    DuplicateKnowledgeKey { key: String },
    /// A knowledge entry violates its field invariants.
    InvalidKnowledgeEntry { reason: String },
    /// A gold token is missing from the model vocabulary.
    UnknownToken { token: String },
    /// A computation needs a non-empty input.
    Empty { what: &'static str },
    /// Two parallel inputs differ in length.
    LengthMismatch { left: usize, right: usize },
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidArgument {
            name,
            reason: reason.into(),
        }
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidArgument { name, reason } => write!(f, "invalid {name}: {reason}"),
            Error::UnbalancedTag { fragment } => write!(f, "unbalanced tag delimiters near {fragment:?}"),
            Error::EmptyTag { surface } => write!(f, "tag {surface:?} normalizes to no words"),
            Error::GraphMismatch => f.write_str("graphs were built from different sources"),
            Error::EmptyKnowledgeBase => f.write_str("knowledge base has no valid entries"),
            Error::DuplicateKnowledgeKey { key } => write!(f, "duplicate knowledge key {key:?}"),
            Error::InvalidKnowledgeEntry { reason } => write!(f, "invalid knowledge entry: {reason}"),
            Error::UnknownToken { token } => write!(f, "token {token:?} is not in the vocabulary"),
            Error::Empty { what } => write!(f, "{what} is empty"),
            Error::LengthMismatch { left, right } => write!(f, "length mismatch: {left} vs {right}"),
        }
    }
}

impl core::error::Error for Error {}
