use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("mdp: index out of range: {0}")]
    Index(String),

    #[error("mdp: state {0} is terminal")]
    TerminalState(usize),

    #[error("{module}: invalid parameter: {msg}")]
    Param { module: &'static str, msg: String },

    #[error("{module}: non-finite value: {msg}")]
    Numeric { module: &'static str, msg: String },

    #[error("async_train: shape mismatch: {0}")]
    Shape(String),

    #[error("{module}: invalid input: {msg}")]
    Input { module: &'static str, msg: String },

    #[error("gogar: unknown {kind} `{id}`")]
    Membership { kind: &'static str, id: String },

    #[error("gogar: {player} cannot be entitled to `{counter}` without committing to it")]
    EntitlementWithoutCommitment { player: String, counter: String },

    #[error("{module}: role error: {msg}")]
    Role { module: &'static str, msg: String },

    #[error("gogar: `{counter}` is not in {player}'s entitlement box and cannot be challenged")]
    ChallengeTarget { player: String, counter: String },

    #[error("gogar: log corruption at line {line}: {msg}")]
    LogCorruption { line: usize, msg: String },

    #[error("bridge: policy is undefined at non-terminal state {0}")]
    PartialPolicy(usize),

    #[error("bridge: {0}")]
    Bridge(String),

    #[error("gogar_a3c: population error: {0}")]
    Population(String),

    #[error("deterministic policy required: {0}")]
    DeterministicPolicyRequired(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("io error: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn param(module: &'static str, msg: impl Into<String>) -> Self {
        Error::Param {
            module,
            msg: msg.into(),
        }
    }

    pub(crate) fn numeric(module: &'static str, msg: impl Into<String>) -> Self {
        Error::Numeric {
            module,
            msg: msg.into(),
        }
    }

    pub(crate) fn input(module: &'static str, msg: impl Into<String>) -> Self {
        Error::Input {
            module,
            msg: msg.into(),
        }
    }

    pub(crate) fn parse(line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            line,
            msg: msg.into(),
        }
    }

    /// Name of the subsystem the error originates from, used in CLI diagnostics.
    pub fn module(&self) -> &'static str {
        match self {
            Error::Index(_) | Error::TerminalState(_) => "mdp",
            Error::Param { module, .. }
            | Error::Numeric { module, .. }
            | Error::Input { module, .. }
            | Error::Role { module, .. } => module,
            Error::Shape(_) => "async_train",
            Error::Membership { .. }
            | Error::EntitlementWithoutCommitment { .. }
            | Error::ChallengeTarget { .. }
            | Error::LogCorruption { .. } => "gogar",
            Error::PartialPolicy(_) | Error::Bridge(_) => "bridge",
            Error::Population(_) => "gogar_a3c",
            Error::DeterministicPolicyRequired(_)
            | Error::Parse { .. }
            | Error::Validation(_)
            | Error::Io(_) => "harness",
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
