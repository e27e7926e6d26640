use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DecodeError {
    #[error("encoded element has length {actual}, expected {expected}")]
    Length { expected: usize, actual: usize },
    #[error("value is not a member of the prime-order subgroup")]
    NotInSubgroup,
    #[error("message body has length {actual}, expected {expected}")]
    BodyLength { expected: usize, actual: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DecryptError {
    #[error("ciphertext of {0} bytes is shorter than the 16-byte nonce")]
    Truncated(usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum KemError {
    #[error("ciphertext failed to decode: {0}")]
    Decode(#[from] DecodeError),
    #[error("ciphertext is inconsistent with the recipient key")]
    Consistency,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StateError {
    #[error("operation `{op}` is not allowed in phase {phase}")]
    OutOfOrder {
        op: &'static str,
        phase: &'static str,
    },
    #[error("the SECU registry is empty")]
    EmptyRegistry,
    #[error("no group secret is held")]
    NoGroupSecret,
    #[error("no session is established")]
    NoSession,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DomainError {
    #[error("group size must be at least 1, got {0}")]
    GroupSize(u64),
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error("simulation stalled in phase {phase}: {reason}")]
    Deadlock { phase: u8, reason: String },
    #[error(transparent)]
    State(#[from] StateError),
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error("failed to parse: {0}")]
    Parse(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Sim(#[from] SimError),
}
