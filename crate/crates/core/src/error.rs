use thiserror::Error;

use crate::primitives::SecretLabel;

/// Errors raised anywhere in the protocol stack.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("use of erased secret {0}")]
    UseAfterErase(SecretLabel),
    #[error("message too long for this key")]
    MessageTooLong,
    #[error("padding check failed")]
    PaddingFailure,
    #[error("zero-knowledge proof did not verify")]
    ProofFailure,
    #[error("group element outside the prime-order subgroup")]
    BadGroupElement,
    #[error("secret comparison failed: peer holds a different secret")]
    AuthFailed,
    #[error("frame not valid in phase {0}")]
    WrongPhase(String),
    #[error("duplicate frame")]
    DuplicateFrame,
    #[error("frame rejected: {0}")]
    FrameRejected(String),
    #[error("insufficient entropy: {0}")]
    InsufficientEntropy(String),
    #[error("malformed input: {0}")]
    Malformed(String),
    #[error("channel closed")]
    ChannelClosed,
    #[error("timed out waiting for peer")]
    Timeout,
    #[error("cannot forge transcript: {0}")]
    CannotForge(String),
    #[error("internal error: {0}")]
    Internal(String),
}

impl Error {
    /// True for failures that mean the peer could not prove it shares our view
    /// of the keys and the secret.
    pub fn is_auth_failure(&self) -> bool {
        matches!(
            self,
            Error::AuthFailed | Error::ProofFailure | Error::BadGroupElement | Error::PaddingFailure
        )
    }

    /// Errors after which a session keeps running.
    pub fn is_recoverable(&self) -> bool {
        matches!(self, Error::DuplicateFrame | Error::FrameRejected(_))
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
