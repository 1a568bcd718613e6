use alloc::string::String;

/// Errors raised by the core library.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("matrix is singular")]
    Singular,
    #[error("invalid instance: {0}")]
    Instance(String),
    #[error("path has no products")]
    EmptyPath,
    #[error("breakpoint bound must be at least 1")]
    ZeroBreakpoints,
    #[error("cross-party private leg: path {path} of party {party} uses leg {leg}")]
    CrossPartyPrivateLeg { path: u32, party: u32, leg: u32 },
    #[error("solver: {0}")]
    Solver(String),
    #[error("solution is not optimal ({0})")]
    NotOptimal(String),
    #[error("key generation failed: {0}")]
    KeyGeneration(String),
    #[error("integrality violated at ({row}, {col}) = {value}")]
    NonIntegral { row: usize, col: usize, value: f64 },
    #[error("wire format: {0}")]
    Wire(String),
    #[error("protocol aborted: {0}")]
    Protocol(String),
    #[error("invalid configuration: {0}")]
    Config(String),
}

pub type Result<T, E = Error> = core::result::Result<T, E>;
