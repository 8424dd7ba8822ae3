//! Error type shared by every module.

use thiserror::Error;

/// Errors raised by configuration, signal-shape, and detection code.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid parameter or configuration value.
    #[error("configuration error: {0}")]
    Config(String),

    /// Symbol value outside the alphabet [0, m).
    #[error("symbol {symbol} out of range for m = {m}")]
    SymbolOutOfRange { symbol: usize, m: usize },

    /// Signal length does not match what the operation requires.
    #[error("shape error: expected {expected} samples, got {got}")]
    ShapeMismatch { expected: usize, got: usize },

    /// Window or interferer index outside its valid range.
    #[error("index {index} out of range ({limit})")]
    IndexOutOfRange { index: i64, limit: String },

    /// Coherent detection cannot compensate a zero channel gain.
    #[error("degenerate channel: h = 0")]
    DegenerateChannel,

    /// Exhaustive joint ML search would exceed the candidate cap.
    /// Search cost grows as O(l*M^(l+1)).
    #[error(
        "joint ML infeasible: {candidates} candidates exceed cap {cap} \
         (complexity O(l*M^(l+1)))"
    )]
    JointMlInfeasible { candidates: u128, cap: u128 },

    /// The SER records never cross the target, so no SNR can be interpolated.
    #[error("insufficient sweep: SER records do not bracket target {target}")]
    InsufficientSweep { target: f64 },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code for the CLI: 1 configuration, 2 infeasible joint ML,
    /// 3 insufficient sweep.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::JointMlInfeasible { .. } => 2,
            Error::InsufficientSweep { .. } => 3,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
