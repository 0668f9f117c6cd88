//! Binary LDPC codes: parity-check matrices, alist I/O, GF(2) encoding,
//! flooding min-sum decoding with per-iteration traces, and row subcodes.

mod alist;
mod decoder;
mod gallager;
mod generator;
mod matrix;
mod subcode;

pub use alist::{parse_alist, write_alist};
pub use decoder::{min_sum_decode, DecoderTrace, MinSumConfig};
pub use gallager::gallager_regular;
pub use generator::{derive_generator, encode, GeneratorMapping};
pub use matrix::ParityCheckMatrix;
pub use subcode::{extract_subcode, RowSelection, SubcodeView};

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum LdpcError {
    #[error("alist line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid parity-check matrix: {0}")]
    InvalidMatrix(String),
    #[error("parity-check matrix has rank 0 over GF(2)")]
    Degenerate,
    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("non-finite LLR at position {0}")]
    NonFiniteLlr(usize),
    #[error("invalid decoder iteration counts: max_iter {max_iter} < trace_iters {trace_iters}")]
    IterationBudget { max_iter: usize, trace_iters: usize },
    #[error("row fraction {fraction} selects no rows of a {n_checks}-row matrix")]
    EmptySubcode { fraction: f64, n_checks: usize },
    #[error("row fraction must lie in (0, 1], got {0}")]
    InvalidFraction(f64),
}
