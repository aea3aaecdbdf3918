// Copyright 2026 qsens Contributors
// SPDX-License-Identifier: Apache-2.0

use thiserror::Error;

/// Errors raised by the numerical core.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// Matrix failed a structural check (Hermitian, unitary, square).
    #[error("structure violation: {0}")]
    StructureViolation(String),

    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: String,
        found: String,
    },

    #[error("index {index} out of range for {what} (len {len})")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        len: usize,
    },

    /// A non-finite value or solver breakdown.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// The fidelity trace vanished, so the phase (and ζ) is undefined.
    #[error("fidelity trace is zero; phase undefined")]
    UndefinedPhase,

    #[error("degenerate uncertainty structure: {0}")]
    DegenerateStructure(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("precondition failed: {0}")]
    Precondition(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn dim_mismatch(
    context: &'static str,
    expected: impl ToString,
    found: impl ToString,
) -> Error {
    Error::DimensionMismatch {
        context,
        expected: expected.to_string(),
        found: found.to_string(),
    }
}
