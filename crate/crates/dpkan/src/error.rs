//! Error types shared across the crate.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Dimension disagreement between tensors, layers, or files.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// A caller-supplied value is out of its documented range.
    #[error("invalid argument: {0}")]
    Argument(String),

    /// Malformed text input (CSV cell, config line, report file).
    #[error("parse error: {0}")]
    Parse(String),

    /// A binary file does not start with the expected magic number.
    #[error("bad magic number: expected {expected:#010x}, found {found:#010x}")]
    BadMagic { expected: u32, found: u32 },

    /// A binary payload ended before its declared length.
    #[error("truncated input: {0}")]
    Truncated(String),

    /// A serialized model carries an unsupported format version.
    #[error("unsupported format version {found} (supported: {supported})")]
    VersionMismatch { found: u32, supported: u32 },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    /// Training produced a non-finite loss; the step index is reported so
    /// the run can be diagnosed instead of silently continuing with NaNs.
    #[error("training diverged at step {step}: {detail}")]
    Diverged { step: usize, detail: String },

    /// A calibration target cannot be met within the search bounds.
    #[error("infeasible: {0}")]
    Infeasible(String),
}
