//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Incompatible array shapes for an operation.
    #[error("dimension mismatch in {op}: {lhs} vs {rhs}")]
    Dimension {
        op: &'static str,
        lhs: String,
        rhs: String,
    },

    /// Convolution/pooling geometry that does not tile the input.
    #[error(
        "bad geometry: input {height}x{width}, kernel {kernel}, stride {stride}, pad {pad}"
    )]
    Geometry {
        height: usize,
        width: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
    },

    /// A class label outside `1..=classes`.
    #[error("label {label} out of range 1..={classes} at example {index}")]
    Label {
        index: usize,
        label: usize,
        classes: usize,
    },

    /// An IDX file that does not start with a supported magic number.
    #[error("bad IDX magic: 0x{magic:08x}")]
    Format { magic: u32 },

    /// An IDX payload shorter or longer than its header promises.
    #[error("IDX payload length mismatch: expected {expected} bytes, got {actual}")]
    Length { expected: usize, actual: usize },

    /// Invalid configuration value.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// Training clock outside its valid range.
    #[error("clock out of range: {0}")]
    Clock(String),

    /// Forward cache that no longer matches the model.
    #[error("invalid state: {0}")]
    State(String),

    /// Malformed operation input.
    #[error("invalid input: {0}")]
    Input(String),

    /// Model construction failure.
    #[error("cannot construct model: {0}")]
    Construction(String),

    /// A trial produced a non-finite loss.
    #[error("training diverged at epoch {epoch} (lr {lr})")]
    Divergence { epoch: usize, lr: f64 },

    /// Aggregation over results from differing configurations.
    #[error("cannot aggregate mixed configurations: {0}")]
    Aggregation(String),

    /// A loss distribution with no usable range.
    #[error("degenerate loss range: {0}")]
    DegenerateRange(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
