use thiserror::Error;

use crate::Shape;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AutodiffError {
    #[error("{op}: shape mismatch, expected {expected}, got {got}")]
    ShapeMismatch {
        op: &'static str,
        expected: Shape,
        got: Shape,
    },
    #[error("{op}: input has {input} channels but the weight expects {weight}")]
    ChannelMismatch {
        op: &'static str,
        input: usize,
        weight: usize,
    },
    #[error("{op}: spatial dims {height}x{width} must both be even")]
    OddSpatial {
        op: &'static str,
        height: usize,
        width: usize,
    },
    #[error("{op}: {reason}")]
    InvalidArgument { op: &'static str, reason: String },
    #[error("data length {len} does not match shape {shape} ({expected} elements)")]
    DataLength {
        shape: Shape,
        len: usize,
        expected: usize,
    },
    #[error("backward needs a single-element loss, got shape {0}")]
    NotScalar(Shape),
    #[error("{op}: mask selects no elements")]
    EmptyMask { op: &'static str },
}
