use alloc::string::String;
use alloc::vec::Vec;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch: {left:?} vs {right:?}")]
    ShapeMismatch { left: Vec<usize>, right: Vec<usize> },
    #[error("invalid shape {shape:?}: {reason}")]
    InvalidShape { shape: Vec<usize>, reason: String },
    #[error("division by zero at element {index}")]
    DivisionByZero { index: usize },
    #[error("axis {axis} out of range for a rank-{rank} tensor")]
    AxisOutOfRange { axis: usize, rank: usize },
    #[error("layer `{layer}`: {reason}")]
    Layer { layer: String, reason: String },
    #[error("model spec line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("unknown layer `{0}`")]
    UnknownLayer(String),
    #[error("unknown preset `{0}`")]
    UnknownPreset(String),
    #[error("backward called without a recorded forward pass")]
    EmptyTape,
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("training diverged at epoch {epoch}, batch {batch}: loss is {loss}")]
    Diverged { epoch: usize, batch: usize, loss: f64 },
    #[error("corrupt serialized data: {0}")]
    Corrupt(String),
    #[error("data: {0}")]
    Data(String),
    #[error("config: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn layer(layer: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Layer {
            layer: layer.into(),
            reason: reason.into(),
        }
    }
}
