use std::fmt;

/// Result alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

/// Errors surfaced by tensor ops, layers, the model, training, and IO.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Tensor shapes cannot be combined by the requested operation.
    ShapeMismatch(String),
    /// A model configuration violates a structural constraint.
    InvalidConfig(String),
    /// Dropout rate outside [0, 1).
    InvalidRate(f64),
    /// A class label at or beyond the configured class count.
    InvalidLabel { label: usize, classes: usize },
    /// A named layer does not exist in the model.
    InvalidLayer { name: String, available: Vec<String> },
    /// An input too small or empty for the operation to be meaningful.
    DegenerateInput(String),
    /// Image bytes that do not parse as the declared format.
    MalformedImage(String),
    /// Too few records to honor a split specification.
    InsufficientData(String),
    /// An evaluation was requested over zero records.
    EmptyDataset,
    /// A confusion matrix with no classes or no samples.
    EmptyMatrix,
    /// A backward call received a context from a different forward call.
    ContextMismatch(String),
    /// Training loss became non-finite.
    DivergenceDetected { epoch: usize },
    /// A checkpoint file failed validation.
    CorruptCheckpoint(String),
    /// Wrapper around filesystem failures.
    Io(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::ShapeMismatch(msg) => write!(f, "shape mismatch: {msg}"),
            Error::InvalidConfig(msg) => write!(f, "invalid config: {msg}"),
            Error::InvalidRate(rate) => {
                write!(f, "dropout rate must lie in [0, 1), got {rate}")
            }
            Error::InvalidLabel { label, classes } => {
                write!(f, "label {label} out of range for {classes} classes")
            }
            Error::InvalidLayer { name, available } => {
                write!(f, "no layer named {name:?}; available: {}", available.join(", "))
            }
            Error::DegenerateInput(msg) => write!(f, "degenerate input: {msg}"),
            Error::MalformedImage(msg) => write!(f, "malformed image: {msg}"),
            Error::InsufficientData(msg) => write!(f, "insufficient data: {msg}"),
            Error::EmptyDataset => write!(f, "empty dataset"),
            Error::EmptyMatrix => write!(f, "empty confusion matrix"),
            Error::ContextMismatch(msg) => write!(f, "context mismatch: {msg}"),
            Error::DivergenceDetected { epoch } => {
                write!(f, "training diverged (non-finite loss) at epoch {epoch}")
            }
            Error::CorruptCheckpoint(msg) => write!(f, "corrupt checkpoint: {msg}"),
            Error::Io(msg) => write!(f, "io error: {msg}"),
        }
    }
}

impl std::error::Error for Error {}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
