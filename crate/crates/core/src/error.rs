use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("insufficient points: operation needs more than {required} points, cloud has {available}")]
    InsufficientPoints { required: usize, available: usize },

    #[error("cloud too small for ratio: {points} points downsampled by {ratio} leaves fewer than {minimum}")]
    CloudTooSmall {
        points: usize,
        ratio: usize,
        minimum: usize,
    },

    #[error("index {index} out of range for {len} points")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("non-finite coordinate at point {index}")]
    NonFiniteCoordinate { index: usize },

    #[error("empty point cloud")]
    EmptyCloud,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },

    #[error("non-finite value produced by {op}")]
    NonFiniteValue { op: &'static str },

    #[error("{}line {line}: {message}", path_prefix(.path))]
    Parse {
        path: Option<PathBuf>,
        line: usize,
        message: String,
    },

    #[error("face {face} references vertex {index}, mesh has {vertex_count} vertices")]
    FaceIndex {
        face: usize,
        index: i64,
        vertex_count: usize,
    },

    #[error("mesh has zero surface area")]
    DegenerateMesh,

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("config field `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("training diverged at epoch {epoch}: {message}")]
    Diverged {
        epoch: usize,
        message: String,
        last_good: Box<crate::trainer::Checkpoint>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

fn path_prefix(path: &Option<PathBuf>) -> String {
    match path {
        Some(p) => format!("{}: ", p.display()),
        None => String::new(),
    }
}

impl Error {
    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: None,
            line,
            message: message.into(),
        }
    }

    pub fn config(field: &str, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.to_string(),
            message: message.into(),
        }
    }

    /// Attaches a file path to a parse error; other variants pass through.
    pub fn with_path(self, p: impl Into<PathBuf>) -> Self {
        match self {
            Error::Parse { line, message, .. } => Error::Parse {
                path: Some(p.into()),
                line,
                message,
            },
            other => other,
        }
    }
}
