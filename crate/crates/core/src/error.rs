use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the concept discovery and alignment library.
#[derive(Debug, Error)]
pub enum Error {
    /// Input data or parameters violate a documented invariant.
    #[error("validation error: {0}")]
    Validation(String),

    #[error("missing file: {}", .0.display())]
    MissingFile(PathBuf),

    #[error("size mismatch: {0}")]
    SizeMismatch(String),

    #[error("malformed {what}: {detail}")]
    Malformed { what: &'static str, detail: String },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    /// A pipeline stage failed; `stage` names it.
    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by bad inputs rather than failed computation.
    pub fn is_validation(&self) -> bool {
        match self {
            Error::Stage { source, .. } => source.is_validation(),
            other => matches!(
                other,
                Error::Validation(_)
                    | Error::MissingFile(_)
                    | Error::SizeMismatch(_)
                    | Error::Malformed { .. }
            ),
        }
    }

    /// Stage name of the innermost failing stage, if any.
    pub fn stage(&self) -> Option<&str> {
        match self {
            Error::Stage { stage, source } => source.stage().or(Some(stage)),
            _ => None,
        }
    }
}

/// Attaches a stage name to errors.
pub trait StageContext<T> {
    fn stage(self, name: impl Into<String>) -> Result<T>;
}

impl<T> StageContext<T> for Result<T> {
    fn stage(self, name: impl Into<String>) -> Result<T> {
        self.map_err(|e| Error::Stage {
            stage: name.into(),
            source: Box::new(e),
        })
    }
}

macro_rules! ensure {
    ($cond:expr, $($arg:tt)+) => {
        #[allow(clippy::neg_cmp_op_on_partial_ord)]
        if !$cond {
            return Err($crate::error::Error::Validation(format!($($arg)+)));
        }
    };
}
pub(crate) use ensure;
