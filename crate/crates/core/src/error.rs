use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("cannot write {path}")]
    Write {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed image header: {0}")]
    MalformedHeader(String),

    #[error("truncated image data: expected {expected} bytes, found {found}")]
    TruncatedData { expected: usize, found: usize },

    #[error("unsupported image format (magic {0:?}); expected P5 or P6")]
    UnsupportedFormat(String),

    #[error("unsupported bit depth: maxval {0} (only 8-bit images are supported)")]
    UnsupportedDepth(u32),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("dimension mismatch: {left_w}x{left_h} vs {right_w}x{right_h}")]
    DimensionMismatch {
        left_w: usize,
        left_h: usize,
        right_w: usize,
        right_h: usize,
    },

    #[error("degenerate histogram: fewer than two distinct levels")]
    DegenerateHistogram,

    #[error("empty ground truth: no foreground pixels")]
    EmptyGroundTruth,

    #[error("degenerate class: ground truth has no {0} pixels")]
    DegenerateClass(&'static str),

    #[error("no contour: ground truth contains a single class")]
    NoContour,

    #[error("model error: {0}")]
    Model(String),

    #[error("objective failed at every initial design point")]
    AllEvaluationsFailed,

    #[error("{path}:{line}: {message}")]
    Manifest {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("recomputed F-measure {recomputed} differs from in-loop best {in_loop}")]
    Reproducibility { in_loop: f64, recomputed: f64 },

    #[error("config line {line}: {message}")]
    Config { line: usize, message: String },
}

impl Error {
    /// This error followed by its causes, separated by `: `.
    pub fn chain(&self) -> String {
        let mut out = self.to_string();
        let mut cause = std::error::Error::source(self);
        while let Some(c) = cause {
            out.push_str(": ");
            out.push_str(&c.to_string());
            cause = c.source();
        }
        out
    }

    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }

    pub(crate) fn dims(a: (usize, usize), b: (usize, usize)) -> Self {
        Error::DimensionMismatch {
            left_w: a.0,
            left_h: a.1,
            right_w: b.0,
            right_h: b.1,
        }
    }
}
