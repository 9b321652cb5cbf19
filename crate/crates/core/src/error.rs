use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the planning pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("infeasible config: no valid scenario after {attempts} attempts ({reason})")]
    InfeasibleConfig { attempts: u32, reason: String },

    #[error("cell ({x}, {y}) is an obstacle")]
    ObstacleCell { x: usize, y: usize },

    #[error("cell ({x}, {y}) is outside the {width}x{height} grid")]
    OutOfGrid { x: usize, y: usize, width: usize, height: usize },

    #[error("state ({x:.3}, {y:.3}) is outside the domain [0, {max_x}] x [0, {max_y}]")]
    OutOfDomain { x: f64, y: f64, max_x: f64, max_y: f64 },

    #[error("dimension mismatch: expected {expected_w}x{expected_h}, got {got_w}x{got_h}")]
    DimensionMismatch {
        expected_w: usize,
        expected_h: usize,
        got_w: usize,
        got_h: usize,
    },

    #[error("level {level} outside 1..={levels}")]
    LevelOutOfRange { level: usize, levels: usize },

    #[error("field has no mass left after masking")]
    ZeroMass,

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },

    #[error("training diverged at iteration {iteration}")]
    Diverged { iteration: usize },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(offset: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            offset,
            message: message.into(),
        }
    }
}
