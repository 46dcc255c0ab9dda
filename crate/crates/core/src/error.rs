use thiserror::Error;

/// Errors produced by the planning, perception and simulation layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("neighbor index is empty")]
    EmptyIndex,

    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(&'static str),

    #[error("occupancy map mode mismatch: {0}")]
    ModeMismatch(&'static str),

    #[error("unknown sensor frame '{0}'")]
    UnknownFrame(String),

    #[error("joint {joint} value {value:.4} outside limits [{lo:.4}, {hi:.4}]")]
    JointOutOfLimits {
        joint: usize,
        value: f64,
        lo: f64,
        hi: f64,
    },

    #[error("pose unreachable: {0}")]
    OutOfReach(&'static str),

    #[error("planning failed: {0}")]
    PlanningFailed(&'static str),

    #[error("no collision-free escape exists: robot is trapped")]
    Trapped,

    #[error("invalid scenario: {0}")]
    Scenario(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
