use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("spinor is not normalized (norm {0})")]
    UnnormalizedSpinor(f64),
    #[error("packet width parameter must have positive real part, got {0}")]
    NonPositiveWidth(f64),
    #[error("window [{start}, {end}) is empty or reversed")]
    EmptyWindow { start: f64, end: f64 },
    #[error("windows [{0}, {1}) and [{2}, {3}) overlap")]
    OverlappingWindows(f64, f64, f64, f64),
    #[error("negative evolution step {0}; use the signed variant for backward evolution")]
    NegativeDuration(f64),
    #[error("density {density:e} below node floor {floor:e} at s = {s}")]
    NodeProximity { s: f64, density: f64, floor: f64 },
    #[error("step size underflow at s = {0}")]
    StepUnderflow(f64),
    #[error("slice time {time} outside path span [{lo}, {hi}]")]
    SliceOutsideSpan { time: f64, lo: f64, hi: f64 },
    #[error("track separation {separation} is below 8 widths ({min_required})")]
    TrackSeparation { separation: f64, min_required: f64 },
    #[error("invalid geometry: {0}")]
    Geometry(String),
    #[error("unknown frame label {0:?}")]
    UnknownFrame(String),
    #[error("unknown track label {0:?}")]
    UnknownTrack(String),
    #[error("malformed constraint on line {line}: {reason}")]
    MalformedConstraint { line: usize, reason: String },
    #[error("events for subsystem {0} are not in strictly increasing time order")]
    EventOrder(char),
    #[error("conditioning on an event sequence of zero probability")]
    ZeroProbability,
    #[error("matrix is not Hermitian (defect {0:e})")]
    NotHermitian(f64),
    #[error("state vector is not normalized (norm {0})")]
    UnnormalizedState(f64),
    #[error("invalid sample count {0}")]
    InvalidCount(usize),
    #[error("grid size {0} must be a power of two and at least 8")]
    GridSize(usize),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, Error>;
