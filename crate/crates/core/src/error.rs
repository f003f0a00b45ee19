use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("point behind camera (depth {depth})")]
    BehindCamera { depth: f64 },

    #[error("degenerate sequence {0:?}: consecutive reflections by the same mirror")]
    DegenerateSequence(Vec<usize>),

    #[error("mirror index {index} out of range (1..={count})")]
    MirrorIndex { index: usize, count: usize },

    #[error("invalid sequence key {0:?}")]
    SequenceKey(String),

    #[error("invalid intrinsics: {0}")]
    Intrinsics(String),

    #[error("invalid mirror plane: {0}")]
    Mirror(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("scene point {point} lies behind mirror {mirror} (signed distance {distance})")]
    PointBehindMirror {
        point: usize,
        mirror: usize,
        distance: f64,
    },

    #[error("point {point} in chamber {chamber} has non-positive depth {depth}")]
    ReflectedBehindCamera {
        point: usize,
        chamber: String,
        depth: f64,
    },

    #[error("missing chambers: {}", .0.join(", "))]
    MissingChambers(Vec<String>),

    #[error("degenerate point configuration: {0}")]
    DegenerateConfiguration(String),

    #[error("mirror {mirror} has {rows} independent coplanarity constraints, need at least 2")]
    InsufficientConstraints { mirror: usize, rows: usize },

    #[error("inconsistent geometry: {0}")]
    InconsistentGeometry(String),

    #[error("ill-posed triangulation (condition number {condition:e})")]
    IllPosedTriangulation { condition: f64 },

    #[error("degenerate intersection vectors: {0}")]
    DegenerateIntersection(String),

    #[error("pose estimation failed: {0}")]
    Pose(String),
}
