use thiserror::Error;

/// Errors raised by the simulation and statistics layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("cell {cell:?} lies outside the world bounds (radius {radius} base units)")]
    CellOutOfBounds { cell: [i64; 3], radius: f64 },

    #[error("segment reaches {reach:.6} which exceeds the world bound {bound:.6}")]
    SegmentOutOfBounds { reach: f64, bound: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("grazing or outgoing reflection (v·n = {0:e})")]
    GrazingReflection(f64),

    #[error("position lies inside the scatterer centred at {centre:?}")]
    InsideScatterer { centre: [f64; 3] },

    #[error("runaway trajectory: more than {0} collisions")]
    RunawayTrajectory(usize),

    #[error("proposed velocity coincides with the current velocity")]
    DegenerateDirection,

    #[error("at least two velocities are required, got {0}")]
    TooFewVelocities(usize),

    #[error("duplicate initial velocities: minimum pairwise angle is zero")]
    DuplicateVelocities,

    #[error("ball of radius {radius} at distance {distance} contains the origin")]
    SingularBall { distance: f64, radius: f64 },

    #[error("schedule has no rows")]
    EmptySchedule,

    #[error("inadmissible parameters ({0}); pass --force to run anyway")]
    Inadmissible(String),

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
