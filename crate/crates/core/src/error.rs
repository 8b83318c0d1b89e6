use core::fmt;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Fewer than three vertices, or zero (or negative) signed area.
    DegeneratePolygon,
    /// Polygon rings must be stored counter-clockwise.
    ClockwiseRing,
    /// A coordinate or parameter was NaN or infinite.
    NonFinite,
    EmptyVertexSet,
    /// Projective mapping sent the point to infinity.
    PointAtInfinity,
    InvalidParameter(&'static str),
    InsufficientData { needed: usize, got: usize },
    EstimationFailed(&'static str),
    TemplateTooLarge,
    EmptyInput,
    /// Depth at the queried pixel is missing or non-positive.
    NoProjection,
    /// Reprojected point has non-positive depth in the target camera.
    BehindCamera,
    /// Scene generator could not place the requested polygons.
    Placement { placed: usize, requested: usize },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::DegeneratePolygon => write!(f, "degenerate polygon"),
            Error::ClockwiseRing => write!(f, "polygon ring is clockwise"),
            Error::NonFinite => write!(f, "non-finite value"),
            Error::EmptyVertexSet => write!(f, "empty vertex set"),
            Error::PointAtInfinity => write!(f, "point maps to infinity"),
            Error::InvalidParameter(what) => write!(f, "invalid parameter: {what}"),
            Error::InsufficientData { needed, got } => {
                write!(f, "insufficient data: need {needed}, got {got}")
            }
            Error::EstimationFailed(what) => write!(f, "estimation failed: {what}"),
            Error::TemplateTooLarge => write!(f, "template larger than search region"),
            Error::EmptyInput => write!(f, "empty input"),
            Error::NoProjection => write!(f, "no valid depth at point"),
            Error::BehindCamera => write!(f, "projected point is behind the camera"),
            Error::Placement { placed, requested } => {
                write!(f, "placed only {placed} of {requested} polygons")
            }
        }
    }
}

impl core::error::Error for Error {}
