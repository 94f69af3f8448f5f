use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// Target and anchor are closer than [`crate::geometry::MIN_SEPARATION`].
    #[error("target and anchor coincide (separation {0:.3e} m)")]
    Coincident(f64),

    /// Target lies on the vertical line through an anchor, so the azimuth
    /// (and every term divided by the planar distance) is undefined.
    #[error("target is on the vertical axis of an anchor (planar distance {0:.3e} m)")]
    PlanarCoincident(f64),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("at least {required} anchors are required, got {got}")]
    TooFewAnchors { required: usize, got: usize },

    #[error("normal matrix is ill-conditioned (condition number {0:.3e})")]
    IllConditioned(f64),

    #[error("Fisher information matrix is singular (condition number {0:.3e})")]
    SingularFim(f64),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
