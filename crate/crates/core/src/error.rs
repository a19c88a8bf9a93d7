use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("node index {index} out of range (lattice has {count} nodes)")]
    NodeOutOfRange { index: usize, count: usize },

    #[error("scale-underresolved: radius {radius} below resolution floor {floor}")]
    ScaleUnderresolved { radius: f64, floor: f64 },

    #[error("ball B_{radius}({center:?}) exits the unit ball")]
    BallOutsideDomain { center: Vec<f64>, radius: f64 },

    #[error("blowup-out-of-domain: sample point {point:?} lies outside the unit ball")]
    BlowupOutOfDomain { point: Vec<f64> },

    #[error("projection-undefined: nearest-point projection of the zero vector onto a sphere")]
    ProjectionUndefined,

    #[error("test field is not compactly supported (max |xi| = {max_value:e} on the boundary band)")]
    NotCompactlySupported { max_value: f64 },

    #[error("divergence: non-finite energy at iteration {iteration}")]
    Divergence { iteration: usize },

    #[error("mismatched lattices: {0}")]
    MismatchedLattices(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    #[error("point {point:?} is not in the detected concentration set")]
    NotInSigma { point: Vec<f64> },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("field file format: {0}")]
    Format(String),

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}
