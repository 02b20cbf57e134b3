use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the measurement pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed header: {0}")]
    Header(String),
    #[error("payload size mismatch: header declares {expected} elements, found {found}")]
    PayloadSize { expected: usize, found: usize },
    #[error("unsupported element type `{0}`")]
    UnsupportedType(String),
    #[error("invalid volume: {0}")]
    InvalidVolume(String),
    #[error("point ({x}, {y}, {z}) is outside the volume")]
    OutOfBounds { x: f64, y: f64, z: f64 },
    #[error("non-finite coordinate")]
    NonFinite,
    #[error("segmentation has no foreground voxels")]
    EmptySegmentation,
    #[error("anchor {0:?} is not a foreground voxel")]
    AnchorNotForeground([usize; 3]),
    #[error("anchors lie in different connected components")]
    AnchorsDisconnected,
    #[error("point {0:?} is farther than the snap radius from the skeleton")]
    NotOnSkeleton([usize; 3]),
    #[error("skeleton is not connected to the trachea start")]
    SkeletonDisconnected,
    #[error("need at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("degenerate spline segment: zero derivative at parameter {0} mm")]
    ZeroDerivative(f64),
    #[error("plane centre lies outside the segmented lumen")]
    CentreOutsideLumen,
    #[error("ellipse fit failed: {0}")]
    EllipseFit(String),
    #[error("regression needs at least 3 usable entries, got {0}")]
    TooFewEntries(usize),
    #[error("regression abscissa has zero variance")]
    ZeroVariance,
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("bifurcation range [{start}, {end}] references sections outside 0..{len}")]
    FlagRange { start: usize, end: usize, len: usize },
    #[error("invalid phantom: {0}")]
    Phantom(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("empty sample")]
    EmptySample,
    #[error("every cross-section was invalid")]
    AllSectionsInvalid,
    #[error("csv error in {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
