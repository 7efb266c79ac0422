use thiserror::Error;

/// Why the plane poses are not determined.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RankCause {
    /// Nullity of the design matrix is not clearly two (`σ3 / σ2` too small).
    SingularGap,
    /// All three plane poses are parallel, which leaves the depth travel free.
    ParallelPlanes,
}

impl std::fmt::Display for RankCause {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            RankCause::SingularGap => "singular value gap ratio",
            RankCause::ParallelPlanes => "plane tilt content",
        })
    }
}

/// Errors raised by the reconstruction library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// Two points used to span a line are (numerically) identical.
    #[error("points are coincident (separation {separation:e} mm)")]
    CoincidentPoints { separation: f64 },
    /// Projected line vanished: the 3D line passes through the optical center.
    #[error("line projects to a point")]
    DegenerateProjection,
    #[error("point projection matrix is rank deficient")]
    RankDeficient,
    /// The 3x6 matrix does not satisfy the line-projection validity constraint.
    #[error("invalid line projection matrix (validity residual {residual:e})")]
    InvalidLineMatrix { residual: f64 },

    #[error("no real root")]
    AllComplexRoots,
    #[error("too few correspondences: {got} < {need}")]
    TooFewCorrespondences { got: usize, need: usize },
    /// The pose pair is not determined by the data.
    #[error("pose solution is not unique: {cause} {value:.3e} < {threshold:e}")]
    RankAmbiguous { cause: RankCause, value: f64, threshold: f64 },
    /// Both third-row entries used as divisors vanish.
    #[error("m31 and n31 are both zero: degenerate elimination branch")]
    BranchM31Zero,
    #[error("no real alpha")]
    NoRealAlpha,
    #[error("no valid pose candidate")]
    NoValidCandidate,

    #[error("too few observations: {got} < {need}")]
    TooFewObservations { got: usize, need: usize },
    #[error("observation matrix is rank deficient")]
    RankDeficientZ,
    #[error("cannot resolve cheirality (t3 = {t3:e})")]
    CheiralityUnresolvable { t3: f64 },
    /// Cost is monotone over the whole focal range.
    #[error("focal sweep found no interior minimum")]
    SweepNoMinimum,
    #[error("cross-ratio denominator vanishes")]
    DegenerateCrossRatio,
    #[error("Levenberg-Marquardt diverged")]
    DivergedLM,

    #[error("dataset holds {got} valid triples, need at least {need}")]
    EmptyDataset { got: usize, need: usize },
    #[error("ground truth translation is zero")]
    ZeroGroundTruth,
    #[error("too few points: {got} < {need}")]
    TooFewPoints { got: usize, need: usize },
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),
    #[error("point counts differ: {0} vs {1}")]
    CountMismatch(usize, usize),

    #[error("parse error at line {line}: {msg}")]
    ParseError { line: usize, msg: String },
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("no valid points")]
    NoValidPoints,
    #[error("peak at profile boundary")]
    PeakAtBoundary,
    #[error("profile has no strict maximum")]
    FlatProfile,
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("io error on {path}: {msg}")]
    Io { path: String, msg: String },
}

impl Error {
    /// Whether the failure is numerical/degenerate (as opposed to usage or I/O).
    pub fn is_numerical(&self) -> bool {
        !matches!(
            self,
            Error::ParseError { .. }
                | Error::SchemaMismatch(_)
                | Error::InvalidInput(_)
                | Error::Io { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
