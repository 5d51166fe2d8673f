use thiserror::Error;

/// Every failure mode of the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("matrix is not hyperbolic: eigenvalue modulus {modulus} within {tol} of 1")]
    NotHyperbolic { modulus: f64, tol: f64 },
    #[error("matrix is not unimodular: det = {det}")]
    NotUnimodular { det: i128 },
    #[error("matrix is not diagonalizable over C (defective eigenvalue near {eigenvalue})")]
    NotDiagonalizable { eigenvalue: f64 },
    #[error("M^m - I is singular (period {period})")]
    DegeneratePeriod { period: u32 },
    #[error("bad geometry: {0}")]
    BadGeometry(String),
    #[error("plateau infeasible; largest feasible inner radius is {max_delta}")]
    InfeasiblePlateau { max_delta: f64 },
    #[error("linear part is not hyperbolic: {0}")]
    NotHyperbolicLinearPart(String),
    #[error("supports overlap: {a} and {b}")]
    OverlappingSupports { a: String, b: String },
    #[error("frame mismatch: {0}")]
    FrameMismatch(String),
    #[error("point is not fixed by the base map (defect {defect})")]
    NotAFixedPoint { defect: f64 },
    #[error("surgery C1 deviation {measured} exceeds 1.1 x declared {declared}")]
    SurgeryTooLarge { measured: f64, declared: f64 },
    #[error("zero vector")]
    ZeroVector,
    #[error("tangent left the strong cone at step {step} (margin {margin})")]
    ConeEscape { step: usize, margin: f64 },
    #[error("avoidance search failed at step {step}: {reason}")]
    SearchFailed { step: usize, reason: String },
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("disk growth stalled at step {step}: diameter {diameter} below bound {bound}")]
    GrowthStalled { step: usize, diameter: f64, bound: f64 },
    #[error("tolerance unreachable: truncation order {order} exceeds cap {cap}")]
    ToleranceUnreachable { order: usize, cap: usize },
    #[error("grid cell {cell} larger than rho/4 = {limit}")]
    ResolutionTooCoarse { cell: f64, limit: f64 },
    #[error("disk boundary too close to target: {distance} <= {limit}")]
    BoundaryTooClose { distance: f64, limit: f64 },
    #[error("degree unsupported in dimension {0}")]
    UnsupportedDimension(usize),
    #[error("Newton inversion failed to converge (residual {residual})")]
    InverseFailed { residual: f64 },
    #[error("recipe error at line {line}: {message}")]
    Recipe { line: usize, message: String },
    #[error("io: {0}")]
    Io(String),
    #[error("format: {0}")]
    Format(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
