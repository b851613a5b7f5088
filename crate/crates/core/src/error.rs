use thiserror::Error;

/// Everything that can go wrong while building rules or evaluating operators.
#[derive(Debug, Error)]
pub enum DbarError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("point outside the closed polydisc: {0}")]
    OutOfDomain(String),
    #[error("point at distance {distance:e} from the unit circle is inside the margin {margin:e}; move inward or lower the margin")]
    NearBoundary { distance: f64, margin: f64 },
    #[error("finite-difference stencil leaves the polydisc (coordinate {index}, step {step:e})")]
    StencilOutOfDomain { index: usize, step: f64 },
    #[error("point lies on a sector boundary: |z_{i}| and |z_{j}| differ by {gap:e}")]
    SectorTie { i: usize, j: usize, gap: f64 },
    #[error("resource guard: {0}")]
    ResourceGuard(String),
    #[error("calibration ambiguous: {0}")]
    CalibrationAmbiguous(String),
    #[error("calibration failed: best max error {best:e} exceeds tolerance {tol:e}")]
    CalibrationFailed { best: f64, tol: f64 },
    #[error("form is not dbar-closed: components {i} and {j} disagree")]
    ClosednessViolation { i: usize, j: usize },
    #[error("smoothness tag is `unknown`; principal-value integral refused")]
    UnknownSmoothness,
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, DbarError>;
