use alloc::string::String;
use core::fmt;

/// Errors raised by the differentiation engine, the linear algebra kernels,
/// forward solvers and layers.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Operand shapes do not agree.
    ShapeMismatch {
        op: &'static str,
        expected: usize,
        found: usize,
    },
    /// A NaN or infinity was supplied or produced.
    NonFinite { context: &'static str },
    /// Reciprocal condition number below the singularity tolerance.
    SingularMatrix { rcond: f64 },
    /// Matrix expected symmetric deviates beyond tolerance.
    Asymmetric { deviation: f64 },
    /// A degree (diagonal of `D`) is at or below the degree floor.
    NonPositiveDegree { index: usize, value: f64 },
    /// Eigenvalue gap too small for the requested eigenvector to be a function.
    DegenerateSpectrum { gap: f64 },
    /// Iterative solver hit its iteration cap.
    NoConvergence { iterations: usize, residual: f64 },
    /// Constraint set appears empty.
    Infeasible,
    /// Sinkhorn input must be strictly positive.
    NonPositiveEntry { index: usize, value: f64 },
    /// All level-set samples share a sign.
    NoContour,
    /// Interpolation edge with equal endpoint values (or touching zero).
    DegenerateEdge,
    /// A vector that must be nonzero has zero norm.
    ZeroNorm,
    /// Forward solver returned a point that does not satisfy the residual.
    ResidualTooLarge { norm: f64, tol: f64 },
    /// Argument outside its documented domain.
    InvalidArgument(String),
}

pub type Result<T> = core::result::Result<T, Error>;

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::ShapeMismatch { op, expected, found } => {
                write!(f, "shape mismatch in {op}: expected {expected}, found {found}")
            }
            Error::NonFinite { context } => write!(f, "non-finite value in {context}"),
            Error::SingularMatrix { rcond } => {
                write!(f, "matrix is singular to working precision (rcond = {rcond:e})")
            }
            Error::Asymmetric { deviation } => {
                write!(f, "matrix is not symmetric (deviation {deviation:e})")
            }
            Error::NonPositiveDegree { index, value } => {
                write!(f, "degree {index} is not positive ({value:e})")
            }
            Error::DegenerateSpectrum { gap } => {
                write!(f, "degenerate spectrum: eigenvalue gap {gap:e}")
            }
            Error::NoConvergence { iterations, residual } => write!(
                f,
                "no convergence after {iterations} iterations (residual {residual:e})"
            ),
            Error::Infeasible => f.write_str("problem is infeasible"),
            Error::NonPositiveEntry { index, value } => {
                write!(f, "entry {index} is not strictly positive ({value:e})")
            }
            Error::NoContour => f.write_str("field has no sign change; contour is empty"),
            Error::DegenerateEdge => f.write_str("degenerate interpolation edge"),
            Error::ZeroNorm => f.write_str("vector has zero norm"),
            Error::ResidualTooLarge { norm, tol } => {
                write!(f, "forward residual {norm:e} exceeds tolerance {tol:e}")
            }
            Error::InvalidArgument(msg) => write!(f, "invalid argument: {msg}"),
        }
    }
}

impl core::error::Error for Error {}

pub(crate) fn check_len(op: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::ShapeMismatch { op, expected, found })
    }
}
