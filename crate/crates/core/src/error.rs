//! Error types shared across the crate.

use core::fmt;

/// Errors raised by manifold operations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ManifoldError {
    /// The tangent basis B(x) is undefined near -e1 beyond the fallback cone.
    DegenerateBasis,
    /// boxminus requested for a pair of (nearly) antipodal points.
    AntipodalPoints,
}

impl fmt::Display for ManifoldError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ManifoldError::DegenerateBasis => write!(f, "degenerate tangent basis"),
            ManifoldError::AntipodalPoints => write!(f, "antipodal points on S2"),
        }
    }
}

/// Errors raised by the dynamics and filter layers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DynamicsError {
    /// Mass matrix condition number exceeded the guard threshold.
    SingularMass { cond: f64 },
}

impl fmt::Display for DynamicsError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DynamicsError::SingularMass { cond } => {
                write!(f, "singular mass matrix (condition number {cond:.3e})")
            }
        }
    }
}

/// Errors raised by the filter update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FilterError {
    /// Mass matrix became singular during prediction.
    SingularMass { cond: f64 },
    /// Measurement residual failed the (optional) Mahalanobis gate.
    InnovationGateExceeded { distance: f64, gate: f64 },
}

impl From<DynamicsError> for FilterError {
    fn from(e: DynamicsError) -> Self {
        match e {
            DynamicsError::SingularMass { cond } => FilterError::SingularMass { cond },
        }
    }
}

impl fmt::Display for FilterError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FilterError::SingularMass { cond } => {
                write!(f, "singular mass matrix (condition number {cond:.3e})")
            }
            FilterError::InnovationGateExceeded { distance, gate } => {
                write!(f, "innovation gate exceeded ({distance:.3} > {gate:.3})")
            }
        }
    }
}

/// Errors raised by the observability rank computation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RankError {
    /// Singular-value gap at the computed rank is too small to trust.
    IllConditioned { gap: f64, tol: f64 },
}

impl fmt::Display for RankError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RankError::IllConditioned { gap, tol } => {
                write!(f, "ambiguous numeric rank (gap {gap:.3e}, tol {tol:.3e})")
            }
        }
    }
}
