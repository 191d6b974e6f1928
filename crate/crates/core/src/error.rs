use thiserror::Error;

/// Every failure the library reports. Numerical failures and validation
/// failures are kept apart so drivers can map them to distinct exit codes.
#[derive(Debug, Error)]
pub enum Error {
    #[error("right-hand side has zero norm; use an absolute residue")]
    ZeroRhs,
    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("problem too large: {0}")]
    TooLarge(String),
    #[error("rank-one shifted operator is singular (alpha too small or not near a fold)")]
    SingularShiftedOperator,
    #[error("Jacobian is near singular (smallest modulus eigenvalue {lambda:.3e})")]
    NearSingularJacobian { lambda: f64 },
    #[error("transversality fails: <phi, gamma'> = {0:.3e}")]
    TransversalityFailure(f64),
    #[error("Newton corrector diverged after {iterations} iterations (residual {residual:.3e})")]
    NewtonDivergence { iterations: usize, residual: f64 },
    #[error("eigensolver did not converge: {0}")]
    EigenNonConvergence(String),
    #[error("singular linear system: {0}")]
    Singular(String),
    #[error("slopes ({ell_minus}, {ell_plus}) straddle lambda_1 = {lambda1} incorrectly for this seed")]
    EigenvalueStraddle { ell_minus: f64, ell_plus: f64, lambda1: f64 },
    #[error("orthant matrix adjacent to the slab is singular")]
    SingularAdjacent,
    #[error("grid mask is not connected ({components} components)")]
    DisconnectedDomain { components: usize },
    #[error("operator is not symmetric (max asymmetry {0:.3e})")]
    NotSymmetric(f64),
    #[error("bad format: {0}")]
    BadFormat(String),
    #[error("base point is not on the diagram: residue {0:.3e}")]
    SeedNotOnDiagram(f64),
    #[error("no initial solution found: {0}")]
    NoInitialSolution(String),
    #[error("seed is not near the critical set (|det DF| = {0:.3e})")]
    SeedNotNearCritical(f64),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Variant name, for diagnostics.
    pub fn name(&self) -> &'static str {
        match self {
            Error::ZeroRhs => "ZeroRhs",
            Error::NonFinite(_) => "NonFinite",
            Error::DimensionMismatch { .. } => "DimensionMismatch",
            Error::InvalidInput(_) => "InvalidInput",
            Error::TooLarge(_) => "TooLarge",
            Error::SingularShiftedOperator => "SingularShiftedOperator",
            Error::NearSingularJacobian { .. } => "NearSingularJacobian",
            Error::TransversalityFailure(_) => "TransversalityFailure",
            Error::NewtonDivergence { .. } => "NewtonDivergence",
            Error::EigenNonConvergence(_) => "EigenNonConvergence",
            Error::Singular(_) => "Singular",
            Error::EigenvalueStraddle { .. } => "EigenvalueStraddle",
            Error::SingularAdjacent => "SingularAdjacent",
            Error::DisconnectedDomain { .. } => "DisconnectedDomain",
            Error::NotSymmetric(_) => "NotSymmetric",
            Error::BadFormat(_) => "BadFormat",
            Error::SeedNotOnDiagram(_) => "SeedNotOnDiagram",
            Error::NoInitialSolution(_) => "NoInitialSolution",
            Error::SeedNotNearCritical(_) => "SeedNotNearCritical",
            Error::Io(_) => "Io",
        }
    }

    /// True for errors caused by bad input rather than by the numerics.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::DimensionMismatch { .. }
                | Error::InvalidInput(_)
                | Error::TooLarge(_)
                | Error::ZeroRhs
                | Error::DisconnectedDomain { .. }
                | Error::NotSymmetric(_)
                | Error::BadFormat(_)
                | Error::EigenvalueStraddle { .. }
                | Error::SeedNotOnDiagram(_)
                | Error::Io(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
