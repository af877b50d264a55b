use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("no perturbation direction: [Re X, Im X] vanishes")]
    NoDirection,
    #[error("numerical failure: {0}")]
    Numerical(String),
}

/// Why the rank-deficiency problem has no solution at a given `s`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InfeasibleReason {
    /// `Λ^β` has full column rank, so no candidate null vector exists.
    BetaFullRank,
    /// Every null vector of `Λ^β` vanishes on the perturbable columns.
    NoPerturbableComponent,
}

impl std::fmt::Display for InfeasibleReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            InfeasibleReason::BetaFullRank => {
                write!(f, "the unperturbed rows have full column rank (rank(Λ^β) = n+p)")
            }
            InfeasibleReason::NoPerturbableComponent => {
                write!(f, "every null vector of the unperturbed rows vanishes on the perturbable columns (Q₂^α = 0)")
            }
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolveError {
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("system: {0}")]
    System(String),
    #[error("pattern: {0}")]
    Pattern(String),
    #[error("infeasible at this s: {0}")]
    Infeasible(InfeasibleReason),
    #[error("problem infeasible for this pattern: {0}")]
    InfeasiblePattern(String),
    #[error("witness search failed: {0}")]
    WitnessSearch(String),
    #[error("epsilon scaling out of double range ({0}); use a larger epsilon")]
    EpsilonRange(String),
    #[error("not converged: {0}")]
    NotConverged(String),
}
