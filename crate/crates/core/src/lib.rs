//! Minimum-norm perturbations that give a discrete LTI system an invariant
//! zero, under structured (row/column) and affine (cell) sparsity patterns.

pub mod affine;
pub mod error;
pub mod linalg;
pub mod optim;
pub mod pencil;
pub mod sparsity;
pub mod structured;
pub mod system;

pub use error::{InfeasibleReason, LinalgError, SolveError};
pub use num_complex::Complex64;
pub use pencil::PencilZeros;
pub use sparsity::{AffinePattern, SparsityPattern, StructuredPattern};
pub use structured::{StructuredConfig, StructuredSolution};
pub use system::{StateSpaceSystem, SubspaceBasis};

#[cfg(feature = "parallel")]
pub(crate) fn par_map<T: Sync, U: Send>(items: &[T], f: impl Fn(&T) -> U + Sync + Send) -> Vec<U> {
    use rayon::prelude::*;
    items.par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub(crate) fn par_map<T: Sync, U: Send>(items: &[T], f: impl Fn(&T) -> U + Sync + Send) -> Vec<U> {
    items.iter().map(f).collect()
}
