//! Matrix-free flexible Krylov solvers for ℓp-regularized linear inverse problems.
//!
//! The crate is organized around a small [`linop::LinearOperator`] contract.
//! On top of it sit the flexible Golub-Kahan and flexible Arnoldi processes
//! ([`decomp`]), the projected Tikhonov kernels ([`projsolve`]), the iteration
//! drivers ([`solvers`]), automatic regularization-parameter selection
//! ([`regparam`]), iteratively-reweighted diagonal preconditioners
//! ([`weights`]), orthonormal Haar transforms for wavelet-domain sparsity
//! ([`transforms`]), reference solvers for comparisons ([`baselines`]), and a
//! reproducible test-problem suite ([`problems`]).

pub mod baselines;
pub mod decomp;
mod error;
pub mod linop;
pub mod problems;
pub mod projsolve;
pub mod regparam;
mod rng;
pub mod solvers;
pub mod transforms;
pub mod weights;

pub use error::{Error, Result};
