//! # specreg
//!
//! Spectral-regularization kernel learning.
//!
//! The crate covers the family of least-squares kernel estimators that
//! differ only in how they stabilize the inversion of the kernel matrix:
//!
//! - exact filtered estimators ([`filters`], [`exact`]): Tikhonov (KRLS),
//!   spectral cut-off (TSVD), Landweber iteration and plain KOLS;
//! - Nyström subsampling ([`nystrom`]) with an incremental regularization
//!   path in the number of centers, and gradient descent on the Nyström
//!   subspace with early stopping ([`nytro`]);
//! - random Fourier features ([`random_features`]) with an incremental path
//!   in the number of features;
//! - stochastic gradient methods with step-size schedules ([`sgm`]);
//! - a recursive least-squares classifier with class extension and
//!   recoding for imbalanced streams ([`rlsc`]).
//!
//! Model selection utilities live in [`selection`], datasets and synthetic
//! generators in [`data`], and model files in [`persist`].

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod data;
pub mod error;
pub mod exact;
pub mod filters;
pub mod kernels;
pub mod linalg;
pub mod nystrom;
pub mod nytro;
pub mod persist;
pub mod random_features;
pub mod rlsc;
pub mod selection;
pub mod sgm;

#[cfg(test)]
mod testutil;

pub use error::{Error, Result};
pub use exact::{DualModel, Predictor, PrimalModel};
pub use filters::FilterSpec;
pub use kernels::KernelSpec;
pub use linalg::{CholFactor, SymEig};
