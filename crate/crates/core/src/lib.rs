//! Personalized coupled tensor decomposition.
//!
//! Each dataset `Y_k` is modeled as a multilinearly degraded copy of a shared
//! low-rank tensor `C` plus a dataset-specific low-rank tensor `D_k`:
//!
//! ```text
//! Y_k = C x_1 P_k1 x_2 P_k2 x_3 P_k3 + D_k (+ noise)
//! ```
//!
//! The crate provides the dense tensor primitives, a multi-start CPD solver,
//! recoverability checkers, a semi-algebraic solver and a coupled
//! alternating-least-squares solver, plus synthetic data generation for
//! experiments.

pub mod coupled_als;
pub mod cpd;
pub mod datagen;
pub mod error;
pub mod io;
pub mod model;
pub mod numerics;
pub mod rng;
pub mod semialg;
pub mod tensor;
pub mod uniqueness;

pub use error::{Error, Result};
pub use tensor::{khatri_rao, CpdFactors, Matrix, Tensor3};
