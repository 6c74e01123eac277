//! Numerical kernel for random walks of linear cocycles with values in `SL(n, R)`.
//!
//! The crate is `no_std` (it needs `alloc`) and contains every algorithm of the
//! laboratory: Cartan and Iwasawa decompositions, root and weight functionals,
//! flag-variety geometry, stable accumulation of long matrix products, Lyapunov
//! spectra and flags, block-conformality statistics and stationary measures on the
//! flag variety. File formats, orchestration and the command line live in the
//! `cocycle-lab` crate.
//!
//! Conventions used throughout:
//!
//! - Matrices are dense, row-major, `f64` ([`Mat`]).
//! - Root indices are 1-based, `1..=n-1`, matching the usual labelling of the
//!   simple roots of type `A_{n-1}`.
//! - A [`FullFlag`] is stored as an orthonormal basis; level `i` is the span of the
//!   first `i` basis vectors.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

mod error;
pub mod linalg;
mod math;

pub mod boundary;
pub mod catalog;
pub mod liegroup;
pub mod oseledets;
pub mod rng;
pub mod stats;
pub mod stationary;
pub mod structure;
pub mod walk;

pub use boundary::{FullFlag, PartialFlagPoint};
pub use error::{Error, Result};
pub use oseledets::{BlockDecomposition, FlagEstimate, LyapunovReport};
pub use walk::{CocycleSystem, Orientation, ProductAccumulator, Word};
pub use liegroup::{CartanTriple, GroupElement, ParabolicSpec, WeylElement, WeylLabel};
pub use linalg::Mat;
pub use stationary::{MeasureCloud, RegularityReport};
pub use structure::{ConformalityReport, Tightness, TransversalityReport};



