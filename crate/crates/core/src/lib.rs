//! Coprime residue sets, generalized Ramanujan sums and the recursive
//! construction of measures with Fourier decay on inhomogeneous
//! well-approximable sets.

pub mod arith;
pub mod artifact;
pub mod builder;
pub mod bump;
pub mod cells;
#[cfg(feature = "cli")]
pub mod cli;
pub mod config;
pub mod decay;
pub mod density;
pub mod error;
pub mod profile;
pub mod run;
pub mod series;

pub use error::{Error, Result};
