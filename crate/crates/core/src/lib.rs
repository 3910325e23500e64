//! Design and verification of mean-square optimal coherent quantum
//! observers for linear quantum plants.
//!
//! Everything here is pure computation over dense real matrices and runs
//! without `std`; file formats and the command line live in the `cqf`
//! crate.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod analysis;
pub mod error;
pub mod matops;
pub mod model;
pub mod optimizer;
pub mod oracle;
pub mod weyl;

pub use error::{Error, Result, Subsystem, Violation};
pub use matops::Mat;
