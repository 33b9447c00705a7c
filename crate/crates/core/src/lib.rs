//! Soft-robust policy optimization under reward uncertainty.
//!
//! The crate is `no_std` (it needs `alloc`) and contains the numerical core:
//! risk measures over discrete distributions, linear reward posteriors and
//! their preference-based inference, the benchmark environments, a small
//! hand-differentiated MLP policy, and the BROIL policy-gradient optimizers.
//! File formats, the CLI, and sweep orchestration live in the `broil` crate.
#![no_std]
#![deny(unsafe_code)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod broil;
pub mod env;
mod error;
pub mod eval;
pub mod policy;
pub mod posterior;
pub mod risk;
pub mod rng;

pub use error::{Error, Result};
