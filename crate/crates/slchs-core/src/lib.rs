//! Classical numerics for OU-driven quadratic ODEs: Carleman linearization,
//! exact Ornstein–Uhlenbeck sampling, LCHS kernel quadrature, Monte-Carlo
//! truncated Dyson series and the probabilistic error calculators that tie
//! them together.
//!
//! The crate is `no_std` (with `alloc`); file formats, the CLI and parallel
//! drivers live in the companion `slchs-cli` crate.

#![no_std]

extern crate alloc;

pub mod carleman;
pub mod complexity;
pub mod dyson_mc;
pub mod error;
pub mod lchs;
pub mod numerics;
pub mod ou;
pub mod quadratic_sde;
pub mod rng;
pub mod stats;
pub mod tail_bounds;

pub use error::{Error, Result};
pub use numerics::{DenseMatrix, LyapunovMetric, RealMatrix, RealVector};
pub use num_complex::Complex64;
