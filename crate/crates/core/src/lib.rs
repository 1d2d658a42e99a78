//! Simulation of Fourier modes of diagonal linear SPDEs driven by cylindrical
//! fractional Brownian motion, and least-squares estimation of the drift
//! coefficient from the observed modes.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod error;
pub mod estimator;
pub mod fbm;
pub mod model;
pub mod montecarlo;
pub mod rng;
pub mod simulate;
pub mod special;

pub use error::{Error, ErrorKind, Result};
