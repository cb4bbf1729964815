//! ergolab: a numerical laboratory for ergodicity of Metropolis-type
//! Markov chains on the real line.
//!
//! The library provides heavy-tailed and convex-potential target families,
//! random walk and guided walk Metropolis kernels, dense grid
//! discretizations of their transition operators, and a set of diagnostics
//! (drift ratios, TV decay rates, couplings, displacement exponents).

pub mod error;
pub mod numerics;
pub mod targets;
pub mod kernels;
pub mod operator;
pub mod diagnostics;
pub mod config;

pub use error::{Error, Result};
