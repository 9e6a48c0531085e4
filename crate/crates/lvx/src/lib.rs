//! Numerical toolkit for stochastic space–time Volterra equations driven by
//! Lévy bases: condition checks, deterministic moment-bound equations and
//! Monte Carlo path simulation.

pub mod error;
pub mod kernels;
pub mod levy_basis;
pub mod quadrature;
pub mod rng;
pub mod simulator;
pub mod special;
pub mod volterra;
pub mod wellposedness;

pub use error::{Error, Result};
