//! Event-by-event simulation of a local hidden-variable model that reproduces
//! singlet-state statistics with inefficient detectors and lowered visibility.

pub mod analytic;
pub mod cli;
pub mod error;
pub mod experiments;
pub mod model;
pub mod montecarlo;
pub mod quadrature;

pub use error::{Error, Result};
