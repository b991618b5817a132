//! Experiment runner, synthetic data and CSV artifacts for the implicit
//! layer library.

pub mod config;
pub mod data;
pub mod experiments;
pub mod io;
