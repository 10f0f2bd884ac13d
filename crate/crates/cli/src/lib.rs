//! Command-line front end: scenario loading, sweeps, rate regions, precoder
//! optimization, size extrapolation and the acceptance suite.

pub mod args;
pub mod commands;
pub mod output;
pub mod region;
pub mod validate;
