//! Large-system sum-rate of correlated MIMO multiple-access channels with
//! multi-antenna interferers, via the replica fixed point, with linear
//! precoder design and a finite-size Monte-Carlo cross-check.

pub mod channel;
pub mod error;
pub mod linalg;
pub mod mc_oracle;
pub mod precoder;
pub mod quadrature;
pub mod replica;
pub mod rng;
pub mod scenario;
pub mod su_channel;

pub use error::{Error, Result};
