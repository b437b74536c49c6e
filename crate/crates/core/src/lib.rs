//! Numerical toolkit for stabilization of closed sets in passive
//! control-affine systems: Lie calculus on smooth maps, trajectory
//! integration, limit-set estimation, and empirical checks of stability,
//! attractivity, reduction and detectability properties.

pub mod calculus;
pub mod detectability;
pub mod domain;
pub mod error;
pub mod integrate;
pub mod limitsets;
pub mod passivity;
pub mod reduction;
pub mod scenarios;
pub mod stability;

pub use error::{Error, Result};
