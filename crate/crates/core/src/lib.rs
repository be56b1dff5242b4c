//! Reservoir computing with residual reservoir memory networks.
//!
//! The crate provides the leaky ESN, residual ESN, reservoir memory network
//! and their composition, a linear stability toolkit for the composed model,
//! a ridge readout, dataset loaders and a random-search experiment runner.

pub mod data;
pub mod error;
pub mod experiment;
pub mod linalg;
pub mod readout;
pub mod reservoir;
pub mod stability;

pub use error::{Error, ErrorClass, Result};
