//! Beacon collision modelling for dense multi-storey residential Wi-Fi.

pub mod analysis;
pub mod beaconsim;
pub mod cli;
pub mod conditions;
pub mod config;
pub mod error;
pub mod layout;
pub mod mitigation;
pub mod propagation;

pub use error::{Error, Result};
