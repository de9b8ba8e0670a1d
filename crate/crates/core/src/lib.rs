//! Simulation and verification toolkit for a force-driven tracer moving
//! through a one-dimensional medium of sticky and elastic neutral particles.

pub mod config;
pub mod decomposition;
pub mod environment;
pub mod error;
pub mod exact;
pub mod experiments;
pub mod model;
pub mod modified;
pub mod numerics;
pub mod oracle;
pub mod stats;

pub use error::{Error, Result};
