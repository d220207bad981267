//! Virtual smart metering for district heating networks with a heterogeneous
//! spatial-temporal graph neural network.

pub mod data;
pub mod harness;
pub mod model;
pub mod nn;
mod error;
pub mod parallel;
pub mod sim;
pub mod verify;

pub use error::{Error, Result};
