pub mod adversarial;
pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod data;
pub mod error;
pub mod fusion;
pub mod io;
pub mod metrics;
pub mod network;
pub mod nn;
pub mod optim;
pub mod rng;
pub mod spectral;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
