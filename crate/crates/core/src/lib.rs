//! Particle systems with mean-field interaction, driven by Brownian or
//! fractional noise, and tools to measure how fast they decorrelate.

pub mod bounds;
pub mod config;
pub mod drift;
pub mod dynamics;
pub mod error;
pub mod exec;
pub mod geometry;
pub mod grid;
pub mod kernels;
pub mod measure;
pub mod noise;
pub mod rng;
pub mod stats;

pub use config::SimConfig;
pub use error::{Error, Result};
pub use exec::Execution;
pub use grid::TimeGrid;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
