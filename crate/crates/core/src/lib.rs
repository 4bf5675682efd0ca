//! Bathymetric reconstruction from forward-looking sonar imagery with a
//! neural heightmap and a differentiable sonar renderer.

pub mod dataset;
pub mod encoding;
pub mod evalcli;
pub mod error;
pub mod field;
pub mod geometry;
pub mod gradnet;
pub mod model;
pub mod raster;
pub mod renderer;
pub mod simulator;
pub mod trainer;

pub use error::{Error, Result};
