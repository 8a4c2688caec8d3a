//! Photometric depth optimization at desk scale.
//!
//! The crate renders small synthetic scenes, optimizes a per-pixel
//! log-depth grid against multi-view photometric consistency with a
//! baseline curriculum, and evaluates the result with image, edge and
//! point-cloud depth metrics.

pub mod curriculum;
pub mod depth;
pub mod error;
pub mod geometry;
pub mod grid;
pub mod image;
pub mod io;
pub mod loss;
pub mod metrics;
pub mod optim;
pub mod pose;
pub mod world;

pub use depth::DepthMap;
pub use error::{Error, Result};
pub use image::ImageBuffer;
