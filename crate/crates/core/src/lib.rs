//! Differentiable radar Gaussian splatting for planar radar-inertial odometry.
//!
//! The crate renders range-azimuth (RA) and range-Doppler (RD) images from a
//! scene of 2D Gaussians, differentiates image losses analytically with
//! respect to sensor poses and the scene, and uses those gradients in a
//! keyframe backend (pose refinement, mapping, bundle adjustment) on top of a
//! Doppler/gyro dead-reckoning frontend. A synthetic simulator and APE
//! evaluation close the loop.

pub mod backend;
pub mod error;
pub mod eval;
pub mod frame;
pub mod frontend;
pub mod image;
pub mod io;
pub mod kv;
pub mod loss;
pub mod model;
pub mod pipeline;
pub mod render;
pub mod scene;
pub mod sim;

pub use error::{Error, Result};
