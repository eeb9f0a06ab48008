//! Part-based 3D composition over sparse latent voxel volumes.
//!
//! Meshes are painted into kept/dropped regions, encoded into sparse voxel
//! volumes carrying per-voxel features, filtered, placed, merged, and decoded
//! back to a watertight mesh. The [`bench`] module measures how composition
//! quality tracks placement.

pub mod bench;
pub mod decoder;
pub mod error;
pub mod geometry;
pub mod metrics;
pub mod scene;
pub mod segmentation;
pub mod session;
pub mod slat;
pub mod spatial;
pub mod voxel;

pub use error::{Error, Result};
