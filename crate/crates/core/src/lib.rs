//! Dense RGB-D reconstruction and non-rigid surface registration.
//!
//! The crate fuses depth and color frames into a sparse, block-hashed TSDF
//! volume while tracking the camera frame-to-model, and registers deforming
//! surfaces with an embedded deformation graph.

pub mod math;
pub mod image;
pub mod volume;
pub mod surface;
pub mod tracker;
pub mod dataset;
pub mod defgraph;
pub mod nonrigid;
pub mod config;
pub mod pipeline;
pub mod cli;
