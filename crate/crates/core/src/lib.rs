//! Style-disentangling jigsaw transform, style statistics, software
//! rasterization, UV style baking and attention kernels for reference-guided
//! 3D texture stylization.

pub mod attention;
pub mod bake;
pub mod camera;
pub mod config;
pub mod dataset;
pub mod image;
pub mod jigsaw;
pub mod mesh;
pub mod metrics;
pub mod numeric;
pub mod raster;
pub mod rng;
pub mod roundtrip;
pub mod spatial;
pub mod texture;
