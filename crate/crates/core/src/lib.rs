//! Lightweight single-image super-resolution with 3D cube attention.
//!
//! The crate bundles a small differentiable tensor engine, the cube
//! attention blocks, full and lite model variants, a data pipeline with
//! bicubic degradation, a deterministic trainer, and Y-channel PSNR/SSIM
//! evaluation. The `cubeformer` binary drives everything from the
//! command line.

pub mod error;
pub mod blocks;
pub mod cli;
pub mod cube;
pub mod data;
pub mod gradcheck;
pub mod infer;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
