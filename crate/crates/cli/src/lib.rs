//! Batch front-end for the deblurring toolkit: dataset generation with
//! replayable manifests, network inference from a weight file, and paired
//! PSNR/SSIM evaluation.

pub mod dataset;
pub mod deblur;
pub mod error;
pub mod eval;
pub mod imageio;
pub mod manifest;

pub use error::{CliError, Result};
