//! Camera-motion blur synthesis with saturated light streaks, and a
//! scale-recurrent deblurring graph (EASRN) with its losses and metrics.
//!
//! The crate is organized bottom-up:
//!
//! * [`image`] holds [`ImagePlane`], the channel-planar `f64` container used for
//!   pixels and feature maps alike.
//! * [`trajectory`], [`blur`] and [`streaks`] produce blurred/sharp training pairs.
//! * [`pyramid`] builds the Gaussian pyramids the network and losses run over.
//! * [`graph`] evaluates the deblurring network forward and backward.
//! * [`losses`] and [`metrics`] score outputs against ground truth.
//!
//! With the default `parallel` feature, inner loops run on rayon. Without it,
//! every loop runs sequentially and produces bit-identical results.

pub mod blur;
pub mod error;
pub mod gradcheck;
pub mod graph;
pub mod image;
pub mod losses;
pub mod metrics;
mod par;
pub mod pyramid;
pub mod seed;
pub mod streaks;
pub mod trajectory;

pub use error::{Error, Result};
pub use image::ImagePlane;
