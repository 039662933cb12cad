//! Accelerated controllable diffusion sampling for undersampled Cartesian
//! MRI: the predictor-projector-noisor (PPN) sampler, the DDPM/DDIM steps it
//! builds on, projection- and gradient-guided baselines, closed-form
//! denoisers, image metrics, and a benchmark harness.

pub mod denoiser;
pub mod error;
pub mod harness;
pub mod image;
pub mod io;
pub mod kspace;
pub mod metrics;
pub mod samplers;
pub mod schedule;

pub use error::{Error, Result};
pub use image::Image;
