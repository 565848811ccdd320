//! Embedding arbitrary images into the extended per-layer style space of a
//! layered style-based generator, by first-order optimization of a
//! perceptual + pixel loss, plus semantic operations on the recovered codes
//! (morphing, style crossover, expression transfer) and the stress
//! protocols that probe them.
//!
//! The crate is organized around the pipeline:
//!
//! - [`generator`]: the toy style-based generator, its latent types, and
//!   checkpoint I/O.
//! - [`perceptual`]: feature extraction, the combined embedding loss, and
//!   differentiable resize.
//! - [`embedder`]: the Adam optimization loop with initialization
//!   strategies, loss traces, and iterative re-embedding.
//! - [`latentops`]: morphing, crossover, expression directions, distances.
//! - [`stresslab`]: affine/defect/initialization stress suites and reports.
//!
//! Everything is deterministic: all randomness flows from explicit 64-bit
//! seeds, and repeated runs produce bit-identical results.

pub mod ckpt;
pub mod embedder;
pub mod error;
pub mod fingerprint;
pub mod generator;
pub mod image;
pub mod latentfile;
pub mod latentops;
pub mod nn;
pub mod perceptual;
pub mod rng;
pub mod stresslab;

pub use error::{Error, Result};
pub use image::ImageBuffer;
