//! Shared helpers for integration tests: the finite-difference oracle and
//! deterministic fixtures.
//!
//! Each test binary compiles this module separately and uses a subset.
#![allow(dead_code)]

use lsg_core::generator::{
    build_toy_generator, standard_z, ExtendedLatent, GeneratorConfig, GeneratorHandle,
};
use lsg_core::image::ImageBuffer;
use lsg_core::perceptual::{build_random_extractor, FeatureExtractorConfig, FeatureExtractorHandle};
use lsg_core::rng::{stream, StreamTag};
use ndarray::Array3;
use rand::Rng;

/// Central finite difference of a scalar function of one perturbed value.
pub fn central_diff<F: Fn(f64) -> f64>(f: F, x: f64, step: f64) -> f64 {
    (f(x + step) - f(x - step)) / (2.0 * step)
}

/// Relative error with an absolute floor for near-zero gradients.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

pub fn toy_pair(
    resolution: usize,
    dim: usize,
    seed: u64,
) -> (GeneratorHandle, FeatureExtractorHandle) {
    let handle = build_toy_generator(&GeneratorConfig::toy(resolution, dim, seed)).unwrap();
    let fx = build_random_extractor(&FeatureExtractorConfig::slim(seed)).unwrap();
    (handle, fx)
}

/// An on-manifold code and its rendered image.
pub fn on_manifold(handle: &GeneratorHandle, seed: u64) -> (ExtendedLatent, ImageBuffer) {
    let mut rng = stream(seed, StreamTag::ZSamples);
    let w = handle
        .map_latent(&standard_z(handle.style_dim(), &mut rng))
        .unwrap();
    let latent = w.broadcast(handle.num_style_layers());
    let image = handle.synthesize(&latent, handle.noise()).unwrap();
    (latent, image)
}

pub fn random_image(side: usize, seed: u64) -> ImageBuffer {
    let mut rng = stream(seed, StreamTag::ZSamples);
    ImageBuffer::new(Array3::from_shape_simple_fn((side, side, 3), || {
        rng.gen_range(0.0..1.0)
    }))
    .unwrap()
}
