//! Layered style-based generator: mapping network, per-layer style-modulated
//! synthesis, a deterministic seeded toy instantiation, and checkpoint I/O.

mod synthesis;

use ndarray::{Array1, Array2, Array3};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::ckpt;
use crate::error::{Error, Result};
use crate::fingerprint::Fnv1a;
use crate::image::ImageBuffer;
use crate::nn;
use crate::rng::{stream, StreamTag};

pub use synthesis::{channels_at, layer_geometry, LayerGeometry};

use synthesis::{SynthesisTrace, SynthesisWeights, LEAKY_SLOPE};

/// Static configuration of a generator. The latent space Z and the style
/// space W share `style_dim` dimensions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub resolution: usize,
    pub style_dim: usize,
    pub mapping_layers: usize,
    pub base_channels: usize,
    pub channel_cap: usize,
    pub seed: u64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            resolution: 1024,
            style_dim: 512,
            mapping_layers: 3,
            base_channels: 32,
            channel_cap: 512,
            seed: 0,
        }
    }
}

impl GeneratorConfig {
    /// Small-channel preset for desk-scale experiments.
    pub fn toy(resolution: usize, style_dim: usize, seed: u64) -> Self {
        Self {
            resolution,
            style_dim,
            mapping_layers: 3,
            base_channels: 4,
            channel_cap: 32,
            seed,
        }
    }

    /// Number of style-modulation sites: two per resolution level above 2x2.
    pub fn num_style_layers(&self) -> usize {
        2 * (self.resolution.ilog2() as usize - 1)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.resolution.is_power_of_two() || self.resolution < 8 {
            return Err(Error::InvalidConfig(format!(
                "resolution must be a power of two >= 8, got {}",
                self.resolution
            )));
        }
        if self.style_dim == 0 {
            return Err(Error::InvalidConfig("style_dim must be positive".into()));
        }
        if self.mapping_layers == 0 {
            return Err(Error::InvalidConfig("mapping_layers must be >= 1".into()));
        }
        if self.base_channels == 0 || self.channel_cap < self.base_channels {
            return Err(Error::InvalidConfig(
                "base_channels must be positive and channel_cap >= base_channels".into(),
            ));
        }
        Ok(())
    }

    pub(crate) fn geometry(&self) -> Vec<LayerGeometry> {
        layer_geometry(self.resolution, self.base_channels, self.channel_cap)
    }
}

/// A point in the initial latent space Z.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentZ(pub Array1<f64>);

/// One style vector w in W.
#[derive(Debug, Clone, PartialEq)]
pub struct StyleVector(pub Array1<f64>);

impl StyleVector {
    /// Views this W code in the extended space: the same vector at every
    /// style layer.
    pub fn broadcast(&self, layers: usize) -> ExtendedLatent {
        let dim = self.0.len();
        let mut rows = Array2::zeros((layers, dim));
        for mut row in rows.rows_mut() {
            row.assign(&self.0);
        }
        ExtendedLatent { rows }
    }
}

/// An extended latent code: one style vector per layer (L x D).
#[derive(Debug, Clone, PartialEq)]
pub struct ExtendedLatent {
    rows: Array2<f64>,
}

impl ExtendedLatent {
    pub fn new(rows: Array2<f64>) -> Result<Self> {
        if !rows.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidConfig(
                "extended latent contains non-finite entries".into(),
            ));
        }
        Ok(Self { rows })
    }

    pub fn layers(&self) -> usize {
        self.rows.dim().0
    }

    pub fn dim(&self) -> usize {
        self.rows.dim().1
    }

    pub fn rows(&self) -> &Array2<f64> {
        &self.rows
    }

    pub fn rows_mut(&mut self) -> &mut Array2<f64> {
        &mut self.rows
    }

    pub fn into_rows(self) -> Array2<f64> {
        self.rows
    }
}

/// Fixed per-layer noise planes, regenerated from a seed and held constant
/// through any one embedding run.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseBundle {
    seed: u64,
    planes: Vec<Array2<f64>>,
}

impl NoiseBundle {
    pub fn generate(geometry: &[LayerGeometry], seed: u64) -> Self {
        let mut rng = stream(seed, StreamTag::Noise);
        let planes = geometry
            .iter()
            .map(|geo| {
                Array2::from_shape_simple_fn((geo.resolution, geo.resolution), || {
                    let v: f32 = rng.sample(StandardNormal);
                    f64::from(v)
                })
            })
            .collect();
        Self { seed, planes }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn planes(&self) -> &[Array2<f64>] {
        &self.planes
    }
}

/// An immutable loaded generator. Synthesis is a pure function of
/// (handle, latent, noise), so handles can be shared freely across jobs.
#[derive(Debug, Clone)]
pub struct GeneratorHandle {
    config: GeneratorConfig,
    mapping: Vec<nn::Linear>,
    synthesis: SynthesisWeights,
    noise: NoiseBundle,
}

/// Draws a standard-Gaussian Z sample from the given stream.
pub fn standard_z<R: Rng>(dim: usize, rng: &mut R) -> LatentZ {
    LatentZ(Array1::from_shape_simple_fn(dim, || {
        rng.sample::<f64, _>(StandardNormal)
    }))
}

/// Builds a deterministic toy generator. All weights come from a ChaCha
/// stream seeded by `config.seed`: zero-mean Gaussians with standard
/// deviation 1/sqrt(fan_in) (fan-in 1 for biases, constants, and noise
/// scales), drawn in checkpoint tensor order.
pub fn build_toy_generator(config: &GeneratorConfig) -> Result<GeneratorHandle> {
    config.validate()?;
    let geometry = config.geometry();
    let mut rng = stream(config.seed, StreamTag::GeneratorWeights);
    let mapping = synthesis::sample_mapping(&mut rng, config.style_dim, config.mapping_layers);
    let weights = synthesis::sample_synthesis(&mut rng, &geometry, config.style_dim);
    let noise = NoiseBundle::generate(&geometry, config.seed);
    Ok(GeneratorHandle {
        config: config.clone(),
        mapping,
        synthesis: weights,
        noise,
    })
}

impl GeneratorHandle {
    pub fn config(&self) -> &GeneratorConfig {
        &self.config
    }

    pub fn num_style_layers(&self) -> usize {
        self.config.num_style_layers()
    }

    pub fn resolution(&self) -> usize {
        self.config.resolution
    }

    pub fn style_dim(&self) -> usize {
        self.config.style_dim
    }

    pub fn noise(&self) -> &NoiseBundle {
        &self.noise
    }

    /// Maps a Z sample to a style vector through the fully connected
    /// network (leaky rectifier, slope 0.2, after every layer).
    pub fn map_latent(&self, z: &LatentZ) -> Result<StyleVector> {
        Ok(self.map_latent_traced(z)?.0)
    }

    pub(crate) fn map_latent_traced(&self, z: &LatentZ) -> Result<(StyleVector, MapCache)> {
        if z.0.len() != self.config.style_dim {
            return Err(Error::shape(
                format!("z of dim {}", self.config.style_dim),
                format!("{}", z.0.len()),
            ));
        }
        if !z.0.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidConfig("z contains non-finite entries".into()));
        }
        let mut x = z.0.clone();
        let mut pres = Vec::with_capacity(self.mapping.len());
        for layer in &self.mapping {
            let pre = layer.forward(&x);
            x = pre.clone();
            nn::leaky_relu_inplace(x.as_slice_mut().unwrap(), LEAKY_SLOPE);
            pres.push(pre);
        }
        Ok((StyleVector(x), MapCache { pres }))
    }

    /// Gradient of `sum(grad_w * map_latent(z))` with respect to `z`.
    pub fn map_latent_grad(&self, z: &LatentZ, grad_w: &Array1<f64>) -> Result<Array1<f64>> {
        let (_, cache) = self.map_latent_traced(z)?;
        Ok(self.map_backward(&cache, grad_w.clone()))
    }

    pub(crate) fn map_backward(&self, cache: &MapCache, mut grad: Array1<f64>) -> Array1<f64> {
        for (layer, pre) in self.mapping.iter().zip(&cache.pres).rev() {
            nn::leaky_relu_backward_inplace(
                grad.as_slice_mut().unwrap(),
                pre.as_slice().unwrap(),
                LEAKY_SLOPE,
            );
            grad = layer.backward_input(&grad);
        }
        grad
    }

    /// Monte-Carlo estimate of the mean style vector over `num_samples`
    /// standard-Gaussian Z draws from the seeded stream.
    pub fn mean_latent(&self, num_samples: usize, seed: u64) -> Result<StyleVector> {
        if num_samples == 0 {
            return Err(Error::InvalidConfig("num_samples must be >= 1".into()));
        }
        let mut rng = stream(seed, StreamTag::MeanEstimate);
        let mut acc = Array1::<f64>::zeros(self.config.style_dim);
        for _ in 0..num_samples {
            let z = standard_z(self.config.style_dim, &mut rng);
            acc += &self.map_latent(&z)?.0;
        }
        Ok(StyleVector(acc / num_samples as f64))
    }

    fn validate_synthesis_inputs(&self, latent: &ExtendedLatent, noise: &NoiseBundle) -> Result<()> {
        let layers = self.num_style_layers();
        if latent.layers() != layers || latent.dim() != self.config.style_dim {
            return Err(Error::shape(
                format!("latent {}x{}", layers, self.config.style_dim),
                format!("{}x{}", latent.layers(), latent.dim()),
            ));
        }
        if !latent.rows().iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidConfig(
                "latent contains non-finite entries".into(),
            ));
        }
        let geometry = self.config.geometry();
        if noise.planes.len() != layers {
            return Err(Error::shape(
                format!("{layers} noise planes"),
                format!("{}", noise.planes.len()),
            ));
        }
        for (geo, plane) in geometry.iter().zip(&noise.planes) {
            if plane.dim() != (geo.resolution, geo.resolution) {
                return Err(Error::shape(
                    format!("noise plane {0}x{0}", geo.resolution),
                    format!("{}x{}", plane.dim().0, plane.dim().1),
                ));
            }
        }
        Ok(())
    }

    /// Renders an extended latent with the given noise. The network's native
    /// [-1,1] range is mapped affinely to the public [0,1] range.
    pub fn synthesize(&self, latent: &ExtendedLatent, noise: &NoiseBundle) -> Result<ImageBuffer> {
        self.validate_synthesis_inputs(latent, noise)?;
        let native = synthesis::forward(&self.synthesis, latent.rows(), &noise.planes, None);
        Ok(native_to_image(&native))
    }

    /// Forward pass that keeps the activations needed for a backward pass.
    pub fn synthesize_traced(
        &self,
        latent: &ExtendedLatent,
        noise: &NoiseBundle,
    ) -> Result<SynthesisRun> {
        self.validate_synthesis_inputs(latent, noise)?;
        let mut trace = synthesis::new_trace();
        let native = synthesis::forward(
            &self.synthesis,
            latent.rows(),
            &noise.planes,
            Some(&mut trace),
        );
        Ok(SynthesisRun {
            image: native_to_image(&native),
            trace,
        })
    }

    /// Writes the checkpoint container (manifest + f32 blobs).
    pub fn save_checkpoint(&self, dir: impl AsRef<Path>) -> Result<()> {
        let mut w = ckpt::Writer::new(dir);
        for (i, layer) in self.mapping.iter().enumerate() {
            w.add(
                &format!("mapping.fc{i}.weight"),
                &[layer.out_dim(), layer.in_dim()],
                layer.weight.iter().map(|&v| v as f32),
            );
            w.add(
                &format!("mapping.fc{i}.bias"),
                &[layer.out_dim()],
                layer.bias.iter().map(|&v| v as f32),
            );
        }
        let s = &self.synthesis;
        let cd = s.constant.dim();
        w.add(
            "synthesis.const",
            &[cd.0, cd.1, cd.2],
            s.constant.iter().map(|&v| v as f32),
        );
        for (i, layer) in s.layers.iter().enumerate() {
            let kd = layer.conv_weight.dim();
            w.add(
                &format!("synthesis.layer{i}.conv.weight"),
                &[kd.0, kd.1, kd.2, kd.3],
                layer.conv_weight.iter().map(|&v| v as f32),
            );
            w.add(
                &format!("synthesis.layer{i}.conv.bias"),
                &[kd.0],
                layer.conv_bias.iter().map(|&v| v as f32),
            );
            let sd = layer.style_weight.dim();
            w.add(
                &format!("synthesis.layer{i}.style.weight"),
                &[sd.0, sd.1],
                layer.style_weight.iter().map(|&v| v as f32),
            );
            w.add(
                &format!("synthesis.layer{i}.style.bias"),
                &[sd.0],
                layer.style_bias.iter().map(|&v| v as f32),
            );
            w.add(
                &format!("synthesis.layer{i}.noise_scale"),
                &[1],
                [layer.noise_scale as f32],
            );
        }
        let rd = s.rgb_weight.dim();
        w.add(
            "synthesis.to_rgb.weight",
            &[rd.0, rd.1],
            s.rgb_weight.iter().map(|&v| v as f32),
        );
        w.add(
            "synthesis.to_rgb.bias",
            &[3],
            s.rgb_bias.iter().map(|&v| v as f32),
        );
        w.finish("generator", serde_json::to_value(&self.config)?)
    }

    /// FNV-1a fingerprint of every weight tensor in checkpoint order.
    pub fn weight_fingerprint(&self) -> u64 {
        let mut h = Fnv1a::new();
        for layer in &self.mapping {
            for &v in layer.weight.iter().chain(layer.bias.iter()) {
                h.write_f32(v as f32);
            }
        }
        let s = &self.synthesis;
        for &v in s.constant.iter() {
            h.write_f32(v as f32);
        }
        for layer in &s.layers {
            for &v in layer
                .conv_weight
                .iter()
                .chain(layer.conv_bias.iter())
                .chain(layer.style_weight.iter())
                .chain(layer.style_bias.iter())
            {
                h.write_f32(v as f32);
            }
            h.write_f32(layer.noise_scale as f32);
        }
        for &v in s.rgb_weight.iter().chain(s.rgb_bias.iter()) {
            h.write_f32(v as f32);
        }
        h.finish()
    }
}

/// Loads a generator checkpoint and regenerates its noise bundle from the
/// stored seed.
pub fn load_checkpoint(dir: impl AsRef<Path>) -> Result<GeneratorHandle> {
    let r = ckpt::Reader::open(dir)?;
    if r.model() != "generator" {
        return Err(Error::CorruptManifest(format!(
            "expected a generator checkpoint, found model `{}`",
            r.model()
        )));
    }
    let config: GeneratorConfig = serde_json::from_value(r.config().clone())
        .map_err(|e| Error::CorruptManifest(format!("bad config: {e}")))?;
    config.validate()?;
    let d = config.style_dim;

    let mut mapping = Vec::with_capacity(config.mapping_layers);
    for i in 0..config.mapping_layers {
        let weight = r.tensor(&format!("mapping.fc{i}.weight"), &[d, d])?;
        let bias = r.tensor(&format!("mapping.fc{i}.bias"), &[d])?;
        mapping.push(nn::Linear {
            weight: Array2::from_shape_vec((d, d), weight.iter().map(|&v| f64::from(v)).collect())
                .unwrap(),
            bias: Array1::from_vec(bias.iter().map(|&v| f64::from(v)).collect()),
        });
    }

    let geometry = config.geometry();
    let c0 = geometry[0].in_channels;
    let constant = r.tensor("synthesis.const", &[c0, 4, 4])?;
    let constant =
        Array3::from_shape_vec((c0, 4, 4), constant.iter().map(|&v| f64::from(v)).collect())
            .unwrap();

    let mut layers = Vec::with_capacity(geometry.len());
    for (i, geo) in geometry.iter().enumerate() {
        let (ci, co) = (geo.in_channels, geo.out_channels);
        let conv_weight = r.tensor(&format!("synthesis.layer{i}.conv.weight"), &[co, ci, 3, 3])?;
        let conv_bias = r.tensor(&format!("synthesis.layer{i}.conv.bias"), &[co])?;
        let style_weight = r.tensor(&format!("synthesis.layer{i}.style.weight"), &[2 * co, d])?;
        let style_bias = r.tensor(&format!("synthesis.layer{i}.style.bias"), &[2 * co])?;
        let noise_scale = r.tensor(&format!("synthesis.layer{i}.noise_scale"), &[1])?;
        layers.push(synthesis::SynthesisLayerWeights {
            conv_weight: ndarray::Array4::from_shape_vec(
                (co, ci, 3, 3),
                conv_weight.iter().map(|&v| f64::from(v)).collect(),
            )
            .unwrap(),
            conv_bias: Array1::from_vec(conv_bias.iter().map(|&v| f64::from(v)).collect()),
            style_weight: Array2::from_shape_vec(
                (2 * co, d),
                style_weight.iter().map(|&v| f64::from(v)).collect(),
            )
            .unwrap(),
            style_bias: Array1::from_vec(style_bias.iter().map(|&v| f64::from(v)).collect()),
            noise_scale: f64::from(noise_scale[0]),
        });
    }

    let c_last = geometry.last().unwrap().out_channels;
    let rgb_weight = r.tensor("synthesis.to_rgb.weight", &[3, c_last])?;
    let rgb_bias = r.tensor("synthesis.to_rgb.bias", &[3])?;

    let noise = NoiseBundle::generate(&geometry, config.seed);
    Ok(GeneratorHandle {
        config,
        mapping,
        synthesis: SynthesisWeights {
            constant,
            layers,
            rgb_weight: Array2::from_shape_vec(
                (3, c_last),
                rgb_weight.iter().map(|&v| f64::from(v)).collect(),
            )
            .unwrap(),
            rgb_bias: Array1::from_vec(rgb_bias.iter().map(|&v| f64::from(v)).collect()),
        },
        noise,
    })
}

/// Mapping-network activations cached for the backward pass.
pub(crate) struct MapCache {
    pres: Vec<Array1<f64>>,
}

/// A traced synthesis: the rendered image plus everything needed to push a
/// gradient back to the latent.
pub struct SynthesisRun {
    image: ImageBuffer,
    trace: SynthesisTrace,
}

impl SynthesisRun {
    pub fn image(&self) -> &ImageBuffer {
        &self.image
    }

    /// Gradient of a scalar loss with respect to the latent rows, given the
    /// loss gradient with respect to the public [0,1] image (H x W x 3).
    pub fn grad_latent(&self, handle: &GeneratorHandle, grad_image: &Array3<f64>) -> Array2<f64> {
        let (h, w, _) = grad_image.dim();
        // Public image = (native + 1) / 2, so the chain factor is 0.5.
        let mut grad_native = Array3::zeros((3, h, w));
        for y in 0..h {
            for x in 0..w {
                for c in 0..3 {
                    grad_native[[c, y, x]] = 0.5 * grad_image[[y, x, c]];
                }
            }
        }
        synthesis::backward(&handle.synthesis, &self.trace, &grad_native)
    }
}

fn native_to_image(native: &Array3<f64>) -> ImageBuffer {
    let (_, h, w) = native.dim();
    let mut data = Array3::zeros((h, w, 3));
    for y in 0..h {
        for x in 0..w {
            for c in 0..3 {
                data[[y, x, c]] = (native[[c, y, x]] + 1.0) * 0.5;
            }
        }
    }
    ImageBuffer::new(data).expect("synthesis output is square")
}

#[cfg(test)]
mod tests;
