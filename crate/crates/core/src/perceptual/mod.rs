//! Multi-scale feature extraction and the embedding loss.
//!
//! The extractor mirrors the tap points of a standard convolutional
//! classifier: two stages at full input resolution, one at 1/4, one at
//! 1/8. Weights come either from a checkpoint (same container format as
//! the generator) or from a seeded random stream; random deep features
//! still define a smooth metric, which is all the desk-scale tests rely
//! on.

mod resize;

pub use resize::{resize, resize_grad};

use ndarray::{Array1, Array3, Array4};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::ckpt;
use crate::error::{Error, Result};
use crate::image::ImageBuffer;
use crate::nn;
use crate::rng::{stream, StreamTag};

pub const NUM_STAGES: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureExtractorConfig {
    /// Channels of the four tap points.
    pub channels: [usize; 4],
    /// Channels of the intermediate convolution inside stage 3.
    pub mid_channels: usize,
    pub seed: u64,
}

impl Default for FeatureExtractorConfig {
    fn default() -> Self {
        // Full-scale classifier tap widths.
        Self {
            channels: [64, 64, 256, 512],
            mid_channels: 128,
            seed: 0,
        }
    }
}

impl FeatureExtractorConfig {
    /// Narrow preset for desk-scale tests.
    pub fn slim(seed: u64) -> Self {
        Self {
            channels: [8, 8, 16, 16],
            mid_channels: 8,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.channels.contains(&0) || self.mid_channels == 0 {
            return Err(Error::InvalidConfig(
                "extractor channel counts must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
struct ConvLayer {
    weight: Array4<f64>,
    bias: Array1<f64>,
}

/// One stage: an optional chain of (pre-pool, conv+relu) steps whose last
/// activation is the stage's tap.
#[derive(Debug, Clone)]
struct Stage {
    convs: Vec<(bool, ConvLayer)>, // (pool before this conv, conv)
}

#[derive(Debug, Clone)]
pub struct FeatureExtractorHandle {
    config: FeatureExtractorConfig,
    stages: Vec<Stage>,
}

fn conv_shapes(config: &FeatureExtractorConfig) -> Vec<Vec<(bool, usize, usize)>> {
    let [c1, c2, c3, c4] = config.channels;
    let mid = config.mid_channels;
    vec![
        vec![(false, 3, c1)],
        vec![(false, c1, c2)],
        vec![(true, c2, mid), (true, mid, c3)],
        vec![(true, c3, c4)],
    ]
}

/// Builds an extractor with seeded random weights (He-style: zero-mean
/// Gaussian, std sqrt(2 / fan_in), drawn as f32 and widened).
pub fn build_random_extractor(config: &FeatureExtractorConfig) -> Result<FeatureExtractorHandle> {
    config.validate()?;
    let mut rng = stream(config.seed, StreamTag::ExtractorWeights);
    let mut draw = |count: usize, fan_in: usize| -> Vec<f64> {
        let std = (2.0 / fan_in as f32).sqrt();
        (0..count)
            .map(|_| {
                let v: f32 = rng.sample(StandardNormal);
                f64::from(v * std)
            })
            .collect()
    };
    let stages = conv_shapes(config)
        .iter()
        .map(|shapes| Stage {
            convs: shapes
                .iter()
                .map(|&(pool, ci, co)| {
                    let weight =
                        Array4::from_shape_vec((co, ci, 3, 3), draw(co * ci * 9, ci * 9)).unwrap();
                    let bias = Array1::from_vec(draw(co, 1));
                    (pool, ConvLayer { weight, bias })
                })
                .collect(),
        })
        .collect();
    Ok(FeatureExtractorHandle {
        config: config.clone(),
        stages,
    })
}

/// The four feature maps the perceptual loss consumes.
#[derive(Debug, Clone, PartialEq)]
pub struct FeaturePyramid {
    pub maps: Vec<Array3<f64>>,
}

impl FeaturePyramid {
    /// Number of scalars per map (channels x height x width).
    pub fn scalar_counts(&self) -> Vec<usize> {
        self.maps.iter().map(|m| m.len()).collect()
    }
}

/// Anything that can produce a feature pyramid from an image.
pub trait FeatureSource {
    fn features(&self, image: &ImageBuffer) -> Result<FeaturePyramid>;
}

impl FeatureSource for FeatureExtractorHandle {
    fn features(&self, image: &ImageBuffer) -> Result<FeaturePyramid> {
        extract_features(self, image)
    }
}

/// Identity features: a single "stage" that returns the image itself. With
/// unit weight this reduces the perceptual loss to plain per-scalar MSE,
/// which tests use as an independent oracle.
pub struct IdentityFeatures;

impl FeatureSource for IdentityFeatures {
    fn features(&self, image: &ImageBuffer) -> Result<FeaturePyramid> {
        Ok(FeaturePyramid {
            maps: vec![image.to_planes()],
        })
    }
}

fn check_input_side(side: usize) -> Result<()> {
    if side < 8 || !side.is_multiple_of(8) {
        return Err(Error::shape(
            "image side >= 8 and divisible by 8",
            format!("{side}"),
        ));
    }
    Ok(())
}

impl FeatureExtractorHandle {
    pub fn config(&self) -> &FeatureExtractorConfig {
        &self.config
    }

    fn forward(&self, image: &ImageBuffer, mut caches: Option<&mut Vec<Vec<Array3<f64>>>>) -> FeaturePyramid {
        let mut x = image.to_planes();
        let mut maps = Vec::with_capacity(NUM_STAGES);
        for stage in &self.stages {
            let mut stage_pres = Vec::new();
            for (pool, conv) in &stage.convs {
                if *pool {
                    x = nn::avgpool2(&x);
                }
                let mut a = nn::conv3x3(&x, &conv.weight, &conv.bias);
                if caches.is_some() {
                    stage_pres.push(a.clone());
                }
                nn::leaky_relu_inplace(a.as_slice_mut().unwrap(), 0.0); // plain rectifier
                x = a;
            }
            if let Some(c) = caches.as_deref_mut() {
                c.push(stage_pres);
            }
            maps.push(x.clone());
        }
        FeaturePyramid { maps }
    }
}

/// Runs the extractor and returns the four tap activations.
pub fn extract_features(
    fx: &FeatureExtractorHandle,
    image: &ImageBuffer,
) -> Result<FeaturePyramid> {
    check_input_side(image.side())?;
    Ok(fx.forward(image, None))
}

/// A traced extraction that can push gradients back to the image pixels.
pub struct ExtractionRun {
    pyramid: FeaturePyramid,
    pre_activations: Vec<Vec<Array3<f64>>>,
    input_side: usize,
}

pub fn extract_features_traced(
    fx: &FeatureExtractorHandle,
    image: &ImageBuffer,
) -> Result<ExtractionRun> {
    check_input_side(image.side())?;
    let mut caches = Vec::new();
    let pyramid = fx.forward(image, Some(&mut caches));
    Ok(ExtractionRun {
        pyramid,
        pre_activations: caches,
        input_side: image.side(),
    })
}

impl ExtractionRun {
    pub fn pyramid(&self) -> &FeaturePyramid {
        &self.pyramid
    }

    /// Gradient with respect to the input image (H x W x 3), given one
    /// gradient array per tap map.
    pub fn grad_image(
        &self,
        fx: &FeatureExtractorHandle,
        grad_maps: &[Array3<f64>],
    ) -> Array3<f64> {
        assert_eq!(grad_maps.len(), fx.stages.len());
        let mut g_stage_out: Option<Array3<f64>> = None;
        for (si, stage) in fx.stages.iter().enumerate().rev() {
            let mut g = match g_stage_out.take() {
                Some(acc) => acc + &grad_maps[si],
                None => grad_maps[si].clone(),
            };
            for (ci, (pool, conv)) in stage.convs.iter().enumerate().rev() {
                nn::leaky_relu_backward_inplace(
                    g.as_slice_mut().unwrap(),
                    self.pre_activations[si][ci].as_slice().unwrap(),
                    0.0,
                );
                g = nn::conv3x3_backward_input(&g, &conv.weight);
                if *pool {
                    g = nn::avgpool2_backward(&g);
                }
            }
            g_stage_out = Some(g);
        }
        let planes = g_stage_out.expect("at least one stage");
        let side = self.input_side;
        let mut out = Array3::zeros((side, side, 3));
        for y in 0..side {
            for x in 0..side {
                for c in 0..3 {
                    out[[y, x, c]] = planes[[c, y, x]];
                }
            }
        }
        out
    }
}

/// Loss weights: the pixel-term weight, one weight per feature stage, and
/// the resolution the perceptual term is evaluated at.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub lambda_mse: f64,
    pub lambda_features: [f64; 4],
    pub loss_resolution: usize,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda_mse: 1.0,
            lambda_features: [1.0; 4],
            loss_resolution: 256,
        }
    }
}

impl LossWeights {
    /// Evaluate the perceptual term at the images' native resolution.
    pub fn with_loss_resolution(mut self, side: usize) -> Self {
        self.loss_resolution = side;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.lambda_mse < 0.0 || self.lambda_features.iter().any(|&l| l < 0.0) {
            return Err(Error::InvalidConfig("loss weights must be >= 0".into()));
        }
        if !self.loss_resolution.is_power_of_two() || self.loss_resolution < 8 {
            return Err(Error::InvalidConfig(format!(
                "loss_resolution must be a power of two >= 8, got {}",
                self.loss_resolution
            )));
        }
        Ok(())
    }
}

fn check_same_side(a: &ImageBuffer, b: &ImageBuffer) -> Result<()> {
    if a.side() != b.side() {
        return Err(Error::shape(
            format!("matching image sides ({})", a.side()),
            format!("{}", b.side()),
        ));
    }
    Ok(())
}

/// Sum over stages of (lambda_j / N_j) * squared feature distance.
pub fn perceptual_loss<F: FeatureSource>(
    fx: &F,
    i1: &ImageBuffer,
    i2: &ImageBuffer,
    weights: &LossWeights,
) -> Result<f64> {
    check_same_side(i1, i2)?;
    let p1 = fx.features(i1)?;
    let p2 = fx.features(i2)?;
    let mut total = 0.0;
    for (j, (f1, f2)) in p1.maps.iter().zip(&p2.maps).enumerate() {
        let n = f1.len() as f64;
        let dist: f64 = f1
            .iter()
            .zip(f2.iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        total += weights.lambda_features[j] / n * dist;
    }
    Ok(total)
}

/// Combined loss pieces, all reported for tracing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub total: f64,
    pub percept: f64,
    pub mse: f64,
}

/// The embedding loss: perceptual term on copies resized to
/// `loss_resolution`, pixel MSE at native resolution, combined as
/// `total = percept + lambda_mse * mse`.
pub fn embedding_loss(
    fx: &FeatureExtractorHandle,
    generated: &ImageBuffer,
    target: &ImageBuffer,
    weights: &LossWeights,
) -> Result<LossBreakdown> {
    check_same_side(generated, target)?;
    weights.validate()?;
    let mse = generated.mse(target)?;
    let g = resize(generated, weights.loss_resolution)?;
    let t = resize(target, weights.loss_resolution)?;
    let percept = perceptual_loss(fx, &g, &t, weights)?;
    Ok(LossBreakdown {
        total: percept + weights.lambda_mse * mse,
        percept,
        mse,
    })
}

/// Target-side values that stay fixed across an optimization run.
pub struct TargetContext {
    native: ImageBuffer,
    resized_pyramid: FeaturePyramid,
}

impl TargetContext {
    pub fn new(
        fx: &FeatureExtractorHandle,
        target: &ImageBuffer,
        weights: &LossWeights,
    ) -> Result<Self> {
        weights.validate()?;
        let resized = resize(target, weights.loss_resolution)?;
        let resized_pyramid = extract_features(fx, &resized)?;
        Ok(Self {
            native: target.clone(),
            resized_pyramid,
        })
    }

    pub fn target(&self) -> &ImageBuffer {
        &self.native
    }
}

/// Loss plus its gradient with respect to the generated image's pixels.
pub fn embedding_loss_grad(
    fx: &FeatureExtractorHandle,
    generated: &ImageBuffer,
    target: &TargetContext,
    weights: &LossWeights,
) -> Result<(LossBreakdown, Array3<f64>)> {
    check_same_side(generated, target.target())?;
    let native_side = generated.side();
    let n = (native_side * native_side * 3) as f64;

    // Pixel term at native resolution.
    let mut mse = 0.0;
    let mut grad = Array3::zeros(generated.data().raw_dim());
    {
        let g = generated.data();
        let t = target.native.data();
        for (gi, (gv, tv)) in grad.iter_mut().zip(g.iter().zip(t.iter())) {
            let d = gv - tv;
            mse += d * d;
            *gi = weights.lambda_mse * 2.0 * d / n;
        }
        mse /= n;
    }

    // Perceptual term on resized copies.
    let resized = resize(generated, weights.loss_resolution)?;
    let run = extract_features_traced(fx, &resized)?;
    let mut percept = 0.0;
    let grad_maps: Vec<Array3<f64>> = run
        .pyramid()
        .maps
        .iter()
        .zip(&target.resized_pyramid.maps)
        .enumerate()
        .map(|(j, (fg, ft))| {
            let nj = fg.len() as f64;
            let lam = weights.lambda_features[j];
            let mut gm = Array3::zeros(fg.raw_dim());
            let mut dist = 0.0;
            for (g, (a, b)) in gm.iter_mut().zip(fg.iter().zip(ft.iter())) {
                let d = a - b;
                dist += d * d;
                *g = lam / nj * 2.0 * d;
            }
            percept += lam / nj * dist;
            gm
        })
        .collect();
    let grad_resized = run.grad_image(fx, &grad_maps);
    grad += &resize_grad(&grad_resized, native_side);

    Ok((
        LossBreakdown {
            total: percept + weights.lambda_mse * mse,
            percept,
            mse,
        },
        grad,
    ))
}

const EXTRACTOR_MODEL: &str = "feature_extractor";

/// Saves extractor weights in the shared checkpoint container format.
pub fn save_extractor(fx: &FeatureExtractorHandle, dir: impl AsRef<Path>) -> Result<()> {
    let mut w = ckpt::Writer::new(dir);
    for (si, stage) in fx.stages.iter().enumerate() {
        for (ci, (_, conv)) in stage.convs.iter().enumerate() {
            let kd = conv.weight.dim();
            w.add(
                &format!("fx.stage{}.conv{}.weight", si + 1, ci),
                &[kd.0, kd.1, kd.2, kd.3],
                conv.weight.iter().map(|&v| v as f32),
            );
            w.add(
                &format!("fx.stage{}.conv{}.bias", si + 1, ci),
                &[kd.0],
                conv.bias.iter().map(|&v| v as f32),
            );
        }
    }
    w.finish(EXTRACTOR_MODEL, serde_json::to_value(&fx.config)?)
}

/// Loads an extractor checkpoint (pretrained or previously saved).
pub fn load_extractor(dir: impl AsRef<Path>) -> Result<FeatureExtractorHandle> {
    let r = ckpt::Reader::open(dir)?;
    if r.model() != EXTRACTOR_MODEL {
        return Err(Error::CorruptManifest(format!(
            "expected a feature_extractor checkpoint, found model `{}`",
            r.model()
        )));
    }
    let config: FeatureExtractorConfig = serde_json::from_value(r.config().clone())
        .map_err(|e| Error::CorruptManifest(format!("bad config: {e}")))?;
    config.validate()?;
    let stages = conv_shapes(&config)
        .iter()
        .enumerate()
        .map(|(si, shapes)| -> Result<Stage> {
            let convs = shapes
                .iter()
                .enumerate()
                .map(|(ci, &(pool, cin, cout))| -> Result<(bool, ConvLayer)> {
                    let weight = r.tensor(
                        &format!("fx.stage{}.conv{}.weight", si + 1, ci),
                        &[cout, cin, 3, 3],
                    )?;
                    let bias = r.tensor(&format!("fx.stage{}.conv{}.bias", si + 1, ci), &[cout])?;
                    Ok((
                        pool,
                        ConvLayer {
                            weight: Array4::from_shape_vec(
                                (cout, cin, 3, 3),
                                weight.iter().map(|&v| f64::from(v)).collect(),
                            )
                            .unwrap(),
                            bias: Array1::from_vec(bias.iter().map(|&v| f64::from(v)).collect()),
                        },
                    ))
                })
                .collect::<Result<_>>()?;
            Ok(Stage { convs })
        })
        .collect::<Result<_>>()?;
    Ok(FeatureExtractorHandle { config, stages })
}
