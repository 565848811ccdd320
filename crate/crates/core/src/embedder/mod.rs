//! Iterative first-order embedding of a target image into the generator's
//! latent space: initialization strategies, the Adam loop, trace recording,
//! and iterative re-embedding.

mod adam;

pub use adam::{AdamParams, AdamState};

use ndarray::{Array1, Array2};
use rand::distributions::{Distribution, Uniform};
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use crate::error::{Error, Result};
use crate::generator::{ExtendedLatent, GeneratorHandle, LatentZ, StyleVector};
use crate::image::ImageBuffer;
use crate::latentops::latent_distance;
use crate::perceptual::{
    embedding_loss_grad, FeatureExtractorHandle, LossBreakdown, LossWeights, TargetContext,
};
use crate::rng::{stream, StreamTag};

/// Where the optimization starts from.
#[derive(Debug, Clone, PartialEq)]
pub enum InitStrategy {
    /// Broadcast of the Monte-Carlo mean style vector.
    MeanLatent,
    /// Every entry i.i.d. uniform on [-1, 1].
    RandomUniform,
    /// A caller-supplied code, validated against L x D.
    Provided(ExtendedLatent),
}

/// Which latent space the optimization variable lives in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LatentSpace {
    /// One style vector per layer (the extended space).
    WPlus,
    /// A single style vector, broadcast to all layers.
    W,
    /// An initial-space code pushed through the mapping network, then
    /// broadcast. Exists for completeness; excluded from acceptance.
    Z,
}

#[derive(Debug, Clone)]
pub struct EmbedConfig {
    pub init: InitStrategy,
    pub space: LatentSpace,
    pub steps: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub weights: LossWeights,
    pub seed: u64,
    pub record_every: usize,
    /// Sample count for the mean style vector used by MeanLatent
    /// initialization and the distance diagnostic.
    pub mean_samples: usize,
}

impl Default for EmbedConfig {
    fn default() -> Self {
        Self {
            init: InitStrategy::MeanLatent,
            space: LatentSpace::WPlus,
            steps: 5000,
            learning_rate: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            weights: LossWeights::default(),
            seed: 0,
            record_every: 10,
            mean_samples: 10_000,
        }
    }
}

impl EmbedConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::InvalidConfig("steps must be >= 1".into()));
        }
        if self.learning_rate <= 0.0 {
            return Err(Error::InvalidConfig("learning_rate must be > 0".into()));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::InvalidConfig(format!("{name} must be in [0, 1)")));
            }
        }
        if self.record_every == 0 {
            return Err(Error::InvalidConfig("record_every must be >= 1".into()));
        }
        if self.mean_samples == 0 {
            return Err(Error::InvalidConfig("mean_samples must be >= 1".into()));
        }
        self.weights.validate()
    }

    fn adam(&self) -> AdamParams {
        AdamParams {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
        }
    }
}

/// One recorded point of an optimization run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceSample {
    pub step: usize,
    pub total: f64,
    pub percept: f64,
    pub mse: f64,
    pub dist_to_mean: f64,
}

/// Loss values over the optimization, sampled every `record_every` steps
/// plus step 0 and the final step.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LossTrace {
    pub samples: Vec<TraceSample>,
}

impl LossTrace {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("step,total,percept,mse,dist_to_mean\n");
        for s in &self.samples {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                s.step, s.total, s.percept, s.mse, s.dist_to_mean
            ));
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(self.to_csv().as_bytes())?;
        Ok(())
    }
}

/// Result of one embedding run. `latent` is the best-so-far iterate (the
/// evaluated point with the lowest total loss), not necessarily the last.
#[derive(Debug, Clone)]
pub struct EmbedResult {
    pub latent: ExtendedLatent,
    pub final_loss: LossBreakdown,
    pub best_total: f64,
    pub best_step: usize,
    pub trace: LossTrace,
    /// Frobenius distance of the returned latent to the broadcast mean.
    pub dist_to_mean: f64,
    pub wallclock_secs: f64,
}

/// Builds the starting extended latent for a run.
pub fn init_latent(handle: &GeneratorHandle, config: &EmbedConfig) -> Result<ExtendedLatent> {
    config.validate()?;
    let layers = handle.num_style_layers();
    let dim = handle.style_dim();
    match &config.init {
        InitStrategy::MeanLatent => Ok(handle
            .mean_latent(config.mean_samples, config.seed)?
            .broadcast(layers)),
        InitStrategy::RandomUniform => {
            let mut rng = stream(config.seed, StreamTag::LatentInit);
            let dist = Uniform::new_inclusive(-1.0f64, 1.0);
            let rows = Array2::from_shape_simple_fn((layers, dim), || dist.sample(&mut rng));
            ExtendedLatent::new(rows)
        }
        InitStrategy::Provided(latent) => {
            if latent.layers() != layers || latent.dim() != dim {
                return Err(Error::shape(
                    format!("latent {layers}x{dim}"),
                    format!("{}x{}", latent.layers(), latent.dim()),
                ));
            }
            Ok(latent.clone())
        }
    }
}

/// The optimization variable for each latent space.
enum Variable {
    WPlus(Array2<f64>),
    W(Array1<f64>),
    Z(Array1<f64>),
}

impl Variable {
    fn from_config(handle: &GeneratorHandle, config: &EmbedConfig) -> Result<Self> {
        let dim = handle.style_dim();
        match config.space {
            LatentSpace::WPlus => Ok(Variable::WPlus(init_latent(handle, config)?.into_rows())),
            LatentSpace::W => {
                let w = match &config.init {
                    InitStrategy::MeanLatent => {
                        handle.mean_latent(config.mean_samples, config.seed)?.0
                    }
                    InitStrategy::RandomUniform => {
                        let mut rng = stream(config.seed, StreamTag::LatentInit);
                        let dist = Uniform::new_inclusive(-1.0f64, 1.0);
                        Array1::from_shape_simple_fn(dim, || dist.sample(&mut rng))
                    }
                    InitStrategy::Provided(latent) => {
                        let rows = latent.rows();
                        let first = rows.row(0).to_owned();
                        if rows.rows().into_iter().any(|r| r != first) {
                            return Err(Error::InvalidConfig(
                                "W-space init requires a broadcast latent (equal rows)".into(),
                            ));
                        }
                        if latent.dim() != dim {
                            return Err(Error::shape(
                                format!("latent dim {dim}"),
                                format!("{}", latent.dim()),
                            ));
                        }
                        first
                    }
                };
                Ok(Variable::W(w))
            }
            LatentSpace::Z => {
                let z = match &config.init {
                    // The mean of the standard-Gaussian Z distribution.
                    InitStrategy::MeanLatent => Array1::zeros(dim),
                    InitStrategy::RandomUniform => {
                        let mut rng = stream(config.seed, StreamTag::LatentInit);
                        let dist = Uniform::new_inclusive(-1.0f64, 1.0);
                        Array1::from_shape_simple_fn(dim, || dist.sample(&mut rng))
                    }
                    InitStrategy::Provided(_) => {
                        return Err(Error::InvalidConfig(
                            "Provided init is not supported for Z-space embedding".into(),
                        ))
                    }
                };
                Ok(Variable::Z(z))
            }
        }
    }

    fn flat(&mut self) -> &mut [f64] {
        match self {
            Variable::WPlus(a) => a.as_slice_mut().unwrap(),
            Variable::W(a) | Variable::Z(a) => a.as_slice_mut().unwrap(),
        }
    }

    fn is_finite(&self) -> bool {
        match self {
            Variable::WPlus(a) => a.iter().all(|v| v.is_finite()),
            Variable::W(a) | Variable::Z(a) => a.iter().all(|v| v.is_finite()),
        }
    }

    fn len(&self) -> usize {
        match self {
            Variable::WPlus(a) => a.len(),
            Variable::W(a) | Variable::Z(a) => a.len(),
        }
    }

    /// The extended code this variable currently denotes, plus the mapping
    /// cache needed for the Z pullback.
    fn realize(
        &self,
        handle: &GeneratorHandle,
    ) -> Result<(ExtendedLatent, Option<crate::generator::MapCache>)> {
        let layers = handle.num_style_layers();
        match self {
            Variable::WPlus(a) => Ok((ExtendedLatent::new(a.clone())?, None)),
            Variable::W(a) => Ok((StyleVector(a.clone()).broadcast(layers), None)),
            Variable::Z(a) => {
                let (w, cache) = handle.map_latent_traced(&LatentZ(a.clone()))?;
                Ok((w.broadcast(layers), Some(cache)))
            }
        }
    }

    /// Pulls the code gradient (L x D) back to this variable's shape.
    fn pullback(
        &self,
        handle: &GeneratorHandle,
        grad_code: Array2<f64>,
        cache: Option<&crate::generator::MapCache>,
    ) -> Vec<f64> {
        match self {
            Variable::WPlus(_) => grad_code.into_raw_vec_and_offset().0,
            Variable::W(_) => {
                let summed = grad_code.sum_axis(ndarray::Axis(0));
                summed.into_raw_vec_and_offset().0
            }
            Variable::Z(_) => {
                let summed = grad_code.sum_axis(ndarray::Axis(0));
                let dz = handle.map_backward(cache.expect("Z cache"), summed);
                dz.into_raw_vec_and_offset().0
            }
        }
    }
}

/// Full-pipeline loss and gradient with respect to an extended latent:
/// synthesize, compare against the prepared target, and backpropagate.
pub fn wplus_loss_and_grad(
    handle: &GeneratorHandle,
    fx: &FeatureExtractorHandle,
    latent: &ExtendedLatent,
    target: &TargetContext,
    weights: &LossWeights,
) -> Result<(LossBreakdown, Array2<f64>)> {
    let run = handle.synthesize_traced(latent, handle.noise())?;
    let (loss, grad_image) = embedding_loss_grad(fx, run.image(), target, weights)?;
    let grad_latent = run.grad_latent(handle, &grad_image);
    Ok((loss, grad_latent))
}

/// Algorithm: starting from the configured initialization, run exactly
/// `config.steps` Adam updates on the chosen variable against the combined
/// loss, with the noise bundle held constant throughout.
pub fn embed(
    handle: &GeneratorHandle,
    fx: &FeatureExtractorHandle,
    target: &ImageBuffer,
    config: &EmbedConfig,
) -> Result<EmbedResult> {
    config.validate()?;
    if target.side() != handle.resolution() {
        return Err(Error::shape(
            format!("target side {}", handle.resolution()),
            format!("{}", target.side()),
        ));
    }
    let started = Instant::now();
    let mean_broadcast = handle
        .mean_latent(config.mean_samples, config.seed)?
        .broadcast(handle.num_style_layers());
    let target_ctx = TargetContext::new(fx, target, &config.weights)?;

    let mut variable = Variable::from_config(handle, config)?;
    let mut adam = AdamState::new(variable.len());
    let hp = config.adam();

    let mut trace = LossTrace::default();
    let mut best: Option<(f64, usize, ExtendedLatent)> = None;
    let mut last_loss = LossBreakdown {
        total: f64::INFINITY,
        percept: f64::INFINITY,
        mse: f64::INFINITY,
    };

    for step in 0..=config.steps {
        if !variable.is_finite() {
            return Err(Error::NonFiniteLoss { step });
        }
        let (code, map_cache) = variable.realize(handle)?;
        let run = handle.synthesize_traced(&code, handle.noise())?;
        let (loss, grad_image) = embedding_loss_grad(fx, run.image(), &target_ctx, &config.weights)?;
        if !loss.total.is_finite() {
            return Err(Error::NonFiniteLoss { step });
        }
        last_loss = loss;

        if best.as_ref().is_none_or(|(b, _, _)| loss.total < *b) {
            best = Some((loss.total, step, code.clone()));
        }
        if step % config.record_every == 0 || step == config.steps {
            trace.samples.push(TraceSample {
                step,
                total: loss.total,
                percept: loss.percept,
                mse: loss.mse,
                dist_to_mean: latent_distance(&code, &mean_broadcast)?,
            });
        }
        if step == config.steps {
            break;
        }

        let grad_code = run.grad_latent(handle, &grad_image);
        let grad_var = variable.pullback(handle, grad_code, map_cache.as_ref());
        adam.apply(variable.flat(), &grad_var, &hp);
    }

    let (best_total, best_step, latent) = best.expect("at least one evaluated step");
    let dist_to_mean = latent_distance(&latent, &mean_broadcast)?;
    Ok(EmbedResult {
        latent,
        final_loss: last_loss,
        best_total,
        best_step,
        trace,
        dist_to_mean,
        wallclock_secs: started.elapsed().as_secs_f64(),
    })
}

/// Convenience wrapper: embed with the variable constrained to W.
pub fn embed_into_w(
    handle: &GeneratorHandle,
    fx: &FeatureExtractorHandle,
    target: &ImageBuffer,
    config: &EmbedConfig,
) -> Result<EmbedResult> {
    let config = EmbedConfig {
        space: LatentSpace::W,
        ..config.clone()
    };
    embed(handle, fx, target, &config)
}

/// Re-embeds its own reconstruction `rounds` times: round k+1's target is
/// the synthesized image of round k's best latent.
pub fn iterative_embed(
    handle: &GeneratorHandle,
    fx: &FeatureExtractorHandle,
    target: &ImageBuffer,
    config: &EmbedConfig,
    rounds: usize,
) -> Result<Vec<EmbedResult>> {
    if rounds == 0 {
        return Err(Error::InvalidConfig("rounds must be >= 1".into()));
    }
    let mut results = Vec::with_capacity(rounds);
    let mut current = target.clone();
    for _ in 0..rounds {
        let result = embed(handle, fx, &current, config)?;
        current = handle.synthesize(&result.latent, handle.noise())?;
        results.push(result);
    }
    Ok(results)
}
