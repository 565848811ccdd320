//! Stress protocols: embedding affine-transformed and defective targets,
//! initialization comparisons, and CSV reports in the published column
//! layout.

pub mod reference;

use ndarray::Array3;
use rayon::prelude::*;
use std::io::Write;
use std::path::Path;

use crate::embedder::{embed, EmbedConfig, EmbedResult, InitStrategy};
use crate::error::{Error, Result};
use crate::fingerprint::Fnv1a;
use crate::generator::GeneratorHandle;
use crate::image::ImageBuffer;
use crate::perceptual::FeatureExtractorHandle;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AffineKind {
    TranslateRight,
    TranslateLeft,
    ZoomIn,
    ZoomOut,
    Rotate,
}

/// One affine stress condition. `magnitude` is pixels for translations,
/// a factor (> 0) for zooms, degrees for rotation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineSpec {
    pub kind: AffineKind,
    pub magnitude: f64,
}

/// The published protocol, with pixel magnitudes scaled from the 1024
/// reference resolution so the conditions stay meaningful on toy models.
pub fn paper_affine_suite(resolution: usize) -> Vec<(String, AffineSpec)> {
    let scale = resolution as f64 / 1024.0;
    vec![
        (
            "translate_right_140".into(),
            AffineSpec { kind: AffineKind::TranslateRight, magnitude: 140.0 * scale },
        ),
        (
            "translate_left_160".into(),
            AffineSpec { kind: AffineKind::TranslateLeft, magnitude: 160.0 * scale },
        ),
        (
            "zoom_out_2x".into(),
            AffineSpec { kind: AffineKind::ZoomOut, magnitude: 2.0 },
        ),
        (
            "zoom_in_2x".into(),
            AffineSpec { kind: AffineKind::ZoomIn, magnitude: 2.0 },
        ),
        (
            "rotate_90".into(),
            AffineSpec { kind: AffineKind::Rotate, magnitude: 90.0 },
        ),
        (
            "rotate_180".into(),
            AffineSpec { kind: AffineKind::Rotate, magnitude: 180.0 },
        ),
    ]
}

/// Applies an affine transform. Out-of-frame regions are black and the
/// output size is unchanged. Translations, rotations, and zoom-in resample
/// bilinearly; zoom-out minifies, so it goes through the antialiased
/// resize and is pasted centered.
pub fn apply_affine(image: &ImageBuffer, spec: &AffineSpec) -> ImageBuffer {
    let side = image.side();
    if spec.kind == AffineKind::ZoomOut {
        let inner = ((side as f64 / spec.magnitude).round() as usize).clamp(8, side);
        let small = crate::perceptual::resize(image, inner).expect("inner side >= 8");
        let offset = (side - inner) / 2;
        let mut out = ImageBuffer::zeros(side);
        for y in 0..inner {
            for x in 0..inner {
                for ch in 0..3 {
                    out.data_mut()[[y + offset, x + offset, ch]] = small.data()[[y, x, ch]];
                }
            }
        }
        return out;
    }
    let c = side as f64 / 2.0;
    let map = |ox: f64, oy: f64| -> (f64, f64) {
        match spec.kind {
            AffineKind::TranslateRight => (ox - spec.magnitude, oy),
            AffineKind::TranslateLeft => (ox + spec.magnitude, oy),
            AffineKind::ZoomIn => (c + (ox - c) / spec.magnitude, c + (oy - c) / spec.magnitude),
            AffineKind::ZoomOut => unreachable!("handled above"),
            AffineKind::Rotate => {
                let theta = -spec.magnitude.to_radians();
                let (sin, cos) = theta.sin_cos();
                let (dx, dy) = (ox - c, oy - c);
                (c + cos * dx - sin * dy, c + sin * dx + cos * dy)
            }
        }
    };

    let data = image.data();
    let mut out = Array3::zeros((side, side, 3));
    let sample = |x: isize, y: isize, ch: usize| -> f64 {
        if x < 0 || y < 0 || x >= side as isize || y >= side as isize {
            0.0
        } else {
            data[[y as usize, x as usize, ch]]
        }
    };
    for oy in 0..side {
        for ox in 0..side {
            let (ix, iy) = map(ox as f64 + 0.5, oy as f64 + 0.5);
            let x0 = (ix - 0.5).floor();
            let y0 = (iy - 0.5).floor();
            let tx = ix - 0.5 - x0;
            let ty = iy - 0.5 - y0;
            let (x0, y0) = (x0 as isize, y0 as isize);
            for ch in 0..3 {
                let v = (1.0 - ty)
                    * ((1.0 - tx) * sample(x0, y0, ch) + tx * sample(x0 + 1, y0, ch))
                    + ty * ((1.0 - tx) * sample(x0, y0 + 1, ch) + tx * sample(x0 + 1, y0 + 1, ch));
                out[[oy, ox, ch]] = v;
            }
        }
    }
    ImageBuffer::new(out).expect("same square shape")
}

/// Rectangles (x, y, width, height) painted with a constant fill.
#[derive(Debug, Clone, PartialEq)]
pub struct DefectSpec {
    pub rectangles: Vec<(usize, usize, usize, usize)>,
    pub fill: f64,
}

impl DefectSpec {
    /// White occlusions, the published appearance.
    pub fn white(rectangles: Vec<(usize, usize, usize, usize)>) -> Self {
        Self {
            rectangles,
            fill: 1.0,
        }
    }
}

/// Fills the listed rectangles; every other pixel is untouched.
pub fn apply_defects(image: &ImageBuffer, spec: &DefectSpec) -> Result<ImageBuffer> {
    let side = image.side();
    for &(x, y, w, h) in &spec.rectangles {
        if x + w > side || y + h > side {
            return Err(Error::InvalidConfig(format!(
                "defect rectangle ({x},{y},{w},{h}) outside {side}x{side} image"
            )));
        }
    }
    let mut out = image.clone();
    for &(x, y, w, h) in &spec.rectangles {
        for yy in y..y + h {
            for xx in x..x + w {
                for ch in 0..3 {
                    out.data_mut()[[yy, xx, ch]] = spec.fill;
                }
            }
        }
    }
    Ok(out)
}

/// One line of a stress report. `loss_total` is the best-so-far total of
/// the run, i.e. the loss of the latent the embedder returned.
#[derive(Debug, Clone, PartialEq)]
pub struct StressRow {
    pub condition: String,
    pub loss_total: f64,
    pub dist_to_mean: f64,
    pub steps: usize,
    pub seed: u64,
}

/// Report over conditions that all shared one embedding config; the config
/// fingerprint in the header pins that fairness invariant.
#[derive(Debug, Clone, PartialEq)]
pub struct StressReport {
    pub config_hash: u64,
    pub rows: Vec<StressRow>,
}

impl StressReport {
    pub fn to_csv(&self) -> String {
        let mut out = format!("# config_hash={:016x}\n", self.config_hash);
        out.push_str("condition,loss_total,loss_total_x1e5,dist_to_mean,steps,seed\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.condition,
                r.loss_total,
                r.loss_total * 1e5,
                r.dist_to_mean,
                r.steps,
                r.seed
            ));
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(self.to_csv().as_bytes())?;
        Ok(())
    }

    pub fn parse_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let hash_line = lines
            .next()
            .ok_or_else(|| Error::InvalidConfig("empty report".into()))?;
        let config_hash = hash_line
            .strip_prefix("# config_hash=")
            .and_then(|h| u64::from_str_radix(h, 16).ok())
            .ok_or_else(|| Error::InvalidConfig("missing config_hash header".into()))?;
        let header = lines.next().unwrap_or_default();
        if header != "condition,loss_total,loss_total_x1e5,dist_to_mean,steps,seed" {
            return Err(Error::InvalidConfig(format!("bad report header `{header}`")));
        }
        let mut rows = Vec::new();
        for line in lines.filter(|l| !l.is_empty()) {
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 6 {
                return Err(Error::InvalidConfig(format!("bad report row `{line}`")));
            }
            let parse = |s: &str| -> Result<f64> {
                s.parse()
                    .map_err(|_| Error::InvalidConfig(format!("bad float `{s}`")))
            };
            rows.push(StressRow {
                condition: fields[0].to_string(),
                loss_total: parse(fields[1])?,
                dist_to_mean: parse(fields[3])?,
                steps: fields[4]
                    .parse()
                    .map_err(|_| Error::InvalidConfig(format!("bad steps `{}`", fields[4])))?,
                seed: fields[5]
                    .parse()
                    .map_err(|_| Error::InvalidConfig(format!("bad seed `{}`", fields[5])))?,
            });
        }
        Ok(Self { config_hash, rows })
    }
}

/// Stable fingerprint of everything that influences an embedding run.
pub fn config_fingerprint(config: &EmbedConfig) -> u64 {
    let mut h = Fnv1a::new();
    match &config.init {
        InitStrategy::MeanLatent => h.write_str("mean"),
        InitStrategy::RandomUniform => h.write_str("random"),
        InitStrategy::Provided(latent) => {
            h.write_str("provided");
            for &v in latent.rows().iter() {
                h.write_f64(v);
            }
        }
    }
    h.write_str(&format!("{:?}", config.space));
    h.write_u64(config.steps as u64);
    h.write_f64(config.learning_rate);
    h.write_f64(config.beta1);
    h.write_f64(config.beta2);
    h.write_f64(config.epsilon);
    h.write_f64(config.weights.lambda_mse);
    for &l in &config.weights.lambda_features {
        h.write_f64(l);
    }
    h.write_u64(config.weights.loss_resolution as u64);
    h.write_u64(config.seed);
    h.write_u64(config.record_every as u64);
    h.write_u64(config.mean_samples as u64);
    h.finish()
}

fn run_conditions(
    handle: &GeneratorHandle,
    fx: &FeatureExtractorHandle,
    config: &EmbedConfig,
    conditions: Vec<(String, ImageBuffer)>,
    jobs: usize,
) -> Result<StressReport> {
    let execute = |(label, target): &(String, ImageBuffer)| -> Result<StressRow> {
        let result = embed(handle, fx, target, config)?;
        Ok(StressRow {
            condition: label.clone(),
            loss_total: result.best_total,
            dist_to_mean: result.dist_to_mean,
            steps: config.steps,
            seed: config.seed,
        })
    };
    let rows: Result<Vec<StressRow>> = if jobs > 1 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?
            .install(|| conditions.par_iter().map(execute).collect())
    } else {
        conditions.iter().map(execute).collect()
    };
    Ok(StressReport {
        config_hash: config_fingerprint(config),
        rows: rows?,
    })
}

/// Embeds the untransformed baseline plus every affine condition.
pub fn run_affine_suite(
    handle: &GeneratorHandle,
    fx: &FeatureExtractorHandle,
    image: &ImageBuffer,
    config: &EmbedConfig,
    specs: &[(String, AffineSpec)],
    jobs: usize,
) -> Result<StressReport> {
    let mut conditions = vec![("baseline".to_string(), image.clone())];
    for (label, spec) in specs {
        conditions.push((label.clone(), apply_affine(image, spec)));
    }
    run_conditions(handle, fx, config, conditions, jobs)
}

/// Embeds the non-defective baseline plus every defect condition.
pub fn run_defect_suite(
    handle: &GeneratorHandle,
    fx: &FeatureExtractorHandle,
    image: &ImageBuffer,
    config: &EmbedConfig,
    specs: &[(String, DefectSpec)],
    jobs: usize,
) -> Result<StressReport> {
    let mut conditions = vec![("non_defective".to_string(), image.clone())];
    for (label, spec) in specs {
        conditions.push((label.clone(), apply_defects(image, spec)?));
    }
    run_conditions(handle, fx, config, conditions, jobs)
}

/// One row of the initialization comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct InitComparisonRow {
    pub target: String,
    pub init: String,
    pub loss_total: f64,
    pub dist_to_mean: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InitReport {
    pub config_hash: u64,
    pub rows: Vec<InitComparisonRow>,
}

impl InitReport {
    pub fn to_csv(&self) -> String {
        let mut out = format!("# config_hash={:016x}\n", self.config_hash);
        out.push_str("target,init,loss_total,loss_total_x1e5,dist_to_mean\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                r.target,
                r.init,
                r.loss_total,
                r.loss_total * 1e5,
                r.dist_to_mean
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

/// For each target, embeds once from the mean latent and once from a random
/// initialization, reporting (loss, distance to mean) pairs in the
/// published column layout.
pub fn run_init_comparison(
    handle: &GeneratorHandle,
    fx: &FeatureExtractorHandle,
    targets: &[(String, ImageBuffer)],
    config: &EmbedConfig,
    jobs: usize,
) -> Result<InitReport> {
    let mut runs = Vec::new();
    for (label, target) in targets {
        for (init_label, init) in [
            ("mean", InitStrategy::MeanLatent),
            ("random", InitStrategy::RandomUniform),
        ] {
            runs.push((label.clone(), init_label.to_string(), init, target.clone()));
        }
    }
    let execute = |(target_label, init_label, init, target): &(
        String,
        String,
        InitStrategy,
        ImageBuffer,
    )|
     -> Result<InitComparisonRow> {
        let run_config = EmbedConfig {
            init: init.clone(),
            ..config.clone()
        };
        let result = embed(handle, fx, target, &run_config)?;
        Ok(InitComparisonRow {
            target: target_label.clone(),
            init: init_label.clone(),
            loss_total: result.best_total,
            dist_to_mean: result.dist_to_mean,
        })
    };
    let rows: Result<Vec<InitComparisonRow>> = if jobs > 1 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?
            .install(|| runs.par_iter().map(execute).collect())
    } else {
        runs.iter().map(execute).collect()
    };
    Ok(InitReport {
        config_hash: config_fingerprint(config),
        rows: rows?,
    })
}

/// Rounds of iterative re-embedding rendered as a stress report, one row
/// per round.
pub fn iterative_report(config: &EmbedConfig, results: &[EmbedResult]) -> StressReport {
    StressReport {
        config_hash: config_fingerprint(config),
        rows: results
            .iter()
            .enumerate()
            .map(|(k, r)| StressRow {
                condition: format!("round_{}", k + 1),
                loss_total: r.best_total,
                dist_to_mean: r.dist_to_mean,
                steps: config.steps,
                seed: config.seed,
            })
            .collect(),
    }
}
