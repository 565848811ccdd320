//! `lsg`: embed images into the extended style space of a layered
//! generator, synthesize from saved codes, run latent-space operations,
//! and drive the stress suites.

mod errors;
mod imgio;
mod runfile;

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use lsg_core::embedder::{
    embed, iterative_embed, EmbedConfig, EmbedResult, InitStrategy, LatentSpace,
};
use lsg_core::generator::{
    build_toy_generator, load_checkpoint, GeneratorConfig, GeneratorHandle,
};
use lsg_core::latentfile;
use lsg_core::latentops;
use lsg_core::perceptual::{
    build_random_extractor, load_extractor, save_extractor, FeatureExtractorConfig,
    FeatureExtractorHandle, LossWeights,
};
use lsg_core::stresslab::{
    self, iterative_report, paper_affine_suite, run_affine_suite, run_defect_suite,
    run_init_comparison, DefectSpec,
};

use errors::{CliError, CliResult};
use runfile::Settings;

#[derive(Parser)]
#[command(
    name = "lsg",
    version,
    about = "Latent-space embedding toolkit for a layered style-based generator"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Create a seeded toy generator checkpoint.
    MakeGenerator(MakeGeneratorArgs),
    /// Create a seeded feature-extractor checkpoint.
    MakeExtractor(MakeExtractorArgs),
    /// Embed an image into the generator's latent space.
    Embed(EmbedArgs),
    /// Synthesize an image from a saved latent code.
    Synth(SynthArgs),
    /// Render a morph sequence between two latent codes.
    Morph(MorphArgs),
    /// Crossover: content rows up to the split, style rows after.
    Stylemix(StylemixArgs),
    /// Apply an expression direction to a target latent.
    Expr(ExprArgs),
    /// Estimate the mean style vector and save it as a broadcast code.
    MeanLatent(MeanLatentArgs),
    /// Stress protocols producing CSV reports.
    #[command(subcommand)]
    Stress(StressCmd),
    /// Pairwise latent distance matrix with labeled CSV export.
    Distances(DistancesArgs),
}

#[derive(Args)]
struct MakeGeneratorArgs {
    #[arg(long, default_value_t = 64)]
    resolution: usize,
    #[arg(long = "style-dim", default_value_t = 64)]
    style_dim: usize,
    #[arg(long = "mapping-layers", default_value_t = 3)]
    mapping_layers: usize,
    #[arg(long = "base-channels", default_value_t = 4)]
    base_channels: usize,
    #[arg(long = "channel-cap", default_value_t = 32)]
    channel_cap: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct MakeExtractorArgs {
    /// Channels of the four tap points.
    #[arg(long, value_delimiter = ',', num_args = 4, default_values_t = [8usize, 8, 16, 16])]
    channels: Vec<usize>,
    #[arg(long = "mid-channels", default_value_t = 8)]
    mid_channels: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

/// Embed settings shared by `embed` and the stress suites. Precedence:
/// CLI flag > --config file > built-in default.
#[derive(Args, Clone)]
struct EmbedFlags {
    /// Key=value run configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// mean | random | path to a latent file.
    #[arg(long)]
    init: Option<String>,
    /// wplus | w | z.
    #[arg(long)]
    space: Option<String>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long = "lambda-mse")]
    lambda_mse: Option<f64>,
    #[arg(long = "loss-resolution")]
    loss_resolution: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long = "record-every")]
    record_every: Option<usize>,
    #[arg(long = "mean-samples")]
    mean_samples: Option<usize>,
}

impl EmbedFlags {
    fn resolve(&self) -> CliResult<Settings> {
        let mut s = Settings::default();
        if let Some(path) = &self.config {
            s.apply_file(path)?;
        }
        if let Some(v) = &self.init {
            s.init = v.clone();
        }
        if let Some(v) = &self.space {
            s.space = v.clone();
        }
        if let Some(v) = self.steps {
            s.steps = v;
        }
        if let Some(v) = self.lr {
            s.lr = v;
        }
        if let Some(v) = self.lambda_mse {
            s.lambda_mse = v;
        }
        if let Some(v) = self.loss_resolution {
            s.loss_resolution = v;
        }
        if let Some(v) = self.seed {
            s.seed = v;
        }
        if let Some(v) = self.record_every {
            s.record_every = v;
        }
        if let Some(v) = self.mean_samples {
            s.mean_samples = v;
        }
        Ok(s)
    }
}

#[derive(Args)]
struct EmbedArgs {
    #[arg(long)]
    image: PathBuf,
    #[arg(long)]
    generator: PathBuf,
    /// Extractor checkpoint; a seeded random extractor is built when absent.
    #[arg(long)]
    extractor: Option<PathBuf>,
    #[command(flatten)]
    flags: EmbedFlags,
    #[arg(long = "out-latent")]
    out_latent: Option<PathBuf>,
    #[arg(long = "out-image")]
    out_image: Option<PathBuf>,
    /// Write the loss trace CSV here.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Print the resolved settings and exit without running.
    #[arg(long = "print-config")]
    print_config: bool,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    latent: PathBuf,
    #[arg(long)]
    generator: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct MorphArgs {
    #[arg(long)]
    a: PathBuf,
    #[arg(long)]
    b: PathBuf,
    #[arg(long)]
    generator: PathBuf,
    #[arg(long, default_value_t = 16)]
    frames: usize,
    #[arg(long = "out-dir")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct StylemixArgs {
    #[arg(long)]
    content: PathBuf,
    #[arg(long)]
    style: PathBuf,
    #[arg(long)]
    generator: PathBuf,
    /// Crossover split; defaults to half the layer count (9 of 18).
    #[arg(long)]
    split: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
#[command(allow_negative_numbers = true)]
struct ExprArgs {
    #[arg(long)]
    target: PathBuf,
    #[arg(long)]
    neutral: PathBuf,
    #[arg(long)]
    expressive: PathBuf,
    #[arg(long)]
    generator: PathBuf,
    #[arg(long, default_value_t = 1.0)]
    lambda: f64,
    #[arg(long, default_value_t = 1.0)]
    threshold: f64,
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    normalize: bool,
    #[arg(long)]
    out: PathBuf,
    /// Also save the shifted latent code.
    #[arg(long = "out-latent")]
    out_latent: Option<PathBuf>,
}

#[derive(Args)]
struct MeanLatentArgs {
    #[arg(long)]
    generator: PathBuf,
    #[arg(long, default_value_t = 10_000)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum StressCmd {
    /// Embed affine-transformed copies of an image (published protocol,
    /// magnitudes scaled to the generator resolution).
    Affine(StressAffineArgs),
    /// Embed defective (occluded) copies of an image.
    Defect(StressDefectArgs),
    /// Re-embed the reconstruction for several rounds.
    Iterate(StressIterateArgs),
    /// Compare mean-latent vs random initialization per target.
    Init(StressInitArgs),
    /// Print the published reference tables (full-scale face model).
    Reference,
}

#[derive(Args, Clone)]
struct StressCommonArgs {
    #[arg(long)]
    image: PathBuf,
    #[arg(long)]
    generator: PathBuf,
    #[arg(long)]
    extractor: Option<PathBuf>,
    #[command(flatten)]
    flags: EmbedFlags,
    #[arg(long)]
    report: PathBuf,
    /// Concurrent embedding jobs. Honored only when LSG_DETERMINISTIC=0;
    /// results are identical either way.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

#[derive(Args)]
struct StressAffineArgs {
    #[command(flatten)]
    common: StressCommonArgs,
}

#[derive(Args)]
struct StressDefectArgs {
    #[command(flatten)]
    common: StressCommonArgs,
    /// Defect rectangle `x,y,w,h`; repeatable. A built-in trio scaled to
    /// the resolution is used when absent.
    #[arg(long = "rect")]
    rects: Vec<String>,
    /// Fill value in [0,1] painted into the rectangles.
    #[arg(long, default_value_t = 1.0)]
    fill: f64,
}

#[derive(Args)]
struct StressIterateArgs {
    #[command(flatten)]
    common: StressCommonArgs,
    #[arg(long, default_value_t = 7)]
    rounds: usize,
}

#[derive(Args)]
struct StressInitArgs {
    #[arg(long, num_args = 1.., required = true)]
    images: Vec<PathBuf>,
    /// One label per image; file stems when absent.
    #[arg(long, num_args = 0..)]
    labels: Vec<String>,
    #[arg(long)]
    generator: PathBuf,
    #[arg(long)]
    extractor: Option<PathBuf>,
    #[command(flatten)]
    flags: EmbedFlags,
    #[arg(long)]
    report: PathBuf,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

#[derive(Args)]
struct DistancesArgs {
    #[arg(long, num_args = 2.., required = true)]
    latents: Vec<PathBuf>,
    /// One label per latent; file stems when absent.
    #[arg(long, num_args = 0..)]
    labels: Vec<String>,
    #[arg(long)]
    out: PathBuf,
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.cmd {
        Cmd::MakeGenerator(args) => cmd_make_generator(args),
        Cmd::MakeExtractor(args) => cmd_make_extractor(args),
        Cmd::Embed(args) => cmd_embed(args),
        Cmd::Synth(args) => cmd_synth(args),
        Cmd::Morph(args) => cmd_morph(args),
        Cmd::Stylemix(args) => cmd_stylemix(args),
        Cmd::Expr(args) => cmd_expr(args),
        Cmd::MeanLatent(args) => cmd_mean_latent(args),
        Cmd::Stress(cmd) => cmd_stress(cmd),
        Cmd::Distances(args) => cmd_distances(args),
    }
}

fn load_generator(path: &Path) -> CliResult<GeneratorHandle> {
    load_checkpoint(path).map_err(CliError::from)
}

/// The extractor checkpoint when given, otherwise the deterministic slim
/// random extractor (seed 0).
fn load_fx(path: &Option<PathBuf>) -> CliResult<FeatureExtractorHandle> {
    match path {
        Some(p) => load_extractor(p).map_err(CliError::from),
        None => build_random_extractor(&FeatureExtractorConfig::slim(0)).map_err(CliError::from),
    }
}

fn build_embed_config(s: &Settings) -> CliResult<EmbedConfig> {
    let init = match s.init.as_str() {
        "mean" => InitStrategy::MeanLatent,
        "random" => InitStrategy::RandomUniform,
        path => InitStrategy::Provided(latentfile::read_latent(path).map_err(CliError::from)?),
    };
    let space = match s.space.as_str() {
        "wplus" => LatentSpace::WPlus,
        "w" => LatentSpace::W,
        "z" => LatentSpace::Z,
        other => return Err(CliError::Args(format!("unknown latent space `{other}`"))),
    };
    Ok(EmbedConfig {
        init,
        space,
        steps: s.steps,
        learning_rate: s.lr,
        weights: LossWeights {
            lambda_mse: s.lambda_mse,
            lambda_features: s.lambda_features,
            loss_resolution: s.loss_resolution,
        },
        seed: s.seed,
        record_every: s.record_every,
        mean_samples: s.mean_samples,
        ..EmbedConfig::default()
    })
}

/// LSG_DETERMINISTIC gates concurrency: any value but `0` pins suites to
/// one job so runs replay exactly, including output ordering.
fn effective_jobs(requested: usize) -> usize {
    match std::env::var("LSG_DETERMINISTIC") {
        Ok(v) if v == "0" => requested.max(1),
        _ => 1,
    }
}

fn cmd_make_generator(args: MakeGeneratorArgs) -> CliResult<()> {
    let config = GeneratorConfig {
        resolution: args.resolution,
        style_dim: args.style_dim,
        mapping_layers: args.mapping_layers,
        base_channels: args.base_channels,
        channel_cap: args.channel_cap,
        seed: args.seed,
    };
    let handle = build_toy_generator(&config)?;
    handle.save_checkpoint(&args.out)?;
    println!(
        "wrote generator checkpoint to {} ({} style layers, fingerprint {:016x})",
        args.out.display(),
        handle.num_style_layers(),
        handle.weight_fingerprint()
    );
    Ok(())
}

fn cmd_make_extractor(args: MakeExtractorArgs) -> CliResult<()> {
    let config = FeatureExtractorConfig {
        channels: [args.channels[0], args.channels[1], args.channels[2], args.channels[3]],
        mid_channels: args.mid_channels,
        seed: args.seed,
    };
    let fx = build_random_extractor(&config)?;
    save_extractor(&fx, &args.out)?;
    println!("wrote extractor checkpoint to {}", args.out.display());
    Ok(())
}

fn print_result_line(result: &EmbedResult) {
    println!(
        "final total={} percept={} mse={} dist_to_mean={}",
        result.final_loss.total,
        result.final_loss.percept,
        result.final_loss.mse,
        result.dist_to_mean
    );
}

fn cmd_embed(args: EmbedArgs) -> CliResult<()> {
    let settings = args.flags.resolve()?;
    if args.print_config {
        print!("{}", settings.render());
        return Ok(());
    }
    let handle = load_generator(&args.generator)?;
    let fx = load_fx(&args.extractor)?;
    let target = imgio::read_png(&args.image)?;
    let config = build_embed_config(&settings)?;
    let result = embed(&handle, &fx, &target, &config)?;

    // Exported artifacts derive from the f32-quantized latent so that a
    // later synth of the saved file reproduces them bit-exactly.
    let quantized = latentfile::quantize(&result.latent);
    if let Some(path) = &args.out_latent {
        latentfile::write_latent(&quantized, path)?;
    }
    if let Some(path) = &args.out_image {
        let image = handle.synthesize(&quantized, handle.noise())?;
        imgio::write_png(&image, path)?;
    }
    if let Some(path) = &args.trace {
        result.trace.write_csv(path)?;
    }
    print_result_line(&result);
    Ok(())
}

fn cmd_synth(args: SynthArgs) -> CliResult<()> {
    let handle = load_generator(&args.generator)?;
    let latent = latentfile::read_latent(&args.latent)?;
    let image = handle.synthesize(&latent, handle.noise())?;
    imgio::write_png(&image, &args.out)?;
    Ok(())
}

fn cmd_morph(args: MorphArgs) -> CliResult<()> {
    let handle = load_generator(&args.generator)?;
    let a = latentfile::read_latent(&args.a)?;
    let b = latentfile::read_latent(&args.b)?;
    let frames = latentops::morph_sequence(&handle, &a, &b, args.frames)?;
    std::fs::create_dir_all(&args.out_dir)?;
    for (k, frame) in frames.iter().enumerate() {
        imgio::write_png(frame, &args.out_dir.join(format!("frame_{k:03}.png")))?;
    }
    println!("wrote {} frames to {}", frames.len(), args.out_dir.display());
    Ok(())
}

fn cmd_stylemix(args: StylemixArgs) -> CliResult<()> {
    let handle = load_generator(&args.generator)?;
    let content = latentfile::read_latent(&args.content)?;
    let style = latentfile::read_latent(&args.style)?;
    let split = args
        .split
        .unwrap_or_else(|| latentops::default_split(handle.num_style_layers()));
    let mixed = latentops::crossover(&content, &style, split)?;
    let image = handle.synthesize(&mixed, handle.noise())?;
    imgio::write_png(&image, &args.out)?;
    println!("crossover at split {split} of {}", handle.num_style_layers());
    Ok(())
}

fn cmd_expr(args: ExprArgs) -> CliResult<()> {
    let handle = load_generator(&args.generator)?;
    let target = latentfile::read_latent(&args.target)?;
    let neutral = latentfile::read_latent(&args.neutral)?;
    let expressive = latentfile::read_latent(&args.expressive)?;
    let dir = latentops::expression_direction(&neutral, &expressive, args.threshold, args.normalize)?;
    let shifted = latentops::apply_expression(&target, &dir, args.lambda)?;
    let image = handle.synthesize(&shifted, handle.noise())?;
    imgio::write_png(&image, &args.out)?;
    if let Some(path) = &args.out_latent {
        latentfile::write_latent(&latentfile::quantize(&shifted), path)?;
    }
    Ok(())
}

fn cmd_mean_latent(args: MeanLatentArgs) -> CliResult<()> {
    let handle = load_generator(&args.generator)?;
    let mean = handle.mean_latent(args.samples, args.seed)?;
    let latent = latentfile::quantize(&mean.broadcast(handle.num_style_layers()));
    latentfile::write_latent(&latent, &args.out)?;
    println!(
        "wrote mean latent ({} samples, seed {}) to {}",
        args.samples,
        args.seed,
        args.out.display()
    );
    Ok(())
}

fn stem_labels(paths: &[PathBuf], labels: &[String]) -> CliResult<Vec<String>> {
    if labels.is_empty() {
        return Ok(paths
            .iter()
            .map(|p| {
                p.file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_else(|| p.display().to_string())
            })
            .collect());
    }
    if labels.len() != paths.len() {
        return Err(CliError::Args(format!(
            "{} labels for {} files",
            labels.len(),
            paths.len()
        )));
    }
    Ok(labels.to_vec())
}

fn parse_rect(spec: &str) -> CliResult<(usize, usize, usize, usize)> {
    let parts: Vec<&str> = spec.split(',').collect();
    if parts.len() != 4 {
        return Err(CliError::Args(format!("bad rectangle `{spec}`, expected x,y,w,h")));
    }
    let mut vals = [0usize; 4];
    for (v, p) in vals.iter_mut().zip(&parts) {
        *v = p
            .trim()
            .parse()
            .map_err(|_| CliError::Args(format!("bad rectangle `{spec}`")))?;
    }
    Ok((vals[0], vals[1], vals[2], vals[3]))
}

/// Built-in occlusions mirroring the published eyes/nose/mouth protocol,
/// scaled to the image side.
fn default_defects(side: usize) -> Vec<(String, DefectSpec)> {
    let q = side / 4;
    let eyes = (q, q, 2 * q, q);
    let mouth = (q, side * 5 / 8, 2 * q, side / 8);
    vec![
        ("eyes".to_string(), DefectSpec::white(vec![eyes])),
        ("mouth".to_string(), DefectSpec::white(vec![mouth])),
        (
            "eyes_and_mouth".to_string(),
            DefectSpec::white(vec![eyes, mouth]),
        ),
    ]
}

fn cmd_stress(cmd: StressCmd) -> CliResult<()> {
    match cmd {
        StressCmd::Affine(args) => {
            let c = &args.common;
            let handle = load_generator(&c.generator)?;
            let fx = load_fx(&c.extractor)?;
            let image = imgio::read_png(&c.image)?;
            let config = build_embed_config(&c.flags.resolve()?)?;
            let specs = paper_affine_suite(handle.resolution());
            let report = run_affine_suite(&handle, &fx, &image, &config, &specs, effective_jobs(c.jobs))?;
            report.write_csv(&c.report)?;
            println!("wrote affine report ({} rows) to {}", report.rows.len(), c.report.display());
            Ok(())
        }
        StressCmd::Defect(args) => {
            let c = &args.common;
            let handle = load_generator(&c.generator)?;
            let fx = load_fx(&c.extractor)?;
            let image = imgio::read_png(&c.image)?;
            let config = build_embed_config(&c.flags.resolve()?)?;
            let specs = if args.rects.is_empty() {
                default_defects(image.side())
            } else {
                let rects = args
                    .rects
                    .iter()
                    .map(|r| parse_rect(r))
                    .collect::<CliResult<Vec<_>>>()?;
                vec![(
                    "custom".to_string(),
                    DefectSpec {
                        rectangles: rects,
                        fill: args.fill,
                    },
                )]
            };
            let report = run_defect_suite(&handle, &fx, &image, &config, &specs, effective_jobs(c.jobs))?;
            report.write_csv(&c.report)?;
            println!("wrote defect report ({} rows) to {}", report.rows.len(), c.report.display());
            Ok(())
        }
        StressCmd::Iterate(args) => {
            let c = &args.common;
            let handle = load_generator(&c.generator)?;
            let fx = load_fx(&c.extractor)?;
            let image = imgio::read_png(&c.image)?;
            let config = build_embed_config(&c.flags.resolve()?)?;
            let results = iterative_embed(&handle, &fx, &image, &config, args.rounds)?;
            let report = iterative_report(&config, &results);
            report.write_csv(&c.report)?;
            let mut prev = handle.synthesize(&results[0].latent, handle.noise())?;
            for (k, r) in results.iter().enumerate().skip(1) {
                let img = handle.synthesize(&r.latent, handle.noise())?;
                println!(
                    "round {} -> {}: image drift rmse {}",
                    k,
                    k + 1,
                    prev.rmse(&img)?
                );
                prev = img;
            }
            println!("wrote iterate report ({} rounds) to {}", results.len(), c.report.display());
            Ok(())
        }
        StressCmd::Init(args) => {
            let handle = load_generator(&args.generator)?;
            let fx = load_fx(&args.extractor)?;
            let labels = stem_labels(&args.images, &args.labels)?;
            let mut targets = Vec::new();
            for (path, label) in args.images.iter().zip(labels) {
                targets.push((label, imgio::read_png(path)?));
            }
            let config = build_embed_config(&args.flags.resolve()?)?;
            let report = run_init_comparison(&handle, &fx, &targets, &config, effective_jobs(args.jobs))?;
            report.write_csv(&args.report)?;
            println!("wrote init report ({} rows) to {}", report.rows.len(), args.report.display());
            Ok(())
        }
        StressCmd::Reference => {
            println!("published affine results (full-scale face model):");
            println!("condition,loss_x1e5,dist_to_mean");
            for r in stresslab::reference::AFFINE_TABLE {
                println!("{},{},{}", r.condition, r.loss_x1e5, r.dist_to_mean);
            }
            println!();
            println!("published defect results:");
            println!("condition,loss_x1e5,dist_to_mean");
            for r in stresslab::reference::DEFECT_TABLE {
                println!("{},{},{}", r.condition, r.loss_x1e5, r.dist_to_mean);
            }
            println!();
            println!("published initialization results:");
            println!("class,init,loss_x1e5,dist_to_mean");
            for r in stresslab::reference::INIT_TABLE {
                println!("{},{},{},{}", r.class, r.init, r.loss_x1e5, r.dist_to_mean);
            }
            Ok(())
        }
    }
}

fn cmd_distances(args: DistancesArgs) -> CliResult<()> {
    let labels = stem_labels(&args.latents, &args.labels)?;
    let mut latents = Vec::new();
    for path in &args.latents {
        latents.push(latentfile::read_latent(path)?);
    }
    let matrix = latentops::pairwise_distances(&latents, &labels)?;
    matrix.write_csv(&args.out)?;
    print!("{}", matrix.to_csv());
    Ok(())
}
