//! Plain-text run configuration: `key = value` lines mirroring the embed
//! settings. Precedence is CLI flag > config file > built-in default;
//! unknown keys are rejected.

use std::path::Path;

use lsg_core::embedder::EmbedConfig;

use crate::errors::{CliError, CliResult};

/// String-level settings, resolved in precedence order before being turned
/// into an `EmbedConfig`.
#[derive(Debug, Clone)]
pub struct Settings {
    pub init: String,
    pub space: String,
    pub steps: usize,
    pub lr: f64,
    pub lambda_mse: f64,
    pub lambda_features: [f64; 4],
    pub loss_resolution: usize,
    pub seed: u64,
    pub record_every: usize,
    pub mean_samples: usize,
}

impl Default for Settings {
    fn default() -> Self {
        let base = EmbedConfig::default();
        Self {
            init: "mean".to_string(),
            space: "wplus".to_string(),
            steps: base.steps,
            lr: base.learning_rate,
            lambda_mse: base.weights.lambda_mse,
            lambda_features: base.weights.lambda_features,
            loss_resolution: base.weights.loss_resolution,
            seed: base.seed,
            record_every: base.record_every,
            mean_samples: base.mean_samples,
        }
    }
}

impl Settings {
    pub fn apply_file(&mut self, path: &Path) -> CliResult<()> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("config file {}: {e}", path.display())))?;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| CliError::Args(format!("config line {}: expected key=value", lineno + 1)))?;
            self.set(key.trim(), value.trim())
                .map_err(|e| CliError::Args(format!("config line {}: {e}", lineno + 1)))?;
        }
        Ok(())
    }

    fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, String> {
            value
                .parse()
                .map_err(|_| format!("bad value `{value}` for {key}"))
        }
        match key {
            "init" => self.init = value.to_string(),
            "space" => self.space = value.to_string(),
            "steps" => self.steps = parse(key, value)?,
            "lr" => self.lr = parse(key, value)?,
            "lambda_mse" => self.lambda_mse = parse(key, value)?,
            "lambda1" => self.lambda_features[0] = parse(key, value)?,
            "lambda2" => self.lambda_features[1] = parse(key, value)?,
            "lambda3" => self.lambda_features[2] = parse(key, value)?,
            "lambda4" => self.lambda_features[3] = parse(key, value)?,
            "loss_resolution" => self.loss_resolution = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "record_every" => self.record_every = parse(key, value)?,
            "mean_samples" => self.mean_samples = parse(key, value)?,
            other => return Err(format!("unknown key `{other}`")),
        }
        Ok(())
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("init={}\n", self.init));
        out.push_str(&format!("space={}\n", self.space));
        out.push_str(&format!("steps={}\n", self.steps));
        out.push_str(&format!("lr={}\n", self.lr));
        out.push_str(&format!("lambda_mse={}\n", self.lambda_mse));
        for (i, l) in self.lambda_features.iter().enumerate() {
            out.push_str(&format!("lambda{}={}\n", i + 1, l));
        }
        out.push_str(&format!("loss_resolution={}\n", self.loss_resolution));
        out.push_str(&format!("seed={}\n", self.seed));
        out.push_str(&format!("record_every={}\n", self.record_every));
        out.push_str(&format!("mean_samples={}\n", self.mean_samples));
        out
    }
}
