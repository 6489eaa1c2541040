//! Run configuration: benchmark defaults, key=value file parsing, and flag
//! overrides. Unknown keys are rejected; every effective value can be echoed
//! so runs are self-describing.

use std::path::Path;

use dml_core::DmlConfig;

use crate::CliError;

/// Effective configuration of a training or comparison run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub dml: DmlConfig,
    /// Fraction of the data used for training in `compare`'s internal split.
    pub train_fraction: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            dml: DmlConfig::default(),
            train_fraction: 0.8,
        }
    }
}

/// CLI flag overrides; they win over both defaults and file values.
#[derive(Debug, Clone, Copy, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub meta_fraction: Option<f64>,
    pub alpha: Option<f64>,
    pub lambda: Option<f64>,
    pub mc_samples: Option<usize>,
    pub ig_steps: Option<usize>,
}

impl RunConfig {
    /// Defaults, then file values, then flag overrides. Component seeds are
    /// re-derived from the final master seed at the end.
    pub fn load(path: Option<&Path>, overrides: &Overrides) -> Result<RunConfig, CliError> {
        let mut config = RunConfig::default();
        let mut seed = config.dml.seed;
        if let Some(path) = path {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
            for (line_no, raw) in text.lines().enumerate() {
                let line = raw.split('#').next().unwrap_or("").trim();
                if line.is_empty() {
                    continue;
                }
                let Some((key, value)) = line.split_once('=') else {
                    return Err(CliError::Usage(format!(
                        "config line {}: expected key=value, got {raw:?}",
                        line_no + 1
                    )));
                };
                config
                    .apply(key.trim(), value.trim(), &mut seed)
                    .map_err(|msg| {
                        CliError::Usage(format!("config line {}: {msg}", line_no + 1))
                    })?;
            }
        }
        if let Some(s) = overrides.seed {
            seed = s;
        }
        if let Some(v) = overrides.meta_fraction {
            config.dml.meta_fraction = v;
        }
        if let Some(v) = overrides.alpha {
            config.dml.gate.alpha = v;
        }
        if let Some(v) = overrides.lambda {
            config.dml.attribution.lambda = v;
        }
        if let Some(v) = overrides.mc_samples {
            config.dml.mc_samples = v;
        }
        if let Some(v) = overrides.ig_steps {
            config.dml.attribution.steps = v;
        }
        config.dml.set_seed(seed);
        Ok(config)
    }

    fn apply(&mut self, key: &str, value: &str, seed: &mut u64) -> Result<(), String> {
        fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, String>
        where
            T::Err: std::fmt::Display,
        {
            value
                .parse()
                .map_err(|e| format!("invalid value {value:?} for {key}: {e}"))
        }
        fn parse_sizes(key: &str, value: &str) -> Result<Vec<usize>, String> {
            value
                .split(',')
                .map(|v| parse::<usize>(key, v.trim()))
                .collect()
        }

        match key {
            "seed" => *seed = parse(key, value)?,
            "meta_fraction" => self.dml.meta_fraction = parse(key, value)?,
            "mc_samples" => self.dml.mc_samples = parse(key, value)?,
            "alpha" => self.dml.gate.alpha = parse(key, value)?,
            "lambda" => self.dml.attribution.lambda = parse(key, value)?,
            "ig_steps" => self.dml.attribution.steps = parse(key, value)?,
            "train_fraction" => self.train_fraction = parse(key, value)?,
            "gbrt.n_estimators" => self.dml.gbrt.n_estimators = parse(key, value)?,
            "gbrt.learning_rate" => self.dml.gbrt.learning_rate = parse(key, value)?,
            "gbrt.max_depth" => self.dml.gbrt.max_depth = parse(key, value)?,
            "gbrt.min_samples_leaf" => self.dml.gbrt.min_samples_leaf = parse(key, value)?,
            "mlp.hidden_sizes" => self.dml.mlp.hidden_sizes = parse_sizes(key, value)?,
            "mlp.dropout_rate" => self.dml.mlp.dropout_rate = parse(key, value)?,
            "mlp.epochs" => self.dml.mlp.epochs = parse(key, value)?,
            "mlp.batch_size" => self.dml.mlp.batch_size = parse(key, value)?,
            "mlp.learning_rate" => self.dml.mlp.learning_rate = parse(key, value)?,
            "mlp.momentum" => self.dml.mlp.momentum = parse(key, value)?,
            "gate.hidden_sizes" => self.dml.gate.hidden_sizes = parse_sizes(key, value)?,
            "gate.epochs" => self.dml.gate.epochs = parse(key, value)?,
            "gate.batch_size" => self.dml.gate.batch_size = parse(key, value)?,
            "gate.learning_rate" => self.dml.gate.learning_rate = parse(key, value)?,
            "gate.momentum" => self.dml.gate.momentum = parse(key, value)?,
            other => return Err(format!("unknown configuration key {other:?}")),
        }
        Ok(())
    }

    /// Every effective value as `key=value`, in a fixed order.
    pub fn echo_lines(&self) -> Vec<String> {
        let sizes = |v: &[usize]| {
            v.iter()
                .map(usize::to_string)
                .collect::<Vec<_>>()
                .join(",")
        };
        vec![
            format!("seed={}", self.dml.seed),
            format!("train_fraction={}", self.train_fraction),
            format!("meta_fraction={}", self.dml.meta_fraction),
            format!("mc_samples={}", self.dml.mc_samples),
            format!("alpha={}", self.dml.gate.alpha),
            format!("lambda={}", self.dml.attribution.lambda),
            format!("ig_steps={}", self.dml.attribution.steps),
            format!("gbrt.n_estimators={}", self.dml.gbrt.n_estimators),
            format!("gbrt.learning_rate={}", self.dml.gbrt.learning_rate),
            format!("gbrt.max_depth={}", self.dml.gbrt.max_depth),
            format!("gbrt.min_samples_leaf={}", self.dml.gbrt.min_samples_leaf),
            format!("mlp.hidden_sizes={}", sizes(&self.dml.mlp.hidden_sizes)),
            format!("mlp.dropout_rate={}", self.dml.mlp.dropout_rate),
            format!("mlp.epochs={}", self.dml.mlp.epochs),
            format!("mlp.batch_size={}", self.dml.mlp.batch_size),
            format!("mlp.learning_rate={}", self.dml.mlp.learning_rate),
            format!("mlp.momentum={}", self.dml.mlp.momentum),
            format!("gate.hidden_sizes={}", sizes(&self.dml.gate.hidden_sizes)),
            format!("gate.epochs={}", self.dml.gate.epochs),
            format!("gate.batch_size={}", self.dml.gate.batch_size),
            format!("gate.learning_rate={}", self.dml.gate.learning_rate),
            format!("gate.momentum={}", self.dml.gate.momentum),
        ]
    }
}
