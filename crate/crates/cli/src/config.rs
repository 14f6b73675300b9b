//! Flat `key = value` experiment configuration. Full-line and trailing `#`
//! comments are allowed, nesting is not, unknown keys are rejected. CLI
//! flags are applied on top through the same `set` path as file lines.

use std::fmt;

use pairmem_core::{NegativeHalf, PositiveHalf, TrainConfig, TrainMode, WeightScheme};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataSource {
    Synthetic,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PosName {
    Contrastive,
    Binomial,
    MultiSimilarity,
    InfoNce,
    Constant,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NegName {
    Contrastive,
    Binomial,
    MultiSimilarity,
    InfoNce,
    Ramp,
}

impl fmt::Display for PosName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PosName::Contrastive => "contrastive",
            PosName::Binomial => "binomial",
            PosName::MultiSimilarity => "multi-similarity",
            PosName::InfoNce => "infonce",
            PosName::Constant => "constant",
        })
    }
}

impl fmt::Display for NegName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NegName::Contrastive => "contrastive",
            NegName::Binomial => "binomial",
            NegName::MultiSimilarity => "multi-similarity",
            NegName::InfoNce => "infonce",
            NegName::Ramp => "ramp",
        })
    }
}

/// A rejected key or value; `line` is filled in when the source was a file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ConfigError {
    UnknownKey { key: String },
    BadValue { key: String, value: String, expect: &'static str },
    MissingSeparator { line: usize },
    AtLine { line: usize, message: String },
    MissingCsvPath,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConfigError::UnknownKey { key } => write!(f, "unknown config key `{key}`"),
            ConfigError::BadValue { key, value, expect } => {
                write!(f, "bad value `{value}` for `{key}`: expected {expect}")
            }
            ConfigError::MissingSeparator { line } => {
                write!(f, "config line {line}: expected `key = value`")
            }
            ConfigError::AtLine { line, message } => write!(f, "config line {line}: {message}"),
            ConfigError::MissingCsvPath => {
                write!(f, "dataset = csv requires a csv_path")
            }
        }
    }
}

impl std::error::Error for ConfigError {}

/// Every experiment knob with its default. `resolved` renders the complete
/// state back as one canonical line, so re-running a recorded config
/// reproduces the run.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub dataset: DataSource,
    pub csv_path: Option<String>,
    pub num_classes: usize,
    pub per_class: usize,
    pub d_in: usize,
    pub center_scale: f64,
    pub noise_sigma: f64,
    pub data_seed: u64,
    pub train_fraction: f64,
    pub split_seed: u64,
    pub mode: TrainMode,
    pub momentum: f64,
    /// Memory capacity in batches: capacity = memory_size × batch size.
    pub memory_size: usize,
    pub pos: PosName,
    pub neg: NegName,
    pub alpha: f64,
    pub beta: f64,
    pub lambda: f64,
    pub tau: f64,
    pub a: f64,
    pub b: f64,
    pub classes_per_batch: usize,
    pub samples_per_class: usize,
    pub iterations: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub seed: u64,
    pub drift_interval: usize,
    pub eval_interval: usize,
    pub eval_ks: Vec<usize>,
    pub hard_neg_threshold: f64,
    pub probe_size: usize,
    pub hidden_dims: Vec<usize>,
    pub embed_dim: usize,
    pub lr_decay: bool,
    pub include_batch_pairs: bool,
    pub enqueue_with_main: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let t = TrainConfig::default();
        ExperimentConfig {
            dataset: DataSource::Synthetic,
            csv_path: None,
            num_classes: 16,
            per_class: 64,
            d_in: 16,
            center_scale: 1.0,
            noise_sigma: 0.3,
            data_seed: 1,
            train_fraction: 0.5,
            split_seed: 1,
            mode: t.mode,
            momentum: t.momentum,
            memory_size: t.memory_batches,
            pos: PosName::Contrastive,
            neg: NegName::Contrastive,
            alpha: 2.0,
            beta: 50.0,
            lambda: 0.5,
            tau: 0.2,
            a: 0.4,
            b: 0.6,
            classes_per_batch: t.classes_per_batch,
            samples_per_class: t.samples_per_class,
            iterations: t.iterations,
            learning_rate: t.learning_rate,
            weight_decay: t.weight_decay,
            beta1: t.beta1,
            beta2: t.beta2,
            epsilon: t.epsilon,
            seed: t.seed,
            drift_interval: t.drift_interval,
            eval_interval: t.eval_interval,
            eval_ks: t.eval_ks,
            hard_neg_threshold: t.hard_neg_threshold,
            probe_size: t.probe_size,
            hidden_dims: t.hidden_dims,
            embed_dim: t.embed_dim,
            lr_decay: t.lr_decay,
            include_batch_pairs: t.include_batch_pairs,
            enqueue_with_main: t.enqueue_with_main,
        }
    }
}

fn bad(key: &str, value: &str, expect: &'static str) -> ConfigError {
    ConfigError::BadValue {
        key: key.to_string(),
        value: value.to_string(),
        expect,
    }
}

fn parse_f64(key: &str, value: &str) -> Result<f64, ConfigError> {
    value
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| bad(key, value, "a finite real number"))
}

fn parse_usize(key: &str, value: &str) -> Result<usize, ConfigError> {
    value
        .parse::<usize>()
        .map_err(|_| bad(key, value, "a non-negative integer"))
}

fn parse_u64(key: &str, value: &str) -> Result<u64, ConfigError> {
    value
        .parse::<u64>()
        .map_err(|_| bad(key, value, "a non-negative integer"))
}

fn parse_bool(key: &str, value: &str) -> Result<bool, ConfigError> {
    match value {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(bad(key, value, "true or false")),
    }
}

/// Comma-separated integer list; `none` means empty.
fn parse_usize_list(key: &str, value: &str) -> Result<Vec<usize>, ConfigError> {
    if value == "none" {
        return Ok(Vec::new());
    }
    value
        .split(',')
        .map(|part| {
            part.trim()
                .parse::<usize>()
                .map_err(|_| bad(key, value, "a comma-separated integer list or `none`"))
        })
        .collect()
}

fn fmt_usize_list(list: &[usize]) -> String {
    if list.is_empty() {
        return "none".to_string();
    }
    list.iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

impl ExperimentConfig {
    /// Applies one key. Flags and file lines share this path so both get
    /// the same validation.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        match key {
            "dataset" => {
                self.dataset = match value {
                    "synthetic" => DataSource::Synthetic,
                    "csv" => DataSource::Csv,
                    _ => return Err(bad(key, value, "`synthetic` or `csv`")),
                }
            }
            "csv_path" => self.csv_path = Some(value.to_string()),
            "num_classes" => self.num_classes = parse_usize(key, value)?,
            "per_class" => self.per_class = parse_usize(key, value)?,
            "d_in" => self.d_in = parse_usize(key, value)?,
            "center_scale" => {
                let v = parse_f64(key, value)?;
                if v <= 0.0 {
                    return Err(bad(key, value, "a positive scale"));
                }
                self.center_scale = v;
            }
            "noise_sigma" => {
                let v = parse_f64(key, value)?;
                if v < 0.0 {
                    return Err(bad(key, value, "a non-negative sigma"));
                }
                self.noise_sigma = v;
            }
            "data_seed" => self.data_seed = parse_u64(key, value)?,
            "train_fraction" => {
                let v = parse_f64(key, value)?;
                if !(0.0..1.0).contains(&v) || v == 0.0 {
                    return Err(bad(key, value, "a fraction strictly between 0 and 1"));
                }
                self.train_fraction = v;
            }
            "split_seed" => self.split_seed = parse_u64(key, value)?,
            "mode" => {
                self.mode = match value {
                    "minibatch" => TrainMode::MiniBatch,
                    "memory" => TrainMode::Memory,
                    _ => return Err(bad(key, value, "`minibatch` or `memory`")),
                }
            }
            "momentum" => {
                let v = parse_f64(key, value)?;
                if !(0.0..=1.0).contains(&v) {
                    return Err(bad(key, value, "a coefficient in [0, 1]"));
                }
                self.momentum = v;
            }
            "memory_size" => self.memory_size = parse_usize(key, value)?,
            "pos" => {
                self.pos = match value {
                    "contrastive" => PosName::Contrastive,
                    "binomial" => PosName::Binomial,
                    "multi-similarity" | "ms" => PosName::MultiSimilarity,
                    "infonce" => PosName::InfoNce,
                    "constant" => PosName::Constant,
                    _ => {
                        return Err(bad(
                            key,
                            value,
                            "one of contrastive, binomial, multi-similarity, infonce, constant",
                        ))
                    }
                }
            }
            "neg" => {
                self.neg = match value {
                    "contrastive" => NegName::Contrastive,
                    "binomial" => NegName::Binomial,
                    "multi-similarity" | "ms" => NegName::MultiSimilarity,
                    "infonce" => NegName::InfoNce,
                    "ramp" => NegName::Ramp,
                    _ => {
                        return Err(bad(
                            key,
                            value,
                            "one of contrastive, binomial, multi-similarity, infonce, ramp",
                        ))
                    }
                }
            }
            "alpha" => self.alpha = parse_f64(key, value)?,
            "beta" => self.beta = parse_f64(key, value)?,
            "lambda" => self.lambda = parse_f64(key, value)?,
            "tau" => self.tau = parse_f64(key, value)?,
            "a" => self.a = parse_f64(key, value)?,
            "b" => self.b = parse_f64(key, value)?,
            "classes_per_batch" => self.classes_per_batch = parse_usize(key, value)?,
            "samples_per_class" => self.samples_per_class = parse_usize(key, value)?,
            "iterations" => self.iterations = parse_usize(key, value)?,
            "learning_rate" => self.learning_rate = parse_f64(key, value)?,
            "weight_decay" => self.weight_decay = parse_f64(key, value)?,
            "beta1" => self.beta1 = parse_f64(key, value)?,
            "beta2" => self.beta2 = parse_f64(key, value)?,
            "epsilon" => self.epsilon = parse_f64(key, value)?,
            "seed" => self.seed = parse_u64(key, value)?,
            "drift_interval" => self.drift_interval = parse_usize(key, value)?,
            "eval_interval" => self.eval_interval = parse_usize(key, value)?,
            "eval_ks" => self.eval_ks = parse_usize_list(key, value)?,
            "hard_neg_threshold" => self.hard_neg_threshold = parse_f64(key, value)?,
            "probe_size" => self.probe_size = parse_usize(key, value)?,
            "hidden_dims" => self.hidden_dims = parse_usize_list(key, value)?,
            "embed_dim" => self.embed_dim = parse_usize(key, value)?,
            "lr_decay" => self.lr_decay = parse_bool(key, value)?,
            "include_batch_pairs" => self.include_batch_pairs = parse_bool(key, value)?,
            "enqueue_with_main" => self.enqueue_with_main = parse_bool(key, value)?,
            _ => {
                return Err(ConfigError::UnknownKey {
                    key: key.to_string(),
                })
            }
        }
        Ok(())
    }

    /// Parses file content on top of the current state. Later lines win.
    pub fn apply_text(&mut self, text: &str) -> Result<(), ConfigError> {
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .ok_or(ConfigError::MissingSeparator { line })?;
            self.set(key.trim(), value.trim())
                .map_err(|e| ConfigError::AtLine {
                    line,
                    message: e.to_string(),
                })?;
        }
        Ok(())
    }

    /// Cross-key requirements that a single `set` cannot see.
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.dataset == DataSource::Csv && self.csv_path.is_none() {
            return Err(ConfigError::MissingCsvPath);
        }
        Ok(())
    }

    pub fn scheme(&self) -> WeightScheme {
        let positive = match self.pos {
            PosName::Contrastive => PositiveHalf::Contrastive,
            PosName::Binomial => PositiveHalf::Binomial {
                alpha: self.alpha,
                lambda: self.lambda,
            },
            PosName::MultiSimilarity => PositiveHalf::MultiSimilarity {
                alpha: self.alpha,
                lambda: self.lambda,
            },
            PosName::InfoNce => PositiveHalf::InfoNce { tau: self.tau },
            PosName::Constant => PositiveHalf::Constant,
        };
        let negative = match self.neg {
            NegName::Contrastive => NegativeHalf::Contrastive {
                lambda: self.lambda,
            },
            NegName::Binomial => NegativeHalf::Binomial {
                beta: self.beta,
                lambda: self.lambda,
            },
            NegName::MultiSimilarity => NegativeHalf::MultiSimilarity {
                beta: self.beta,
                lambda: self.lambda,
            },
            NegName::InfoNce => NegativeHalf::InfoNce { tau: self.tau },
            NegName::Ramp => NegativeHalf::Ramp {
                a: self.a,
                b: self.b,
            },
        };
        WeightScheme { positive, negative }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            mode: self.mode,
            momentum: self.momentum,
            scheme: self.scheme(),
            classes_per_batch: self.classes_per_batch,
            samples_per_class: self.samples_per_class,
            iterations: self.iterations,
            learning_rate: self.learning_rate,
            weight_decay: self.weight_decay,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
            seed: self.seed,
            drift_interval: self.drift_interval,
            eval_interval: self.eval_interval,
            eval_ks: self.eval_ks.clone(),
            hard_neg_threshold: self.hard_neg_threshold,
            memory_batches: self.memory_size,
            probe_size: self.probe_size,
            hidden_dims: self.hidden_dims.clone(),
            embed_dim: self.embed_dim,
            lr_decay: self.lr_decay,
            include_batch_pairs: self.include_batch_pairs,
            enqueue_with_main: self.enqueue_with_main,
        }
    }

    /// The complete state as one `key=value` line, in a fixed key order.
    /// Feeding this back through `apply_text` reproduces the config.
    pub fn resolved(&self) -> String {
        let mode = match self.mode {
            TrainMode::MiniBatch => "minibatch",
            TrainMode::Memory => "memory",
        };
        let dataset = match self.dataset {
            DataSource::Synthetic => "synthetic",
            DataSource::Csv => "csv",
        };
        let mut parts = vec![format!("dataset={dataset}")];
        if let Some(path) = &self.csv_path {
            parts.push(format!("csv_path={path}"));
        }
        parts.extend([
            format!("num_classes={}", self.num_classes),
            format!("per_class={}", self.per_class),
            format!("d_in={}", self.d_in),
            format!("center_scale={}", self.center_scale),
            format!("noise_sigma={}", self.noise_sigma),
            format!("data_seed={}", self.data_seed),
            format!("train_fraction={}", self.train_fraction),
            format!("split_seed={}", self.split_seed),
            format!("mode={mode}"),
            format!("momentum={}", self.momentum),
            format!("memory_size={}", self.memory_size),
            format!("pos={}", self.pos),
            format!("neg={}", self.neg),
            format!("alpha={}", self.alpha),
            format!("beta={}", self.beta),
            format!("lambda={}", self.lambda),
            format!("tau={}", self.tau),
            format!("a={}", self.a),
            format!("b={}", self.b),
            format!("classes_per_batch={}", self.classes_per_batch),
            format!("samples_per_class={}", self.samples_per_class),
            format!("iterations={}", self.iterations),
            format!("learning_rate={}", self.learning_rate),
            format!("weight_decay={}", self.weight_decay),
            format!("beta1={}", self.beta1),
            format!("beta2={}", self.beta2),
            format!("epsilon={}", self.epsilon),
            format!("seed={}", self.seed),
            format!("drift_interval={}", self.drift_interval),
            format!("eval_interval={}", self.eval_interval),
            format!("eval_ks={}", fmt_usize_list(&self.eval_ks)),
            format!("hard_neg_threshold={}", self.hard_neg_threshold),
            format!("probe_size={}", self.probe_size),
            format!("hidden_dims={}", fmt_usize_list(&self.hidden_dims)),
            format!("embed_dim={}", self.embed_dim),
            format!("lr_decay={}", self.lr_decay),
            format!("include_batch_pairs={}", self.include_batch_pairs),
            format!("enqueue_with_main={}", self.enqueue_with_main),
        ]);
        parts.join(" ")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_lines_override_defaults_in_order() {
        let mut cfg = ExperimentConfig::default();
        cfg.apply_text("iterations = 10\n# full comment\nseed = 7 # trailing\niterations = 20\n")
            .unwrap();
        assert_eq!(cfg.iterations, 20);
        assert_eq!(cfg.seed, 7);
    }

    #[test]
    fn unknown_key_names_the_line() {
        let mut cfg = ExperimentConfig::default();
        let err = cfg.apply_text("iterations = 10\nbogus = 1\n").unwrap_err();
        match err {
            ConfigError::AtLine { line: 2, message } => {
                assert!(message.contains("bogus"), "{message}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_separator_is_rejected() {
        let mut cfg = ExperimentConfig::default();
        assert_eq!(
            cfg.apply_text("just words\n").unwrap_err(),
            ConfigError::MissingSeparator { line: 1 }
        );
    }

    #[test]
    fn bad_values_are_rejected_with_expectation() {
        let mut cfg = ExperimentConfig::default();
        assert!(cfg.set("train_fraction", "1").is_err());
        assert!(cfg.set("train_fraction", "0").is_err());
        assert!(cfg.set("momentum", "1.5").is_err());
        assert!(cfg.set("mode", "batchy").is_err());
        assert!(cfg.set("lr_decay", "yes").is_err());
        assert!(cfg.set("eval_ks", "1,x").is_err());
    }

    #[test]
    fn resolved_round_trips_through_apply_text() {
        let mut cfg = ExperimentConfig::default();
        cfg.set("pos", "binomial").unwrap();
        cfg.set("neg", "ramp").unwrap();
        cfg.set("alpha", "2.5").unwrap();
        cfg.set("hidden_dims", "32,16").unwrap();
        cfg.set("eval_ks", "1,2,4").unwrap();
        cfg.set("lr_decay", "true").unwrap();
        let line = cfg.resolved();
        let mut again = ExperimentConfig::default();
        again
            .apply_text(&line.split(' ').collect::<Vec<_>>().join("\n"))
            .unwrap();
        assert_eq!(cfg, again);
        assert_eq!(line, again.resolved());
    }

    #[test]
    fn csv_dataset_requires_a_path() {
        let mut cfg = ExperimentConfig::default();
        cfg.set("dataset", "csv").unwrap();
        assert_eq!(cfg.validate().unwrap_err(), ConfigError::MissingCsvPath);
        cfg.set("csv_path", "data.csv").unwrap();
        cfg.validate().unwrap();
    }

    #[test]
    fn scheme_uses_only_the_relevant_parameters() {
        let mut cfg = ExperimentConfig::default();
        cfg.set("pos", "ms").unwrap();
        cfg.set("neg", "binomial").unwrap();
        cfg.set("alpha", "3").unwrap();
        cfg.set("beta", "7").unwrap();
        cfg.set("lambda", "0.25").unwrap();
        let scheme = cfg.scheme();
        assert_eq!(
            scheme.positive,
            PositiveHalf::MultiSimilarity {
                alpha: 3.0,
                lambda: 0.25
            }
        );
        assert_eq!(
            scheme.negative,
            NegativeHalf::Binomial {
                beta: 7.0,
                lambda: 0.25
            }
        );
    }

    #[test]
    fn train_config_mirrors_the_experiment_fields() {
        let mut cfg = ExperimentConfig::default();
        cfg.set("memory_size", "4").unwrap();
        cfg.set("classes_per_batch", "2").unwrap();
        cfg.set("samples_per_class", "3").unwrap();
        let t = cfg.train_config();
        assert_eq!(t.memory_batches, 4);
        assert_eq!(t.batch_size(), 6);
        t.validate().unwrap();
    }
}
