//! Binary entry point. Exit codes: 0 success, 1 usage or config error,
//! 2 runtime or data error, 3 collapsed run.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use pairmem::commands::{cmd_curves, cmd_drift, cmd_grid, cmd_train, parse_axis, CurveOptions};
use pairmem::config::ExperimentConfig;
use pairmem::CliError;

#[derive(Parser)]
#[command(
    name = "pairmem",
    version,
    about = "Pair-weighted metric learning on synthetic or CSV data, with an \
             optional cross-batch embedding memory and momentum encoder"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample both weight halves over a similarity grid into a CSV
    Curves(CurvesCmd),
    /// Train one encoder; writes iterations.csv, recall.csv, summary.txt
    Train(TrainCmd),
    /// One training run per grid point over scheme or momentum axes
    Grid(GridCmd),
    /// Compare feature drift and hard-negative yield across the three
    /// regimes (minibatch, memory m=0, memory m=0.999) under one seed
    Drift(DriftCmd),
}

#[derive(Args)]
struct ConfigFlags {
    /// Config file of `key = value` lines; flags override file values
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Training seed override
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct SchemeFlags {
    /// Positive half: contrastive, binomial, multi-similarity, infonce, constant
    #[arg(long)]
    pos: Option<String>,
    /// Negative half: contrastive, binomial, multi-similarity, infonce, ramp
    #[arg(long)]
    neg: Option<String>,
    /// Positive-half scale factor (binomial, multi-similarity)
    #[arg(long, allow_hyphen_values = true)]
    alpha: Option<f64>,
    /// Negative-half scale factor (binomial, multi-similarity)
    #[arg(long, allow_hyphen_values = true)]
    beta: Option<f64>,
    /// Similarity margin (contrastive, binomial, multi-similarity)
    #[arg(long, allow_hyphen_values = true)]
    lambda: Option<f64>,
    /// Softmax temperature (infonce)
    #[arg(long, allow_hyphen_values = true)]
    tau: Option<f64>,
    /// Ramp start: negative weight 0 below this similarity
    #[arg(long, allow_hyphen_values = true)]
    a: Option<f64>,
    /// Ramp end: negative weight 1 at and above this similarity
    #[arg(long, allow_hyphen_values = true)]
    b: Option<f64>,
}

#[derive(Args)]
struct ModeFlags {
    /// Pair mining mode: minibatch or memory
    #[arg(long)]
    mode: Option<String>,
    /// Momentum-encoder coefficient in [0, 1]; 0 freezes nothing and
    /// matches enqueueing from the main encoder
    #[arg(long)]
    momentum: Option<f64>,
    /// Memory capacity in batches
    #[arg(long, value_name = "BATCHES")]
    memory_size: Option<usize>,
}

#[derive(Args)]
struct CurvesCmd {
    #[command(flatten)]
    config: ConfigFlags,
    #[command(flatten)]
    scheme: SchemeFlags,
    /// Output CSV path
    #[arg(long, default_value = "curves.csv")]
    out: PathBuf,
    /// Lowest probed similarity
    #[arg(long, default_value_t = -1.0, allow_hyphen_values = true)]
    grid_min: f64,
    /// Highest probed similarity
    #[arg(long, default_value_t = 1.0, allow_hyphen_values = true)]
    grid_max: f64,
    /// Number of evenly spaced probe points
    #[arg(long, default_value_t = 201)]
    grid_points: usize,
    /// Neighboring positive similarities at every probe (comma list or `none`)
    #[arg(long, default_value = "0", allow_hyphen_values = true)]
    ctx_pos: String,
    /// Neighboring negative similarities at every probe (comma list or `none`)
    #[arg(long, default_value = "0", allow_hyphen_values = true)]
    ctx_neg: String,
}

#[derive(Args)]
struct TrainCmd {
    #[command(flatten)]
    config: ConfigFlags,
    #[command(flatten)]
    scheme: SchemeFlags,
    #[command(flatten)]
    mode: ModeFlags,
    /// Output directory
    #[arg(long, default_value = "run")]
    out: PathBuf,
}

#[derive(Args)]
struct GridCmd {
    #[command(flatten)]
    config: ConfigFlags,
    #[command(flatten)]
    scheme: SchemeFlags,
    #[command(flatten)]
    mode: ModeFlags,
    /// Sweep axis, repeatable: `--axis beta=1,10,50` or a bare name for
    /// the documented defaults (alpha 0.5,1,2,4; beta 1,10,25,50;
    /// lambda 0.25,0.5,0.75; tau 0.1,0.2,0.5,1; a/b 0.3,0.4,0.5,0.6;
    /// momentum 0,0.5,0.9,0.999)
    #[arg(long = "axis", value_name = "NAME[=V1,V2,..]")]
    axes: Vec<String>,
    /// Concurrent grid points
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Output CSV path
    #[arg(long, default_value = "grid.csv")]
    out: PathBuf,
}

#[derive(Args)]
struct DriftCmd {
    #[command(flatten)]
    config: ConfigFlags,
    #[command(flatten)]
    scheme: SchemeFlags,
    #[command(flatten)]
    mode: ModeFlags,
    /// Output CSV path
    #[arg(long, default_value = "drift.csv")]
    out: PathBuf,
}

/// Defaults, then the config file, then flags; flags go through the same
/// `set` path as file lines so validation is uniform.
fn build_config(
    config: &ConfigFlags,
    scheme: Option<&SchemeFlags>,
    mode: Option<&ModeFlags>,
) -> Result<ExperimentConfig, CliError> {
    let mut cfg = ExperimentConfig::default();
    if let Some(path) = &config.config {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        cfg.apply_text(&text)
            .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    }
    let mut overrides: Vec<(&str, String)> = Vec::new();
    if let Some(seed) = config.seed {
        overrides.push(("seed", seed.to_string()));
    }
    if let Some(s) = scheme {
        if let Some(v) = &s.pos {
            overrides.push(("pos", v.clone()));
        }
        if let Some(v) = &s.neg {
            overrides.push(("neg", v.clone()));
        }
        for (key, v) in [
            ("alpha", s.alpha),
            ("beta", s.beta),
            ("lambda", s.lambda),
            ("tau", s.tau),
            ("a", s.a),
            ("b", s.b),
        ] {
            if let Some(v) = v {
                overrides.push((key, format!("{v}")));
            }
        }
    }
    if let Some(m) = mode {
        if let Some(v) = &m.mode {
            overrides.push(("mode", v.clone()));
        }
        if let Some(v) = m.momentum {
            overrides.push(("momentum", format!("{v}")));
        }
        if let Some(v) = m.memory_size {
            overrides.push(("memory_size", v.to_string()));
        }
    }
    for (key, value) in overrides {
        cfg.set(key, &value)
            .map_err(|e| CliError::Usage(format!("--{}: {e}", key.replace('_', "-"))))?;
    }
    Ok(cfg)
}

fn parse_ctx(flag: &str, text: &str) -> Result<Vec<f64>, CliError> {
    if text == "none" {
        return Ok(Vec::new());
    }
    text.split(',')
        .map(|part| {
            part.trim()
                .parse::<f64>()
                .map_err(|_| CliError::Usage(format!("--{flag}: `{part}` is not a number")))
        })
        .collect()
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Curves(cmd) => {
            let cfg = build_config(&cmd.config, Some(&cmd.scheme), None)?;
            let opts = CurveOptions {
                grid_min: cmd.grid_min,
                grid_max: cmd.grid_max,
                grid_points: cmd.grid_points,
                ctx_pos: parse_ctx("ctx-pos", &cmd.ctx_pos)?,
                ctx_neg: parse_ctx("ctx-neg", &cmd.ctx_neg)?,
            };
            cmd_curves(&cfg, &opts, &cmd.out)
        }
        Command::Train(cmd) => {
            let cfg = build_config(&cmd.config, Some(&cmd.scheme), Some(&cmd.mode))?;
            cmd_train(&cfg, &cmd.out)
        }
        Command::Grid(cmd) => {
            let cfg = build_config(&cmd.config, Some(&cmd.scheme), Some(&cmd.mode))?;
            let axes = cmd
                .axes
                .iter()
                .map(|arg| parse_axis(arg))
                .collect::<Result<Vec<_>, _>>()?;
            cmd_grid(&cfg, &axes, cmd.jobs, &cmd.out)
        }
        Command::Drift(cmd) => {
            let cfg = build_config(&cmd.config, Some(&cmd.scheme), Some(&cmd.mode))?;
            cmd_drift(&cfg, &cmd.out)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
