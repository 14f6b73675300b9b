//! The four commands. Every output file starts with a `# config:` comment
//! and a header row; all numbers are shortest-round-trip decimals, so a
//! rerun with the same flags is byte-identical.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use pairmem_core::{
    generate_clusters, grid_settings, init_encoder, run_grid_point, sample_weight_curve,
    split_by_class, train, validate_axes, AnchorContext, DataError, GridAxis, GridAxisName,
    MlpEncoderParams, PointStatus, RunRecord, TrainConfig, TrainError, TrainMode, VectorDataset,
};
use rayon::prelude::*;

use crate::config::{DataSource, ExperimentConfig};
use crate::csvio::{fmt_f64, load_csv, write_csv};
use crate::CliError;

fn train_error(e: TrainError) -> CliError {
    match e {
        TrainError::InvalidConfig(_) => CliError::Usage(e.to_string()),
        TrainError::Diverged | TrainError::DivergedAt { .. } => CliError::Collapse(e.to_string()),
        other => CliError::Runtime(other.to_string()),
    }
}

fn io_error(path: &Path, e: std::io::Error) -> CliError {
    CliError::Runtime(format!("cannot write {}: {e}", path.display()))
}

fn load_dataset(cfg: &ExperimentConfig) -> Result<VectorDataset, CliError> {
    match cfg.dataset {
        DataSource::Synthetic => generate_clusters(
            cfg.num_classes,
            cfg.per_class,
            cfg.d_in,
            cfg.center_scale,
            cfg.noise_sigma,
            cfg.data_seed,
        )
        .map_err(|e| CliError::Usage(format!("synthetic dataset: {e}"))),
        DataSource::Csv => {
            let path = cfg
                .csv_path
                .as_deref()
                .ok_or_else(|| CliError::Usage("dataset = csv requires a csv_path".into()))?;
            load_csv(Path::new(path))
                .map_err(|e| CliError::Runtime(format!("cannot load dataset {path}: {e}")))
        }
    }
}

fn split_dataset(
    cfg: &ExperimentConfig,
    dataset: &VectorDataset,
) -> Result<(VectorDataset, VectorDataset), CliError> {
    split_by_class(dataset, cfg.train_fraction, cfg.split_seed).map_err(|e| match e {
        DataError::EmptySide | DataError::BadFraction => CliError::Usage(format!(
            "train_fraction {} cannot split {} classes: {e}",
            cfg.train_fraction,
            dataset.class_count()
        )),
        other => CliError::Runtime(other.to_string()),
    })
}

/// Config checks, dataset, split, and the seeded initial encoder shared by
/// train, grid, and drift.
fn prepare(
    cfg: &ExperimentConfig,
) -> Result<(TrainConfig, VectorDataset, VectorDataset, MlpEncoderParams), CliError> {
    cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let t_cfg = cfg.train_config();
    t_cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let dataset = load_dataset(cfg)?;
    let (train_ds, test_ds) = split_dataset(cfg, &dataset)?;
    let init = init_encoder(&t_cfg.encoder_dims(train_ds.input_dim()), t_cfg.seed)
        .map_err(|e| CliError::Usage(format!("encoder shape: {e}")))?;
    Ok((t_cfg, train_ds, test_ds, init))
}

/// Weight-curve sampling grid and the fixed neighboring-pair context used
/// at every probe point.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveOptions {
    pub grid_min: f64,
    pub grid_max: f64,
    pub grid_points: usize,
    pub ctx_pos: Vec<f64>,
    pub ctx_neg: Vec<f64>,
}

impl Default for CurveOptions {
    fn default() -> Self {
        CurveOptions {
            grid_min: -1.0,
            grid_max: 1.0,
            grid_points: 201,
            ctx_pos: vec![0.0],
            ctx_neg: vec![0.0],
        }
    }
}

fn fmt_f64_list(list: &[f64]) -> String {
    if list.is_empty() {
        return "none".to_string();
    }
    list.iter().map(|&v| fmt_f64(v)).collect::<Vec<_>>().join(",")
}

/// Samples both weight halves over a similarity grid and writes
/// (similarity, w_pos, w_neg) rows.
pub fn cmd_curves(
    cfg: &ExperimentConfig,
    opts: &CurveOptions,
    out: &Path,
) -> Result<(), CliError> {
    let scheme = cfg.scheme();
    scheme
        .validate()
        .map_err(|e| CliError::Usage(e.to_string()))?;
    if opts.grid_points == 0 {
        return Err(CliError::Usage("grid needs at least one point".into()));
    }
    if !opts.grid_min.is_finite() || !opts.grid_max.is_finite() || opts.grid_min > opts.grid_max {
        return Err(CliError::Usage("grid bounds must be finite with min <= max".into()));
    }
    if opts
        .ctx_pos
        .iter()
        .chain(opts.ctx_neg.iter())
        .any(|v| !v.is_finite())
    {
        return Err(CliError::Usage("context similarities must be finite".into()));
    }
    let grid: Vec<f64> = if opts.grid_points == 1 {
        vec![opts.grid_min]
    } else {
        let step = (opts.grid_max - opts.grid_min) / (opts.grid_points - 1) as f64;
        (0..opts.grid_points)
            .map(|i| opts.grid_min + step * i as f64)
            .collect()
    };
    let ctx = AnchorContext {
        positives: &opts.ctx_pos,
        negatives: &opts.ctx_neg,
    };
    let curve = sample_weight_curve(&scheme, &grid, &ctx);
    let resolved = format!(
        "pos={} neg={} alpha={} beta={} lambda={} tau={} a={} b={} grid_min={} grid_max={} \
         grid_points={} ctx_pos={} ctx_neg={}",
        cfg.pos,
        cfg.neg,
        fmt_f64(cfg.alpha),
        fmt_f64(cfg.beta),
        fmt_f64(cfg.lambda),
        fmt_f64(cfg.tau),
        fmt_f64(cfg.a),
        fmt_f64(cfg.b),
        fmt_f64(opts.grid_min),
        fmt_f64(opts.grid_max),
        opts.grid_points,
        fmt_f64_list(&opts.ctx_pos),
        fmt_f64_list(&opts.ctx_neg),
    );
    let rows: Vec<String> = curve
        .iter()
        .map(|p| {
            format!(
                "{},{},{}",
                fmt_f64(p.similarity),
                fmt_f64(p.w_pos),
                fmt_f64(p.w_neg)
            )
        })
        .collect();
    write_csv(out, &resolved, "similarity,w_pos,w_neg", &rows).map_err(|e| io_error(out, e))
}

fn mode_line(t_cfg: &TrainConfig) -> String {
    match t_cfg.mode {
        TrainMode::MiniBatch => "mode: minibatch".to_string(),
        TrainMode::Memory if t_cfg.momentum == 0.0 => "mode: memory (XBM-equivalent)".to_string(),
        TrainMode::Memory => format!("mode: memory (momentum {})", fmt_f64(t_cfg.momentum)),
    }
}

/// Final Recall@1 below twice chance on the test classes, or a run that
/// ended with a non-finite loss.
fn collapsed(record: &RunRecord, test_classes: usize) -> bool {
    match record.final_recall_at(1) {
        Some(r1) => r1 < 2.0 / test_classes as f64,
        None => false,
    }
}

fn summary_text(
    t_cfg: &TrainConfig,
    record: &RunRecord,
    test_classes: usize,
    diverged: Option<&str>,
) -> String {
    let mut lines = vec![mode_line(t_cfg)];
    lines.push(format!("iterations: {}", record.iterations.len()));
    match record.final_loss() {
        Some(loss) => lines.push(format!("final loss: {}", fmt_f64(loss))),
        None => lines.push("final loss: none".to_string()),
    }
    if let Some(eval) = record.evals.last() {
        for (k, r) in &eval.recall_at {
            lines.push(format!("final recall@{k}: {}", fmt_f64(*r)));
        }
    }
    if let Some(h) = record.mean_hard_negatives() {
        lines.push(format!("mean hard negatives: {}", fmt_f64(h)));
    }
    if let Some(d) = record.mean_drift_between(1, usize::MAX) {
        lines.push(format!("mean drift: {}", fmt_f64(d)));
    }
    let is_collapsed = diverged.is_some() || collapsed(record, test_classes);
    lines.push(format!("collapsed: {is_collapsed}"));
    if let Some(msg) = diverged {
        lines.push(format!("error: {msg}"));
    }
    lines.join("\n") + "\n"
}

fn write_run_outputs(
    out_dir: &Path,
    resolved: &str,
    record: &RunRecord,
) -> Result<(), CliError> {
    fs::create_dir_all(out_dir).map_err(|e| io_error(out_dir, e))?;
    let iter_rows: Vec<String> = record
        .iterations
        .iter()
        .map(|l| {
            let drift = l.drift.map(fmt_f64).unwrap_or_default();
            format!(
                "{},{},{},{}",
                l.iteration,
                fmt_f64(l.loss),
                l.hard_negatives,
                drift
            )
        })
        .collect();
    let iter_path = out_dir.join("iterations.csv");
    write_csv(
        &iter_path,
        resolved,
        "iteration,loss,hard_negatives,drift",
        &iter_rows,
    )
    .map_err(|e| io_error(&iter_path, e))?;
    let mut recall_rows = Vec::new();
    for eval in &record.evals {
        for (k, r) in &eval.recall_at {
            recall_rows.push(format!("{},{},{}", eval.iteration, k, fmt_f64(*r)));
        }
    }
    let recall_path = out_dir.join("recall.csv");
    write_csv(&recall_path, resolved, "iteration,k,recall", &recall_rows)
        .map_err(|e| io_error(&recall_path, e))
}

/// Trains once and writes `iterations.csv`, `recall.csv`, and
/// `summary.txt` into `out_dir`; the summary also goes to stdout. A
/// collapsed run still writes everything and then exits 3.
pub fn cmd_train(cfg: &ExperimentConfig, out_dir: &Path) -> Result<(), CliError> {
    let (mut t_cfg, train_ds, test_ds, init) = prepare(cfg)?;
    // The exit status needs Recall@1.
    if !t_cfg.eval_ks.contains(&1) {
        t_cfg.eval_ks.push(1);
        t_cfg.eval_ks.sort_unstable();
    }
    let resolved = cfg.resolved();
    let (record, diverged) = match train(&t_cfg, &train_ds, Some(&test_ds), init) {
        Ok((_, record)) => (record, None),
        Err(e @ (TrainError::Diverged | TrainError::DivergedAt { .. })) => {
            (RunRecord::default(), Some(e.to_string()))
        }
        Err(e) => return Err(train_error(e)),
    };
    write_run_outputs(out_dir, &resolved, &record)?;
    let summary = summary_text(&t_cfg, &record, test_ds.class_count(), diverged.as_deref());
    let summary_path = out_dir.join("summary.txt");
    fs::write(&summary_path, &summary).map_err(|e| io_error(&summary_path, e))?;
    print!("{summary}");
    if let Some(msg) = diverged {
        return Err(CliError::Collapse(msg));
    }
    if collapsed(&record, test_ds.class_count()) {
        return Err(CliError::Collapse(format!(
            "final recall@1 {} is below twice chance on {} test classes",
            fmt_f64(record.final_recall_at(1).unwrap_or(f64::NAN)),
            test_ds.class_count()
        )));
    }
    Ok(())
}

/// Commas would break the CSV layout; statuses become single cells.
fn status_cell(status: &PointStatus) -> String {
    match status {
        PointStatus::Ok => "ok".to_string(),
        PointStatus::Invalid => "invalid".to_string(),
        PointStatus::Failed(msg) => format!("failed: {}", msg.replace(',', ";")),
    }
}

/// One training run per grid point, written as one CSV row each. Per-point
/// failures land in the status column; the sweep itself succeeds.
pub fn cmd_grid(
    cfg: &ExperimentConfig,
    axes: &[GridAxis],
    jobs: usize,
    out: &Path,
) -> Result<(), CliError> {
    if jobs == 0 {
        return Err(CliError::Usage("--jobs must be at least 1".into()));
    }
    let (t_cfg, train_ds, test_ds, _) = prepare(cfg)?;
    validate_axes(&t_cfg, axes).map_err(train_error)?;
    let settings = grid_settings(axes);
    let points = if jobs == 1 {
        settings
            .into_iter()
            .map(|s| run_grid_point(&t_cfg, s, &train_ds, &test_ds))
            .collect::<Vec<_>>()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| CliError::Runtime(format!("cannot start {jobs} workers: {e}")))?;
        pool.install(|| {
            settings
                .into_par_iter()
                .map(|s| run_grid_point(&t_cfg, s, &train_ds, &test_ds))
                .collect::<Vec<_>>()
        })
    };
    let axis_names: Vec<&str> = axes.iter().map(|a| a.name.name()).collect();
    let mut header = axis_names.join(",");
    if !header.is_empty() {
        header.push(',');
    }
    header.push_str("final_recall_at_1,collapsed,status");
    let rows: Vec<String> = points
        .iter()
        .map(|p| {
            let mut cells: Vec<String> =
                p.settings.iter().map(|(_, v)| fmt_f64(*v)).collect();
            cells.push(p.final_recall_at_1.map(fmt_f64).unwrap_or_default());
            cells.push(p.collapsed.to_string());
            cells.push(status_cell(&p.status));
            cells.join(",")
        })
        .collect();
    let resolved = format!("{} axes={}", cfg.resolved(), fmt_axes(axes));
    write_csv(out, &resolved, &header, &rows).map_err(|e| io_error(out, e))
}

fn fmt_axes(axes: &[GridAxis]) -> String {
    if axes.is_empty() {
        return "none".to_string();
    }
    axes.iter()
        .map(|a| format!("{}={}", a.name.name(), fmt_f64_list(&a.values)))
        .collect::<Vec<_>>()
        .join(";")
}

/// Mean per-iteration hard negatives over the window (lo, hi].
fn window_mean_hneg(record: &RunRecord, lo: usize, hi: usize) -> f64 {
    let logs: Vec<&_> = record
        .iterations
        .iter()
        .filter(|l| l.iteration > lo && l.iteration <= hi)
        .collect();
    if logs.is_empty() {
        return 0.0;
    }
    logs.iter().map(|l| l.hard_negatives as f64).sum::<f64>() / logs.len() as f64
}

/// Runs the three regimes (minibatch, memory with momentum 0, memory with
/// momentum 0.999) under the shared seed and probe, and writes one row per
/// drift measurement. Mode and momentum keys in the config are ignored;
/// the comparison is the point of the command.
pub fn cmd_drift(cfg: &ExperimentConfig, out: &Path) -> Result<(), CliError> {
    let (base, train_ds, test_ds, init) = prepare(cfg)?;
    let regimes = [
        ("minibatch", TrainMode::MiniBatch, 0.0),
        ("xbm", TrainMode::Memory, 0.0),
        ("momentum", TrainMode::Memory, 0.999),
    ];
    let mut records = Vec::with_capacity(regimes.len());
    for (name, mode, momentum) in regimes {
        let t_cfg = TrainConfig {
            mode,
            momentum,
            ..base.clone()
        };
        let (_, record) = train(&t_cfg, &train_ds, Some(&test_ds), init.clone())
            .map_err(|e| match train_error(e) {
                CliError::Collapse(msg) => CliError::Collapse(format!("{name} run: {msg}")),
                other => other,
            })?;
        records.push(record);
    }
    let drift_maps: Vec<BTreeMap<usize, f64>> = records
        .iter()
        .map(|r| {
            r.iterations
                .iter()
                .filter_map(|l| l.drift.map(|d| (l.iteration, d)))
                .collect()
        })
        .collect();
    let mut rows = vec!["0,0,0,0,0,0".to_string()];
    for (&iteration, &d_mini) in &drift_maps[0] {
        let d_xbm = drift_maps[1][&iteration];
        let d_mom = drift_maps[2][&iteration];
        let lo = iteration - base.drift_interval;
        rows.push(format!(
            "{},{},{},{},{},{}",
            iteration,
            fmt_f64(d_mini),
            fmt_f64(d_xbm),
            fmt_f64(d_mom),
            fmt_f64(window_mean_hneg(&records[1], lo, iteration)),
            fmt_f64(window_mean_hneg(&records[2], lo, iteration)),
        ));
    }
    write_csv(
        out,
        &cfg.resolved(),
        "iteration,drift_minibatch,drift_xbm,drift_momentum,\
         hard_negatives_xbm,hard_negatives_momentum",
        &rows,
    )
    .map_err(|e| io_error(out, e))
}

/// Documented default values used when a grid axis is given without an
/// explicit list.
pub fn default_axis_values(name: GridAxisName) -> Vec<f64> {
    match name {
        GridAxisName::Alpha => vec![0.5, 1.0, 2.0, 4.0],
        GridAxisName::Beta => vec![1.0, 10.0, 25.0, 50.0],
        GridAxisName::Lambda => vec![0.25, 0.5, 0.75],
        GridAxisName::Tau => vec![0.1, 0.2, 0.5, 1.0],
        GridAxisName::A => vec![0.3, 0.4, 0.5, 0.6],
        GridAxisName::B => vec![0.3, 0.4, 0.5, 0.6],
        GridAxisName::Momentum => vec![0.0, 0.5, 0.9, 0.999],
    }
}

/// Parses a repeatable `--axis name=v1,v2` argument; a bare name uses the
/// documented defaults.
pub fn parse_axis(arg: &str) -> Result<GridAxis, CliError> {
    let (name_part, values_part) = match arg.split_once('=') {
        Some((n, v)) => (n.trim(), Some(v.trim())),
        None => (arg.trim(), None),
    };
    let name = GridAxisName::from_name(name_part).ok_or_else(|| {
        CliError::Usage(format!(
            "unknown grid axis `{name_part}`; expected one of alpha, beta, lambda, tau, a, b, \
             momentum"
        ))
    })?;
    let values = match values_part {
        None => default_axis_values(name),
        Some(text) => text
            .split(',')
            .map(|part| {
                part.trim()
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| {
                        CliError::Usage(format!(
                            "axis `{name_part}`: `{part}` is not a finite number"
                        ))
                    })
            })
            .collect::<Result<Vec<f64>, CliError>>()?,
    };
    Ok(GridAxis { name, values })
}
