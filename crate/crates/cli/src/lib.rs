//! Library side of the `wavclip` command-line tool.
//!
//! Each subcommand is a plain function returning a typed result, so the
//! pipeline can be driven from tests without spawning processes.

pub mod args;
pub mod output;
pub mod report;

use std::path::{Path, PathBuf};
use std::time::Instant;

use wavclip_core::data::{make_synthetic, pool_by_video, split};
use wavclip_core::head::{scores, train};
use wavclip_core::wavelet::dwt1d;
use wavclip_core::{
    make_filter_bank, read_checkpoint, read_embeddings, roc_curve, Checkpoint, EmbeddingDataset, Error,
    ErrorClass, Family, Head, HeadParams, Pooling, Result, SplitSpec, TrainConfig, TrainReport,
};

use crate::output::Staged;
use crate::report::{averages, fingerprint, EvalReport, EvalRow, Level};

/// Environment variable naming a default config file.
pub const CONFIG_ENV: &str = "WAVCLIP_CONFIG";

pub fn exit_code(class: ErrorClass) -> i32 {
    match class {
        ErrorClass::Config => 2,
        ErrorClass::Data => 3,
        ErrorClass::Shape => 4,
        ErrorClass::Io => 5,
    }
}

pub fn class_name(class: ErrorClass) -> &'static str {
    match class {
        ErrorClass::Config => "config",
        ErrorClass::Data => "data",
        ErrorClass::Shape => "shape",
        ErrorClass::Io => "io",
    }
}

/// One-line stderr rendering: `error kind=<class> code=<n>: <message>`.
pub fn error_line(err: &Error) -> String {
    let class = err.class();
    let msg = err.to_string().replace(['\n', '\r'], " ");
    format!("error kind={} code={}: {msg}", class_name(class), exit_code(class))
}

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Defaults, then the config file (if any), then `key = value` overrides.
pub fn resolve_config(file: Option<&Path>, overrides: &[(&str, String)]) -> Result<TrainConfig> {
    let mut cfg = TrainConfig::default();
    if let Some(path) = file {
        let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
        cfg.apply_text(&text)?;
    }
    for (key, value) in overrides {
        cfg.set(key, value)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

// ---------------------------------------------------------------------------
// train

#[derive(Debug)]
pub struct TrainOutcome {
    pub report: TrainReport,
    pub train_rows: usize,
    pub heldout_rows: usize,
}

/// Loss trace: one row per epoch, epoch 0 being the untrained head.
pub fn trace_csv(report: &TrainReport) -> String {
    let mut s = String::from("epoch,loss,running_loss\n");
    s.push_str(&format!("0,{},\n", report.initial_loss));
    for (i, (full, running)) in report.epoch_loss.iter().zip(&report.running_loss).enumerate() {
        s.push_str(&format!("{},{full},{running}\n", i + 1));
    }
    s
}

/// Train a head from `cfg.train_path`; writes the checkpoint, the loss trace
/// and, for a split run, the held-out rows. Nothing is written on error.
pub fn cmd_train(cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    if cfg.train_path.is_empty() {
        return Err(Error::Config("train_path is not set".into()));
    }
    if cfg.checkpoint_path.is_empty() || cfg.trace_path.is_empty() {
        return Err(Error::Config("checkpoint_path and trace_path must be set".into()));
    }
    let holdout = cfg.train_fraction < 1.0;
    if holdout && cfg.heldout_path.is_empty() {
        return Err(Error::Config("train_fraction < 1 needs heldout_path".into()));
    }

    let all = read_embeddings(&cfg.train_path)?;
    let (train_set, heldout) = if holdout {
        let spec = SplitSpec {
            train_fraction: cfg.train_fraction,
            seed: cfg.seed,
            stratified: true,
        };
        let (a, b) = split(&all, spec)?;
        (a, Some(b))
    } else {
        (all, None)
    };

    let mut head = HeadParams::init(train_set.dim(), cfg)?;
    let report = train(&mut head, &train_set, cfg)?;

    let checkpoint = Checkpoint {
        head,
        config_text: cfg.to_text(),
        optimizer: Some(report.optimizer.clone()),
    };
    let mut staged = Staged::new();
    staged.add(&cfg.checkpoint_path, &wavclip_core::checkpoint::encode_checkpoint(&checkpoint))?;
    staged.add(&cfg.trace_path, trace_csv(&report).as_bytes())?;
    if let Some(h) = &heldout {
        staged.add(&cfg.heldout_path, &wavclip_core::data::encode_embeddings(h))?;
    }
    staged.commit()?;

    Ok(TrainOutcome {
        report,
        train_rows: train_set.len(),
        heldout_rows: heldout.map_or(0, |h| h.len()),
    })
}

// ---------------------------------------------------------------------------
// eval

/// Display name of an input file: its stem.
pub fn dataset_name(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

fn eval_file(head: &HeadParams, path: &Path, pooling: Pooling) -> Result<Vec<EvalRow>> {
    let ds = read_embeddings(path)?;
    if ds.dim() != head.dim() {
        return Err(Error::Shape(format!(
            "{}: embedding dim {} does not match head dim {}",
            path.display(),
            ds.dim(),
            head.dim()
        )));
    }
    let name = dataset_name(path);
    let with_file = |e: Error| match e {
        Error::Data(m) => Error::Data(format!("{}: {m}", path.display())),
        Error::UndefinedMetric(m) => Error::UndefinedMetric(format!("{}: {m}", path.display())),
        other => other,
    };
    let s = scores(head, &ds)?;
    let mut rows = vec![EvalRow {
        dataset: name.clone(),
        level: Level::Frame,
        roc: roc_curve(s.as_slice().expect("contiguous scores"), ds.labels()).map_err(with_file)?,
    }];
    if pooling == Pooling::Video {
        if let Some(pooled) = pool_by_video(&ds, s.view()).map_err(with_file)? {
            rows.push(EvalRow {
                dataset: name,
                level: Level::Video,
                roc: roc_curve(&pooled.scores, &pooled.labels).map_err(with_file)?,
            });
        }
    }
    Ok(rows)
}

/// Score every file with the checkpointed head. Files are processed in
/// parallel; rows come back in input order, frame rows before video rows.
pub fn cmd_eval(checkpoint: &Path, files: &[PathBuf], pooling: Option<Pooling>) -> Result<EvalReport> {
    let started = Instant::now();
    if files.is_empty() {
        return Err(Error::Config("no embedding files to evaluate".into()));
    }
    let ck = read_checkpoint(checkpoint)?;
    let cfg = TrainConfig::from_text(&ck.config_text)?;
    let pooling = pooling.unwrap_or(cfg.pooling);

    let workers = std::thread::available_parallelism().map_or(1, |n| n.get()).min(files.len());
    let mut results: Vec<Option<Result<Vec<EvalRow>>>> = (0..files.len()).map(|_| None).collect();
    std::thread::scope(|scope| {
        let chunk = files.len().div_ceil(workers);
        for (paths, slots) in files.chunks(chunk).zip(results.chunks_mut(chunk)) {
            let head = &ck.head;
            scope.spawn(move || {
                for (path, slot) in paths.iter().zip(slots) {
                    *slot = Some(eval_file(head, path, pooling));
                }
            });
        }
    });

    let mut per_file = Vec::with_capacity(files.len());
    for r in results {
        per_file.push(r.expect("every file evaluated")?);
    }
    let mut rows: Vec<EvalRow> = per_file.iter().flatten().filter(|r| r.level == Level::Frame).cloned().collect();
    rows.extend(per_file.into_iter().flatten().filter(|r| r.level == Level::Video));

    let head = match ck.head.family() {
        Some(f) => format!("{} ({f})", ck.head.kind()),
        None => ck.head.kind().to_string(),
    };
    let mut echoed = cfg;
    echoed.pooling = pooling;
    let config_text = echoed.to_text();
    Ok(EvalReport {
        head,
        dim: ck.head.dim(),
        averages: averages(&rows),
        rows,
        fingerprint: fingerprint(&config_text),
        config_text,
        wall_clock_secs: started.elapsed().as_secs_f64(),
    })
}

// ---------------------------------------------------------------------------
// transform

#[derive(Debug, Clone, PartialEq)]
pub struct SubbandRow {
    pub id: String,
    pub low_energy: f64,
    pub high_energy: f64,
    pub energy: f64,
    /// `|low + high - energy| / energy`, or the absolute gap for a zero row.
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransformReport {
    pub family: Family,
    pub dim: usize,
    pub rows: Vec<SubbandRow>,
}

impl TransformReport {
    pub fn max_residual(&self) -> f64 {
        self.rows.iter().map(|r| r.residual).fold(0.0, f64::max)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("id,low_energy,high_energy,energy,residual\n");
        for r in &self.rows {
            s.push_str(&format!(
                "{},{},{},{},{}\n",
                r.id, r.low_energy, r.high_energy, r.energy, r.residual
            ));
        }
        s
    }

    pub fn summary(&self) -> String {
        let total: f64 = self.rows.iter().map(|r| r.energy).sum();
        let low: f64 = self.rows.iter().map(|r| r.low_energy).sum();
        let share = if total > 0.0 { low / total } else { 0.0 };
        format!(
            "family: {}  dim: {}  rows: {}  low-band energy share: {share:.6}  max residual: {:.3e}\n",
            self.family,
            self.dim,
            self.rows.len(),
            self.max_residual()
        )
    }
}

fn sum_sq(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

pub fn transform_dataset(ds: &EmbeddingDataset, family: Family) -> Result<TransformReport> {
    if !ds.dim().is_multiple_of(2) {
        return Err(Error::Shape(format!("embedding dim {} is odd", ds.dim())));
    }
    let fb = make_filter_bank(family);
    let mut rows = Vec::with_capacity(ds.len());
    for i in 0..ds.len() {
        let x: Vec<f64> = ds.embedding(i).iter().map(|&v| f64::from(v)).collect();
        let sb = dwt1d(&fb, &x)?;
        let (low_energy, high_energy, energy) = (sum_sq(&sb.low), sum_sq(&sb.high), sum_sq(&x));
        let gap = (low_energy + high_energy - energy).abs();
        rows.push(SubbandRow {
            id: ds.ids()[i].clone(),
            low_energy,
            high_energy,
            energy,
            residual: if energy > 0.0 { gap / energy } else { gap },
        });
    }
    Ok(TransformReport {
        family,
        dim: ds.dim(),
        rows,
    })
}

pub fn cmd_transform(input: &Path, family: Family) -> Result<TransformReport> {
    transform_dataset(&read_embeddings(input)?, family)
}

// ---------------------------------------------------------------------------
// synth

pub fn cmd_synth(n_per_class: usize, dim: usize, separation: f64, seed: u64, output: &Path) -> Result<EmbeddingDataset> {
    let ds = make_synthetic(n_per_class, dim, separation, seed)?;
    let mut staged = Staged::new();
    staged.add(output, &wavclip_core::data::encode_embeddings(&ds))?;
    staged.commit()?;
    Ok(ds)
}
