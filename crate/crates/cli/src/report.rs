//! Evaluation reports: CSV at full precision, aligned text at three decimals.

use std::fmt::Write as _;

use sha2::{Digest, Sha256};
use wavclip_core::RocReport;

/// Reported AUC / EER for known benchmark sets, shown next to results for
/// files whose stem matches. Informational only.
const PUBLISHED: &[(&str, f64, Option<f64>)] = &[
    ("cdfv1", 0.756, None),
    ("cdfv2", 0.759, None),
    ("fsh", 0.732, None),
    ("ddpm", 0.897, Some(0.190)),
    ("ddim", 0.886, Some(0.197)),
    ("ldm", 0.897, Some(0.190)),
];

fn published(name: &str) -> Option<(f64, Option<f64>)> {
    let key = name.to_ascii_lowercase();
    PUBLISHED
        .iter()
        .find(|(n, _, _)| *n == key)
        .map(|&(_, auc, eer)| (auc, eer))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Level {
    Frame,
    Video,
}

impl Level {
    pub fn name(self) -> &'static str {
        match self {
            Level::Frame => "frame",
            Level::Video => "video",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalRow {
    pub dataset: String,
    pub level: Level,
    pub roc: RocReport,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AverageRow {
    pub level: Level,
    pub auc: f64,
    pub eer: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub head: String,
    pub dim: usize,
    pub rows: Vec<EvalRow>,
    pub averages: Vec<AverageRow>,
    pub config_text: String,
    pub fingerprint: String,
    pub wall_clock_secs: f64,
}

/// First 16 hex digits of SHA-256 over the canonical config text.
pub fn fingerprint(config_text: &str) -> String {
    let digest = Sha256::digest(config_text.as_bytes());
    hex::encode(&digest[..8])
}

/// Arithmetic mean of AUC and EER per level, in first-seen level order.
pub fn averages(rows: &[EvalRow]) -> Vec<AverageRow> {
    let mut out = Vec::new();
    for level in [Level::Frame, Level::Video] {
        let picked: Vec<&EvalRow> = rows.iter().filter(|r| r.level == level).collect();
        if picked.is_empty() {
            continue;
        }
        let n = picked.len() as f64;
        out.push(AverageRow {
            level,
            auc: picked.iter().map(|r| r.roc.auc).sum::<f64>() / n,
            eer: picked.iter().map(|r| r.roc.eer).sum::<f64>() / n,
            count: picked.len(),
        });
    }
    out
}

impl EvalReport {
    /// Deterministic CSV: no timings, shortest round-trip float formatting.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("dataset,level,n_real,n_fake,auc,eer\n");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{}",
                csv_field(&r.dataset),
                r.level.name(),
                r.roc.n_neg,
                r.roc.n_pos,
                r.roc.auc,
                r.roc.eer
            );
        }
        for a in &self.averages {
            let _ = writeln!(s, "Avg.,{},,,{},{}", a.level.name(), a.auc, a.eer);
        }
        s
    }

    pub fn to_text(&self) -> String {
        let name_w = self
            .rows
            .iter()
            .map(|r| r.dataset.len())
            .chain([7])
            .max()
            .unwrap_or(7);
        let mut s = String::new();
        let _ = writeln!(s, "head: {}  dim: {}  config: {}", self.head, self.dim, self.fingerprint);
        let _ = writeln!(s);
        let _ = writeln!(
            s,
            "{:<name_w$}  {:<5}  {:>7}  {:>7}  {:>5}  {:>5}  published (delta)",
            "dataset", "level", "n_real", "n_fake", "AUC", "EER"
        );
        for r in &self.rows {
            let reference = match (r.level, published(&r.dataset)) {
                (Level::Frame, Some((auc, eer))) => {
                    let mut t = format!("AUC {auc:.3} ({:+.3})", r.roc.auc - auc);
                    if let Some(eer) = eer {
                        let _ = write!(t, "  EER {eer:.3} ({:+.3})", r.roc.eer - eer);
                    }
                    t
                }
                _ => String::new(),
            };
            let _ = writeln!(
                s,
                "{:<name_w$}  {:<5}  {:>7}  {:>7}  {:>5.3}  {:>5.3}  {}",
                r.dataset,
                r.level.name(),
                r.roc.n_neg,
                r.roc.n_pos,
                r.roc.auc,
                r.roc.eer,
                reference
            );
        }
        for a in &self.averages {
            let _ = writeln!(
                s,
                "{:<name_w$}  {:<5}  {:>7}  {:>7}  {:>5.3}  {:>5.3}",
                "Avg.",
                a.level.name(),
                "",
                "",
                a.auc,
                a.eer
            );
        }
        let _ = writeln!(s);
        let _ = writeln!(s, "wall-clock: {:.3} s", self.wall_clock_secs);
        let _ = writeln!(s, "config:");
        for line in self.config_text.lines() {
            let _ = writeln!(s, "  {line}");
        }
        s
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_owned()
    }
}
