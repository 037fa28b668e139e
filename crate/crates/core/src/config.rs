//! Training configuration and its flat `key = value` text form.
//!
//! Every knob has a default and every default is written out by
//! [`TrainConfig::to_text`], so a saved config fully determines a run.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::nn::AdamConfig;
use crate::wavelet::Family;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum HeadKind {
    #[default]
    Wavelet,
    Baseline,
}

impl HeadKind {
    pub fn name(self) -> &'static str {
        match self {
            HeadKind::Wavelet => "wavelet",
            HeadKind::Baseline => "baseline",
        }
    }
}

impl fmt::Display for HeadKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for HeadKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "wavelet" => Ok(HeadKind::Wavelet),
            "baseline" => Ok(HeadKind::Baseline),
            other => Err(Error::Config(format!("unknown head type {other:?}"))),
        }
    }
}

/// Score aggregation for reports. `Video` adds video-level rows (mean of
/// frame scores) next to the frame-level rows whenever source tags carry
/// `video_id/frame_idx`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Pooling {
    Frame,
    #[default]
    Video,
}

impl fmt::Display for Pooling {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Pooling::Frame => "frame",
            Pooling::Video => "video",
        })
    }
}

impl FromStr for Pooling {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "frame" => Ok(Pooling::Frame),
            "video" => Ok(Pooling::Video),
            other => Err(Error::Config(format!("unknown pooling {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub seed: u64,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub weight_decay: f64,
    pub dropout: f64,
    pub family: Family,
    pub head: HeadKind,
    /// Hidden width of the low-band MLP (`d/2 -> low_hidden -> d/2`).
    pub low_hidden: usize,
    /// Hidden width of the classifier MLP (`d -> cls_hidden -> 1`).
    pub cls_hidden: usize,
    pub pooling: Pooling,
    /// Fraction of the input used for training; the rest is held out.
    /// `1.0` trains on everything.
    pub train_fraction: f64,
    pub train_path: String,
    pub checkpoint_path: String,
    pub trace_path: String,
    /// Where the held-out rows are written when `train_fraction < 1`.
    pub heldout_path: String,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let adam = AdamConfig::default();
        TrainConfig {
            seed: 0,
            epochs: 10,
            batch_size: 64,
            lr: adam.lr,
            beta1: adam.beta1,
            beta2: adam.beta2,
            adam_eps: adam.eps,
            weight_decay: adam.weight_decay,
            dropout: 0.0,
            family: Family::Haar,
            head: HeadKind::Wavelet,
            low_hidden: 384,
            cls_hidden: 256,
            pooling: Pooling::Video,
            train_fraction: 1.0,
            train_path: String::new(),
            checkpoint_path: "head.wchk".into(),
            trace_path: "loss_trace.csv".into(),
            heldout_path: String::new(),
        }
    }
}

pub const CONFIG_KEYS: &[&str] = &[
    "seed",
    "epochs",
    "batch_size",
    "lr",
    "beta1",
    "beta2",
    "adam_eps",
    "weight_decay",
    "dropout",
    "family",
    "head",
    "low_hidden",
    "cls_hidden",
    "pooling",
    "train_fraction",
    "train_path",
    "checkpoint_path",
    "trace_path",
    "heldout_path",
];

fn parse_num<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse {value:?}")))
}

impl TrainConfig {
    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.adam_eps,
            weight_decay: self.weight_decay,
        }
    }

    /// Set one field from its text form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key.trim() {
            "seed" => self.seed = parse_num(key, v)?,
            "epochs" => self.epochs = parse_num(key, v)?,
            "batch_size" => self.batch_size = parse_num(key, v)?,
            "lr" => self.lr = parse_num(key, v)?,
            "beta1" => self.beta1 = parse_num(key, v)?,
            "beta2" => self.beta2 = parse_num(key, v)?,
            "adam_eps" => self.adam_eps = parse_num(key, v)?,
            "weight_decay" => self.weight_decay = parse_num(key, v)?,
            "dropout" => self.dropout = parse_num(key, v)?,
            "family" => self.family = v.parse()?,
            "head" => self.head = v.parse()?,
            "low_hidden" => self.low_hidden = parse_num(key, v)?,
            "cls_hidden" => self.cls_hidden = parse_num(key, v)?,
            "pooling" => self.pooling = v.parse()?,
            "train_fraction" => self.train_fraction = parse_num(key, v)?,
            "train_path" => self.train_path = v.to_owned(),
            "checkpoint_path" => self.checkpoint_path = v.to_owned(),
            "trace_path" => self.trace_path = v.to_owned(),
            "heldout_path" => self.heldout_path = v.to_owned(),
            other => return Err(Error::Config(format!("unknown config key {other:?}"))),
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<String> {
        Some(match key {
            "seed" => self.seed.to_string(),
            "epochs" => self.epochs.to_string(),
            "batch_size" => self.batch_size.to_string(),
            "lr" => self.lr.to_string(),
            "beta1" => self.beta1.to_string(),
            "beta2" => self.beta2.to_string(),
            "adam_eps" => self.adam_eps.to_string(),
            "weight_decay" => self.weight_decay.to_string(),
            "dropout" => self.dropout.to_string(),
            "family" => self.family.to_string(),
            "head" => self.head.to_string(),
            "low_hidden" => self.low_hidden.to_string(),
            "cls_hidden" => self.cls_hidden.to_string(),
            "pooling" => self.pooling.to_string(),
            "train_fraction" => self.train_fraction.to_string(),
            "train_path" => self.train_path.clone(),
            "checkpoint_path" => self.checkpoint_path.clone(),
            "trace_path" => self.trace_path.clone(),
            "heldout_path" => self.heldout_path.clone(),
            _ => return None,
        })
    }

    /// Parse `key = value` lines over the defaults. `#` starts a comment.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = TrainConfig::default();
        cfg.apply_text(text)?;
        Ok(cfg)
    }

    /// Overlay `key = value` lines onto `self`.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected `key = value`, got {raw:?}", lineno + 1))
            })?;
            self.set(key, value)?;
        }
        Ok(())
    }

    /// Canonical text: every key, fixed order, one per line.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for key in CONFIG_KEYS {
            out.push_str(key);
            out.push_str(" = ");
            out.push_str(&self.get(key).unwrap_or_default());
            out.push('\n');
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.epochs == 0 {
            return bad("epochs must be >= 1".into());
        }
        if self.batch_size == 0 {
            return bad("batch_size must be >= 1".into());
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return bad(format!("lr {} must be finite and >= 0", self.lr));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return bad(format!("{name} {b} not in [0, 1)"));
            }
        }
        if !(self.adam_eps > 0.0 && self.adam_eps.is_finite()) {
            return bad(format!("adam_eps {} must be > 0", self.adam_eps));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad(format!("weight_decay {} must be >= 0", self.weight_decay));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout {} not in [0, 1)", self.dropout));
        }
        if self.low_hidden == 0 || self.cls_hidden == 0 {
            return bad("hidden widths must be >= 1".into());
        }
        if !(self.train_fraction > 0.0 && self.train_fraction <= 1.0) {
            return bad(format!("train_fraction {} not in (0, 1]", self.train_fraction));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn defaults_round_trip() {
        let cfg = TrainConfig::default();
        let text = cfg.to_text();
        assert_eq!(TrainConfig::from_text(&text).unwrap(), cfg);
        assert_eq!(text.lines().count(), CONFIG_KEYS.len());
        cfg.validate().unwrap();
    }

    #[test]
    fn comments_and_blanks() {
        let cfg = TrainConfig::from_text("# header\n\nepochs = 3  # three\nhead=baseline\n").unwrap();
        assert_eq!(cfg.epochs, 3);
        assert_eq!(cfg.head, HeadKind::Baseline);
    }

    #[test]
    fn rejects_unknown_and_malformed() {
        assert!(matches!(TrainConfig::from_text("nope = 1"), Err(Error::Config(_))));
        assert!(matches!(TrainConfig::from_text("epochs"), Err(Error::Config(_))));
        assert!(matches!(TrainConfig::from_text("epochs = x"), Err(Error::Config(_))));
        assert!(matches!(TrainConfig::from_text("family = sym4"), Err(Error::Config(_))));
    }

    #[test]
    fn validation_ranges() {
        let mut cfg = TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        };
        assert!(cfg.validate().is_err());
        cfg.epochs = 1;
        cfg.dropout = 1.0;
        assert!(cfg.validate().is_err());
        cfg.dropout = 0.0;
        cfg.train_fraction = 0.0;
        assert!(cfg.validate().is_err());
        cfg.train_fraction = 0.8;
        cfg.lr = 0.0;
        cfg.validate().unwrap();
    }

    proptest! {
        #[test]
        fn text_form_is_lossless(
            seed in any::<u64>(),
            lr in 0.0f64..1.0,
            wd in 0.0f64..1e-2,
            frac in 0.01f64..1.0,
            epochs in 1usize..100,
            path in "[a-z0-9_./-]{0,20}",
        ) {
            let cfg = TrainConfig {
                seed, lr, weight_decay: wd, train_fraction: frac, epochs,
                train_path: path,
                family: Family::Db2,
                pooling: Pooling::Frame,
                ..TrainConfig::default()
            };
            prop_assert_eq!(TrainConfig::from_text(&cfg.to_text()).unwrap(), cfg);
        }
    }
}
