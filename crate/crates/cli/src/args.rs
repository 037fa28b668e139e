//! Command-line grammar.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use wavclip_core::{Family, Pooling};

use crate::CONFIG_ENV;

#[derive(Debug, Parser)]
#[command(name = "wavclip", version, about = "Wavelet classification heads over frozen-encoder embeddings")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
#[allow(clippy::large_enum_variant)]
pub enum Command {
    /// Train a head and write a checkpoint plus a loss trace.
    Train(TrainArgs),
    /// Score embedding files with a checkpoint and report ROC AUC / EER.
    Eval(EvalArgs),
    /// Per-row subband energies of an embedding file.
    Transform(TransformArgs),
    /// Write a synthetic two-class embedding file.
    Synth(SynthArgs),
}

/// Every training config key as an optional flag; unset flags leave the
/// value from the config file (or the default) alone.
#[derive(Debug, Default, Args)]
pub struct ConfigFlags {
    #[arg(long)]
    pub seed: Option<String>,
    #[arg(long)]
    pub epochs: Option<String>,
    #[arg(long)]
    pub batch_size: Option<String>,
    #[arg(long)]
    pub lr: Option<String>,
    #[arg(long)]
    pub beta1: Option<String>,
    #[arg(long)]
    pub beta2: Option<String>,
    #[arg(long)]
    pub adam_eps: Option<String>,
    #[arg(long)]
    pub weight_decay: Option<String>,
    #[arg(long)]
    pub dropout: Option<String>,
    /// haar | db2
    #[arg(long)]
    pub family: Option<String>,
    /// wavelet | baseline
    #[arg(long)]
    pub head: Option<String>,
    #[arg(long)]
    pub low_hidden: Option<String>,
    #[arg(long)]
    pub cls_hidden: Option<String>,
    /// frame | video
    #[arg(long)]
    pub pooling: Option<String>,
    #[arg(long)]
    pub train_fraction: Option<String>,
    /// Training embeddings (WEMB).
    #[arg(long, alias = "train")]
    pub train_path: Option<String>,
    #[arg(long, alias = "checkpoint")]
    pub checkpoint_path: Option<String>,
    #[arg(long, alias = "trace")]
    pub trace_path: Option<String>,
    #[arg(long, alias = "heldout")]
    pub heldout_path: Option<String>,
}

impl ConfigFlags {
    pub fn overrides(&self) -> Vec<(&'static str, String)> {
        let fields: [(&'static str, &Option<String>); 19] = [
            ("seed", &self.seed),
            ("epochs", &self.epochs),
            ("batch_size", &self.batch_size),
            ("lr", &self.lr),
            ("beta1", &self.beta1),
            ("beta2", &self.beta2),
            ("adam_eps", &self.adam_eps),
            ("weight_decay", &self.weight_decay),
            ("dropout", &self.dropout),
            ("family", &self.family),
            ("head", &self.head),
            ("low_hidden", &self.low_hidden),
            ("cls_hidden", &self.cls_hidden),
            ("pooling", &self.pooling),
            ("train_fraction", &self.train_fraction),
            ("train_path", &self.train_path),
            ("checkpoint_path", &self.checkpoint_path),
            ("trace_path", &self.trace_path),
            ("heldout_path", &self.heldout_path),
        ];
        fields
            .into_iter()
            .filter_map(|(k, v)| v.as_ref().map(|v| (k, v.clone())))
            .collect()
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Flat `key = value` config file.
    #[arg(long, env = CONFIG_ENV)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub flags: ConfigFlags,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Embedding files to score, reported in this order.
    #[arg(required = true)]
    pub files: Vec<PathBuf>,
    /// Override the pooling recorded in the checkpoint.
    #[arg(long)]
    pub pooling: Option<Pooling>,
    /// Full-precision CSV report.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// Aligned-text report; printed to stdout when omitted.
    #[arg(long)]
    pub text: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TransformArgs {
    pub input: PathBuf,
    #[arg(long, default_value_t = Family::Haar)]
    pub family: Family,
    /// Per-row CSV; printed to stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Rows per class.
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 768)]
    pub dim: usize,
    #[arg(long, default_value_t = 8.0)]
    pub separation: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, short)]
    pub output: PathBuf,
}
