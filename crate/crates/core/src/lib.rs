//! Wavelet classification heads for frozen-encoder embeddings.
//!
//! - [`wavelet`]: orthonormal filter banks, 1D/2D single-level DWT and IDWT
//! - [`nn`]: dense MLPs with hand-written backprop, BCE loss, Adam
//! - [`head`]: the wavelet head (DWT, low-band MLP, IDWT, classifier) and a
//!   plain baseline head, plus training and scoring
//! - [`data`]: the `WEMB` embedding file format, splits, batches, synthetic data
//! - [`metrics`]: ROC, AUC, EER
//! - [`checkpoint`]: the `WCHK` head checkpoint format
//! - [`config`]: training configuration

pub mod checkpoint;
pub mod config;
pub mod data;
pub mod error;
pub mod head;
pub mod metrics;
pub mod nn;
pub mod wavelet;

pub use checkpoint::{read_checkpoint, write_checkpoint, Checkpoint};
pub use config::{HeadKind, Pooling, TrainConfig};
pub use data::{read_embeddings, write_embeddings, EmbeddingDataset, SplitSpec};
pub use error::{Error, ErrorClass, FormatError, Result};
pub use head::{BaselineHeadParams, EncoderContract, Head, HeadParams, TrainReport, WaveletHeadParams};
pub use metrics::{auc, eer, roc_curve, RocReport};
pub use nn::{AdamConfig, Gradients, MlpParams, OptimizerState};
pub use wavelet::{make_filter_bank, Family, FilterBank, Subbands1D, Subbands2D};
