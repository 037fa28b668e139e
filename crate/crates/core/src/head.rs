//! Classification heads over frozen encoder embeddings.
//!
//! The wavelet head splits each embedding `z` into low and high bands with a
//! single-level DWT, refines only the low band with an MLP, re-synthesizes
//! with the untouched high band and classifies the result:
//!
//! ```text
//! (low, high) = dwt(z)
//! low'        = low_mlp(low)
//! z_new       = idwt(low', high)
//! logit       = cls_mlp(z_new)
//! ```
//!
//! The baseline head is `cls_mlp(z)` alone. Both emit one logit per row;
//! higher means more likely fake (label 1).

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::{HeadKind, TrainConfig};
use crate::data::{batch_indices, EmbeddingDataset};
use crate::error::{Error, Result};
use crate::nn::{
    adam_step, backward, bce_with_logits, bce_with_logits_grad, init_mlp, mlp_forward,
    mlp_forward_cached, Activation, Dropout, Gradients, MlpParams, OptimizerState,
};
use crate::wavelet::{analyze_into, make_filter_bank, synthesize_into, Family, FilterBank};

/// Embedding width of the reference encoder.
pub const REFERENCE_EMBEDDING_DIM: usize = 768;

/// What the heads assume about their input features.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncoderContract {
    pub dim: usize,
    pub provenance: String,
}

impl Default for EncoderContract {
    fn default() -> Self {
        EncoderContract {
            dim: REFERENCE_EMBEDDING_DIM,
            provenance: "clip-vit-l14 image embedding (frozen)".into(),
        }
    }
}

impl EncoderContract {
    pub fn check(&self) -> Result<()> {
        if self.dim == 0 || !self.dim.is_multiple_of(2) {
            return Err(Error::Shape(format!("embedding dim {} must be even", self.dim)));
        }
        Ok(())
    }
}

/// Deterministic independent seed streams from one user seed (splitmix64).
pub(crate) fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const STREAM_LOW_MLP: u64 = 1;
const STREAM_CLS_MLP: u64 = 2;
const STREAM_DROPOUT: u64 = 3;
const STREAM_SHUFFLE: u64 = 4;

fn init_cls_mlp(dim: usize, hidden: usize, seed: u64) -> Result<MlpParams> {
    init_mlp(
        &[dim, hidden, 1],
        &[Activation::Gelu, Activation::Identity],
        derive_seed(seed, STREAM_CLS_MLP),
    )
}

fn check_cls(cls_mlp: &MlpParams, dim: usize) -> Result<()> {
    if cls_mlp.in_dim() != dim || cls_mlp.out_dim() != 1 {
        return Err(Error::Shape(format!(
            "classifier maps {} -> {}, expected {dim} -> 1",
            cls_mlp.in_dim(),
            cls_mlp.out_dim()
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct WaveletHeadParams {
    pub low_mlp: MlpParams,
    pub cls_mlp: MlpParams,
    pub filter_bank: FilterBank,
}

impl WaveletHeadParams {
    pub fn new(low_mlp: MlpParams, cls_mlp: MlpParams, filter_bank: FilterBank) -> Result<Self> {
        let dim = cls_mlp.in_dim();
        EncoderContract { dim, provenance: String::new() }.check()?;
        check_cls(&cls_mlp, dim)?;
        if low_mlp.in_dim() != dim / 2 || low_mlp.out_dim() != dim / 2 {
            return Err(Error::Shape(format!(
                "low-band MLP maps {} -> {}, expected {} -> {}",
                low_mlp.in_dim(),
                low_mlp.out_dim(),
                dim / 2,
                dim / 2
            )));
        }
        if dim < filter_bank.taps() {
            return Err(Error::Shape(format!(
                "dim {dim} shorter than the {} filter",
                filter_bank.family()
            )));
        }
        Ok(WaveletHeadParams {
            low_mlp,
            cls_mlp,
            filter_bank,
        })
    }

    /// Fresh head: `d/2 -> low_hidden -> d/2` (gelu, identity) and
    /// `d -> cls_hidden -> 1` (gelu, identity).
    pub fn init(dim: usize, low_hidden: usize, cls_hidden: usize, family: Family, seed: u64) -> Result<Self> {
        EncoderContract { dim, provenance: String::new() }.check()?;
        let half = dim / 2;
        let low_mlp = init_mlp(
            &[half, low_hidden, half],
            &[Activation::Gelu, Activation::Identity],
            derive_seed(seed, STREAM_LOW_MLP),
        )?;
        let cls_mlp = init_cls_mlp(dim, cls_hidden, seed)?;
        Self::new(low_mlp, cls_mlp, make_filter_bank(family))
    }

    pub fn dim(&self) -> usize {
        self.cls_mlp.in_dim()
    }

    fn split_bands(&self, z: &ArrayView2<f64>) -> (Array2<f64>, Array2<f64>) {
        let (rows, dim) = z.dim();
        let mut low = Array2::zeros((rows, dim / 2));
        let mut high = Array2::zeros((rows, dim / 2));
        let mut buf = vec![0.0; dim];
        let mut lo = vec![0.0; dim / 2];
        let mut hi = vec![0.0; dim / 2];
        for (r, row) in z.rows().into_iter().enumerate() {
            buf.iter_mut().zip(row).for_each(|(b, &v)| *b = v);
            analyze_into(&self.filter_bank, &buf, &mut lo, &mut hi);
            low.row_mut(r).iter_mut().zip(&lo).for_each(|(d, &v)| *d = v);
            high.row_mut(r).iter_mut().zip(&hi).for_each(|(d, &v)| *d = v);
        }
        (low, high)
    }

    fn merge_bands(&self, low: &Array2<f64>, high: &Array2<f64>) -> Array2<f64> {
        let (rows, half) = low.dim();
        let mut out = Array2::zeros((rows, 2 * half));
        let mut buf = vec![0.0; 2 * half];
        for r in 0..rows {
            let lo: Vec<f64> = low.row(r).to_vec();
            let hi: Vec<f64> = high.row(r).to_vec();
            synthesize_into(&self.filter_bank, &lo, &hi, &mut buf);
            out.row_mut(r).iter_mut().zip(&buf).for_each(|(d, &v)| *d = v);
        }
        out
    }

    /// The re-synthesized embeddings fed to the classifier.
    pub fn refine(&self, z: ArrayView2<f64>) -> Result<Array2<f64>> {
        check_input(z.ncols(), self.dim())?;
        let (low, high) = self.split_bands(&z);
        let refined = mlp_forward(&self.low_mlp, low.view())?;
        Ok(self.merge_bands(&refined, &high))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineHeadParams {
    pub cls_mlp: MlpParams,
}

impl BaselineHeadParams {
    pub fn new(cls_mlp: MlpParams) -> Result<Self> {
        let dim = cls_mlp.in_dim();
        check_cls(&cls_mlp, dim)?;
        Ok(BaselineHeadParams { cls_mlp })
    }

    /// Same classifier topology and initial weights as the wavelet head
    /// built from the same seed.
    pub fn init(dim: usize, cls_hidden: usize, seed: u64) -> Result<Self> {
        Self::new(init_cls_mlp(dim, cls_hidden, seed)?)
    }

    pub fn dim(&self) -> usize {
        self.cls_mlp.in_dim()
    }
}

fn check_input(width: usize, dim: usize) -> Result<()> {
    if width != dim {
        return Err(Error::Shape(format!(
            "embedding width {width} != head dimension {dim}"
        )));
    }
    Ok(())
}

/// Wavelet head logits, one per row of `z`.
pub fn head_forward(p: &WaveletHeadParams, z: ArrayView2<f64>) -> Result<Array1<f64>> {
    let z_new = p.refine(z)?;
    Ok(mlp_forward(&p.cls_mlp, z_new.view())?.column(0).to_owned())
}

/// Baseline head logits, one per row of `z`.
pub fn baseline_forward(p: &BaselineHeadParams, z: ArrayView2<f64>) -> Result<Array1<f64>> {
    check_input(z.ncols(), p.dim())?;
    Ok(mlp_forward(&p.cls_mlp, z)?.column(0).to_owned())
}

/// Common interface the trainer needs from a head.
pub trait Head {
    fn dim(&self) -> usize;

    fn forward(&self, z: ArrayView2<f64>) -> Result<Array1<f64>>;

    /// Mean BCE on `z` and its gradient for every MLP in [`Head::mlps`] order.
    fn loss_and_grads(
        &self,
        z: ArrayView2<f64>,
        labels: &[u8],
        dropout: Option<Dropout<'_>>,
    ) -> Result<(f64, Vec<Gradients>)>;

    fn mlps(&self) -> Vec<&MlpParams>;

    fn mlps_mut(&mut self) -> Vec<&mut MlpParams>;
}

fn reborrow<'a>(d: &'a mut Option<Dropout<'_>>) -> Option<Dropout<'a>> {
    d.as_mut().map(|d| Dropout {
        rate: d.rate,
        rng: &mut *d.rng,
    })
}

fn upstream_from_logits(logits: &Array2<f64>, labels: &[u8]) -> Result<(f64, Array2<f64>)> {
    let (loss, dz) = bce_with_logits_grad(logits.column(0), labels)?;
    Ok((loss, dz.insert_axis(Axis(1))))
}

impl Head for WaveletHeadParams {
    fn dim(&self) -> usize {
        WaveletHeadParams::dim(self)
    }

    fn forward(&self, z: ArrayView2<f64>) -> Result<Array1<f64>> {
        head_forward(self, z)
    }

    fn loss_and_grads(
        &self,
        z: ArrayView2<f64>,
        labels: &[u8],
        dropout: Option<Dropout<'_>>,
    ) -> Result<(f64, Vec<Gradients>)> {
        check_input(z.ncols(), self.dim())?;
        let (low, high) = self.split_bands(&z);
        let mut dropout = dropout;
        let (refined, low_cache) = mlp_forward_cached(&self.low_mlp, low.view(), reborrow(&mut dropout))?;
        let z_new = self.merge_bands(&refined, &high);
        let (logits, cls_cache) = mlp_forward_cached(&self.cls_mlp, z_new.view(), dropout)?;
        let (loss, upstream) = upstream_from_logits(&logits, labels)?;
        let (cls_grads, dz_new) = backward(&self.cls_mlp, &cls_cache, upstream.view())?;
        // z_new = Lᵀ low' + Hᵀ high, so dLoss/dlow' = L dLoss/dz_new.
        let (dlow, _) = self.split_bands(&dz_new.view());
        let (low_grads, _) = backward(&self.low_mlp, &low_cache, dlow.view())?;
        Ok((loss, vec![low_grads, cls_grads]))
    }

    fn mlps(&self) -> Vec<&MlpParams> {
        vec![&self.low_mlp, &self.cls_mlp]
    }

    fn mlps_mut(&mut self) -> Vec<&mut MlpParams> {
        vec![&mut self.low_mlp, &mut self.cls_mlp]
    }
}

impl Head for BaselineHeadParams {
    fn dim(&self) -> usize {
        BaselineHeadParams::dim(self)
    }

    fn forward(&self, z: ArrayView2<f64>) -> Result<Array1<f64>> {
        baseline_forward(self, z)
    }

    fn loss_and_grads(
        &self,
        z: ArrayView2<f64>,
        labels: &[u8],
        dropout: Option<Dropout<'_>>,
    ) -> Result<(f64, Vec<Gradients>)> {
        check_input(z.ncols(), self.dim())?;
        let (logits, cache) = mlp_forward_cached(&self.cls_mlp, z, dropout)?;
        let (loss, upstream) = upstream_from_logits(&logits, labels)?;
        let (grads, _) = backward(&self.cls_mlp, &cache, upstream.view())?;
        Ok((loss, vec![grads]))
    }

    fn mlps(&self) -> Vec<&MlpParams> {
        vec![&self.cls_mlp]
    }

    fn mlps_mut(&mut self) -> Vec<&mut MlpParams> {
        vec![&mut self.cls_mlp]
    }
}

/// Either head, as stored in checkpoints.
#[derive(Debug, Clone, PartialEq)]
pub enum HeadParams {
    Wavelet(WaveletHeadParams),
    Baseline(BaselineHeadParams),
}

impl HeadParams {
    /// Fresh head of `cfg.head` type for embeddings of width `dim`.
    pub fn init(dim: usize, cfg: &TrainConfig) -> Result<Self> {
        Ok(match cfg.head {
            HeadKind::Wavelet => HeadParams::Wavelet(WaveletHeadParams::init(
                dim,
                cfg.low_hidden,
                cfg.cls_hidden,
                cfg.family,
                cfg.seed,
            )?),
            HeadKind::Baseline => {
                HeadParams::Baseline(BaselineHeadParams::init(dim, cfg.cls_hidden, cfg.seed)?)
            }
        })
    }

    pub fn kind(&self) -> HeadKind {
        match self {
            HeadParams::Wavelet(_) => HeadKind::Wavelet,
            HeadParams::Baseline(_) => HeadKind::Baseline,
        }
    }

    /// Wavelet family, if the head has one.
    pub fn family(&self) -> Option<Family> {
        match self {
            HeadParams::Wavelet(p) => Some(p.filter_bank.family()),
            HeadParams::Baseline(_) => None,
        }
    }

    fn inner(&self) -> &dyn Head {
        match self {
            HeadParams::Wavelet(p) => p,
            HeadParams::Baseline(p) => p,
        }
    }
}

impl Head for HeadParams {
    fn dim(&self) -> usize {
        self.inner().dim()
    }

    fn forward(&self, z: ArrayView2<f64>) -> Result<Array1<f64>> {
        self.inner().forward(z)
    }

    fn loss_and_grads(
        &self,
        z: ArrayView2<f64>,
        labels: &[u8],
        dropout: Option<Dropout<'_>>,
    ) -> Result<(f64, Vec<Gradients>)> {
        self.inner().loss_and_grads(z, labels, dropout)
    }

    fn mlps(&self) -> Vec<&MlpParams> {
        self.inner().mlps()
    }

    fn mlps_mut(&mut self) -> Vec<&mut MlpParams> {
        match self {
            HeadParams::Wavelet(p) => p.mlps_mut(),
            HeadParams::Baseline(p) => p.mlps_mut(),
        }
    }
}

const SCORE_CHUNK: usize = 512;

/// Logits for every row of `ds`, in row order.
pub fn scores<H: Head + ?Sized>(head: &H, ds: &EmbeddingDataset) -> Result<Array1<f64>> {
    check_input(ds.dim(), head.dim())?;
    let mut out = Vec::with_capacity(ds.len());
    let rows: Vec<usize> = (0..ds.len()).collect();
    for chunk in rows.chunks(SCORE_CHUNK) {
        let z = ds.features(chunk);
        out.extend(head.forward(z.view())?);
    }
    Ok(Array1::from(out))
}

pub fn head_scores(p: &WaveletHeadParams, ds: &EmbeddingDataset) -> Result<Array1<f64>> {
    scores(p, ds)
}

pub fn baseline_scores(p: &BaselineHeadParams, ds: &EmbeddingDataset) -> Result<Array1<f64>> {
    scores(p, ds)
}

/// Outcome of a training run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    /// Full-pass training loss after each epoch, evaluated without dropout
    /// in dataset row order.
    pub epoch_loss: Vec<f64>,
    /// Mean mini-batch loss seen during each epoch.
    pub running_loss: Vec<f64>,
    /// Full-pass loss before the first update.
    pub initial_loss: f64,
    /// Adam state per MLP, in [`Head::mlps`] order.
    pub optimizer: Vec<OptimizerState>,
}

/// Full-pass mean BCE over `ds`.
pub fn dataset_loss<H: Head + ?Sized>(head: &H, ds: &EmbeddingDataset) -> Result<f64> {
    let logits = scores(head, ds)?;
    bce_with_logits(logits.view(), ds.labels())
}

/// Mini-batch Adam on mean BCE over shuffled epochs. Only head parameters
/// change; the dataset is read-only.
pub fn train<H: Head + ?Sized>(head: &mut H, ds: &EmbeddingDataset, cfg: &TrainConfig) -> Result<TrainReport> {
    cfg.validate()?;
    if ds.is_empty() {
        return Err(Error::Data("cannot train on an empty dataset".into()));
    }
    let (real, fake) = ds.class_counts();
    if real == 0 || fake == 0 {
        return Err(Error::Data(format!(
            "training needs both classes, got {real} real and {fake} fake"
        )));
    }
    check_input(ds.dim(), head.dim())?;

    let adam = cfg.adam();
    let mut optimizer: Vec<OptimizerState> =
        head.mlps().into_iter().map(|p| OptimizerState::new(p, adam)).collect();
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, STREAM_DROPOUT));
    let initial_loss = dataset_loss(head, ds)?;
    let mut epoch_loss = Vec::with_capacity(cfg.epochs);
    let mut running_loss = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        let shuffle_seed = derive_seed(derive_seed(cfg.seed, STREAM_SHUFFLE), epoch as u64);
        let mut seen = 0.0;
        let mut weighted = 0.0;
        for batch in batch_indices(ds.len(), cfg.batch_size, shuffle_seed)? {
            let z = ds.features(&batch);
            let labels: Vec<u8> = batch.iter().map(|&i| ds.labels()[i]).collect();
            let dropout = (cfg.dropout > 0.0).then_some(Dropout {
                rate: cfg.dropout,
                rng: &mut dropout_rng,
            });
            let (loss, grads) = head.loss_and_grads(z.view(), &labels, dropout)?;
            for ((params, g), st) in head.mlps_mut().into_iter().zip(&grads).zip(&mut optimizer) {
                adam_step(params, g, st)?;
            }
            weighted += loss * batch.len() as f64;
            seen += batch.len() as f64;
        }
        running_loss.push(weighted / seen);
        epoch_loss.push(dataset_loss(head, ds)?);
    }
    Ok(TrainReport {
        epoch_loss,
        running_loss,
        initial_loss,
        optimizer,
    })
}

pub fn head_train(p: &mut WaveletHeadParams, ds: &EmbeddingDataset, cfg: &TrainConfig) -> Result<TrainReport> {
    train(p, ds, cfg)
}

pub fn baseline_train(p: &mut BaselineHeadParams, ds: &EmbeddingDataset, cfg: &TrainConfig) -> Result<TrainReport> {
    train(p, ds, cfg)
}
