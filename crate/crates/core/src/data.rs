//! Embedding datasets and the `WEMB v1` container.
//!
//! Layout, all integers little-endian, no padding:
//!
//! ```text
//! "WEMB" | version u16 = 1 | flags u16 = 0 | N u64 | d u32
//! tag count u32 | tag count × (len u32, UTF-8 bytes)
//! N × { id: (len u32, UTF-8 bytes) | tag index u32 | label u8 | d × f32 }
//! ```
//!
//! Trailing bytes after the last record are rejected.

use std::collections::{HashMap, HashSet};
use std::path::Path;

use ndarray::{Array2, ArrayView1};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, FormatError, Result};

pub const WEMB_MAGIC: [u8; 4] = *b"WEMB";
pub const WEMB_VERSION: u16 = 1;

/// Frame-level embeddings with labels (0 real, 1 fake), source tags and ids.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingDataset {
    dim: usize,
    tags: Vec<String>,
    tag_lookup: HashMap<String, u32>,
    ids: Vec<String>,
    id_set: HashSet<String>,
    tag_index: Vec<u32>,
    labels: Vec<u8>,
    /// Row-major `N × d`, kept at storage precision.
    values: Vec<f32>,
}

impl EmbeddingDataset {
    pub fn new(dim: usize) -> Self {
        EmbeddingDataset {
            dim,
            tags: Vec::new(),
            tag_lookup: HashMap::new(),
            ids: Vec::new(),
            id_set: HashSet::new(),
            tag_index: Vec::new(),
            labels: Vec::new(),
            values: Vec::new(),
        }
    }

    /// Register a source tag without adding a row; returns its index.
    pub fn intern_tag(&mut self, tag: &str) -> u32 {
        if let Some(&i) = self.tag_lookup.get(tag) {
            return i;
        }
        let i = self.tags.len() as u32;
        self.tags.push(tag.to_owned());
        self.tag_lookup.insert(tag.to_owned(), i);
        i
    }

    /// Append a row, validating dimension, finiteness, label and id uniqueness.
    pub fn push(&mut self, id: &str, source: &str, label: u8, embedding: &[f32]) -> Result<()> {
        if embedding.len() != self.dim {
            return Err(Error::Shape(format!(
                "row {id:?} has {} values, dataset dimension is {}",
                embedding.len(),
                self.dim
            )));
        }
        if label > 1 {
            return Err(Error::Data(format!("row {id:?}: label {label} is not 0 or 1")));
        }
        if embedding.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data(format!("row {id:?} contains non-finite values")));
        }
        if self.id_set.contains(id) {
            return Err(Error::Data(format!("duplicate id {id:?}")));
        }
        let tag = self.intern_tag(source);
        self.id_set.insert(id.to_owned());
        self.ids.push(id.to_owned());
        self.tag_index.push(tag);
        self.labels.push(label);
        self.values.extend_from_slice(embedding);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn tags(&self) -> &[String] {
        &self.tags
    }

    pub fn source(&self, row: usize) -> &str {
        &self.tags[self.tag_index[row] as usize]
    }

    pub fn embedding(&self, row: usize) -> &[f32] {
        &self.values[row * self.dim..(row + 1) * self.dim]
    }

    /// `(n_real, n_fake)`.
    pub fn class_counts(&self) -> (usize, usize) {
        let fake = self.labels.iter().filter(|&&y| y == 1).count();
        (self.len() - fake, fake)
    }

    /// Rows `indices` promoted to 64-bit, shape `(indices.len(), d)`.
    pub fn features(&self, indices: &[usize]) -> Array2<f64> {
        let mut out = Array2::zeros((indices.len(), self.dim));
        for (r, &i) in indices.iter().enumerate() {
            for (dst, &src) in out.row_mut(r).iter_mut().zip(self.embedding(i)) {
                *dst = f64::from(src);
            }
        }
        out
    }

    /// All rows promoted to 64-bit.
    pub fn all_features(&self) -> Array2<f64> {
        let idx: Vec<usize> = (0..self.len()).collect();
        self.features(&idx)
    }

    /// New dataset holding `indices` in the given order. The tag table is kept whole.
    pub fn subset(&self, indices: &[usize]) -> EmbeddingDataset {
        let mut out = EmbeddingDataset {
            dim: self.dim,
            tags: self.tags.clone(),
            tag_lookup: self.tag_lookup.clone(),
            ids: Vec::with_capacity(indices.len()),
            id_set: HashSet::with_capacity(indices.len()),
            tag_index: Vec::with_capacity(indices.len()),
            labels: Vec::with_capacity(indices.len()),
            values: Vec::with_capacity(indices.len() * self.dim),
        };
        for &i in indices {
            out.ids.push(self.ids[i].clone());
            out.id_set.insert(self.ids[i].clone());
            out.tag_index.push(self.tag_index[i]);
            out.labels.push(self.labels[i]);
            out.values.extend_from_slice(self.embedding(i));
        }
        out
    }
}

// ---------------------------------------------------------------------------
// WEMB encoding

fn put_str(buf: &mut Vec<u8>, s: &str) {
    buf.extend_from_slice(&(s.len() as u32).to_le_bytes());
    buf.extend_from_slice(s.as_bytes());
}

/// Serialize to `WEMB v1` bytes.
pub fn encode_embeddings(ds: &EmbeddingDataset) -> Vec<u8> {
    let record = 4 + 4 + 1 + 4 * ds.dim;
    let mut buf = Vec::with_capacity(24 + ds.len() * (record + 16));
    buf.extend_from_slice(&WEMB_MAGIC);
    buf.extend_from_slice(&WEMB_VERSION.to_le_bytes());
    buf.extend_from_slice(&0u16.to_le_bytes());
    buf.extend_from_slice(&(ds.len() as u64).to_le_bytes());
    buf.extend_from_slice(&(ds.dim as u32).to_le_bytes());
    buf.extend_from_slice(&(ds.tags.len() as u32).to_le_bytes());
    for tag in &ds.tags {
        put_str(&mut buf, tag);
    }
    for row in 0..ds.len() {
        put_str(&mut buf, &ds.ids[row]);
        buf.extend_from_slice(&ds.tag_index[row].to_le_bytes());
        buf.push(ds.labels[row]);
        for v in ds.embedding(row) {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    buf
}

/// Bounds-checked little-endian reader that reports byte offsets.
pub(crate) struct ByteReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    pub(crate) fn new(bytes: &'a [u8]) -> Self {
        ByteReader { bytes, pos: 0 }
    }

    pub(crate) fn offset(&self) -> usize {
        self.pos
    }

    pub(crate) fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    pub(crate) fn take(&mut self, n: usize) -> Result<&'a [u8], FormatError> {
        if self.remaining() < n {
            return Err(FormatError::Truncated {
                offset: self.pos,
                needed: n - self.remaining(),
            });
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    pub(crate) fn array<const N: usize>(&mut self) -> Result<[u8; N], FormatError> {
        let mut out = [0u8; N];
        out.copy_from_slice(self.take(N)?);
        Ok(out)
    }

    pub(crate) fn u8(&mut self) -> Result<u8, FormatError> {
        Ok(self.take(1)?[0])
    }

    pub(crate) fn u16(&mut self) -> Result<u16, FormatError> {
        Ok(u16::from_le_bytes(self.array()?))
    }

    pub(crate) fn u32(&mut self) -> Result<u32, FormatError> {
        Ok(u32::from_le_bytes(self.array()?))
    }

    pub(crate) fn u64(&mut self) -> Result<u64, FormatError> {
        Ok(u64::from_le_bytes(self.array()?))
    }

    pub(crate) fn f64(&mut self) -> Result<f64, FormatError> {
        let at = self.pos;
        let v = f64::from_le_bytes(self.array()?);
        if !v.is_finite() {
            return Err(FormatError::NonFinite { offset: at });
        }
        Ok(v)
    }

    pub(crate) fn string(&mut self) -> Result<&'a str, FormatError> {
        let len = self.u32()? as usize;
        let at = self.pos;
        let raw = self.take(len)?;
        std::str::from_utf8(raw).map_err(|_| FormatError::BadUtf8 { offset: at })
    }

    pub(crate) fn finish(self) -> Result<(), FormatError> {
        match self.remaining() {
            0 => Ok(()),
            n => Err(FormatError::TrailingBytes(n)),
        }
    }
}

/// Parse `WEMB v1` bytes.
pub fn decode_embeddings(bytes: &[u8]) -> Result<EmbeddingDataset, FormatError> {
    let mut r = ByteReader::new(bytes);
    let magic = r.array::<4>()?;
    if magic != WEMB_MAGIC {
        return Err(FormatError::BadMagic {
            expected: WEMB_MAGIC,
            found: magic,
        });
    }
    let version = r.u16()?;
    if version != WEMB_VERSION {
        return Err(FormatError::UnsupportedVersion(version));
    }
    let flags = r.u16()?;
    if flags != 0 {
        return Err(FormatError::UnsupportedFlags(flags));
    }
    let n = r.u64()?;
    let dim_at = r.offset();
    let dim = r.u32()? as usize;
    if dim == 0 {
        return Err(FormatError::InvalidField {
            offset: dim_at,
            reason: "dimension must be positive".into(),
        });
    }
    let mut ds = EmbeddingDataset::new(dim);
    let tag_count = r.u32()?;
    for _ in 0..tag_count {
        let at = r.offset();
        let tag = r.string()?;
        if ds.tag_lookup.contains_key(tag) {
            return Err(FormatError::InvalidField {
                offset: at,
                reason: format!("duplicate source tag {tag:?}"),
            });
        }
        ds.intern_tag(tag);
    }

    // Bound preallocation by what the input can actually hold.
    let min_record = 4 + 4 + 1 + 4 * dim;
    let plausible = (r.remaining() / min_record).min(n as usize);
    ds.values.reserve(plausible * dim);

    let mut row = vec![0f32; dim];
    for _ in 0..n {
        let id = r.string()?;
        let tag_at = r.offset();
        let tag = r.u32()?;
        if tag >= tag_count {
            return Err(FormatError::BadTagIndex {
                offset: tag_at,
                index: tag,
                count: tag_count,
            });
        }
        let label_at = r.offset();
        let label = r.u8()?;
        if label > 1 {
            return Err(FormatError::BadLabel {
                offset: label_at,
                value: label,
            });
        }
        for slot in row.iter_mut() {
            let at = r.offset();
            let v = f32::from_le_bytes(r.array()?);
            if !v.is_finite() {
                return Err(FormatError::NonFinite { offset: at });
            }
            *slot = v;
        }
        if ds.id_set.contains(id) {
            return Err(FormatError::DuplicateId(id.to_owned()));
        }
        ds.id_set.insert(id.to_owned());
        ds.ids.push(id.to_owned());
        ds.tag_index.push(tag);
        ds.labels.push(label);
        ds.values.extend_from_slice(&row);
    }
    r.finish()?;
    Ok(ds)
}

pub fn write_embeddings(path: impl AsRef<Path>, ds: &EmbeddingDataset) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_embeddings(ds)).map_err(|e| Error::io(path, e))
}

pub fn read_embeddings(path: impl AsRef<Path>) -> Result<EmbeddingDataset> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(decode_embeddings(&bytes)?)
}

// ---------------------------------------------------------------------------
// Splitting and batching

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub seed: u64,
    pub stratified: bool,
}

fn take_count(n: usize, fraction: f64) -> usize {
    (fraction * n as f64).round() as usize
}

/// Deterministic disjoint train/test partition.
///
/// Each side keeps the original relative row order.
pub fn split(ds: &EmbeddingDataset, spec: SplitSpec) -> Result<(EmbeddingDataset, EmbeddingDataset)> {
    if !(spec.train_fraction > 0.0 && spec.train_fraction < 1.0) {
        return Err(Error::Config(format!(
            "train fraction {} not in (0, 1)",
            spec.train_fraction
        )));
    }
    if ds.len() < 2 {
        return Err(Error::Config(format!("cannot split {} rows", ds.len())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut train = Vec::new();
    if spec.stratified {
        for class in [0u8, 1] {
            let mut rows: Vec<usize> = (0..ds.len()).filter(|&i| ds.labels[i] == class).collect();
            let k = take_count(rows.len(), spec.train_fraction);
            if k == 0 || k == rows.len() {
                return Err(Error::Config(format!(
                    "stratified split leaves an empty side for class {class} ({} rows, fraction {})",
                    rows.len(),
                    spec.train_fraction
                )));
            }
            rows.shuffle(&mut rng);
            train.extend_from_slice(&rows[..k]);
        }
    } else {
        let mut rows: Vec<usize> = (0..ds.len()).collect();
        let k = take_count(rows.len(), spec.train_fraction);
        if k == 0 || k == rows.len() {
            return Err(Error::Config(format!(
                "split of {} rows at fraction {} leaves an empty side",
                rows.len(),
                spec.train_fraction
            )));
        }
        rows.shuffle(&mut rng);
        train.extend_from_slice(&rows[..k]);
    }
    train.sort_unstable();
    let in_train: HashSet<usize> = train.iter().copied().collect();
    let test: Vec<usize> = (0..ds.len()).filter(|i| !in_train.contains(i)).collect();
    Ok((ds.subset(&train), ds.subset(&test)))
}

/// Shuffled row-index batches covering every row exactly once.
pub fn batches(ds: &EmbeddingDataset, batch_size: usize, shuffle_seed: u64) -> Result<Vec<Vec<usize>>> {
    batch_indices(ds.len(), batch_size, shuffle_seed)
}

pub(crate) fn batch_indices(n: usize, batch_size: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if batch_size == 0 {
        return Err(Error::Config("batch size must be at least 1".into()));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    Ok(order.chunks(batch_size).map(<[usize]>::to_vec).collect())
}

// ---------------------------------------------------------------------------
// Synthetic data

/// Two Gaussian clouds at `∓separation/2` along a seeded unit direction.
///
/// Rows alternate real, fake. Values are rounded to `f32` like any stored file.
pub fn make_synthetic(n_per_class: usize, dim: usize, separation: f64, seed: u64) -> Result<EmbeddingDataset> {
    if dim == 0 || !dim.is_multiple_of(2) {
        return Err(Error::Config(format!("dimension {dim} must be even and positive")));
    }
    if n_per_class == 0 {
        return Err(Error::Config("need at least one row per class".into()));
    }
    if !separation.is_finite() || separation < 0.0 {
        return Err(Error::Config(format!("separation {separation} must be finite and >= 0")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut direction: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
    let norm = direction.iter().map(|v| v * v).sum::<f64>().sqrt();
    direction.iter_mut().for_each(|v| *v /= norm);

    let mut ds = EmbeddingDataset::new(dim);
    let mut row = vec![0f32; dim];
    for i in 0..n_per_class {
        for label in [0u8, 1] {
            let shift = if label == 1 { separation / 2.0 } else { -separation / 2.0 };
            for (slot, u) in row.iter_mut().zip(&direction) {
                let noise: f64 = StandardNormal.sample(&mut rng);
                *slot = (noise + shift * u) as f32;
            }
            let source = if label == 1 { "synthetic-fake" } else { "synthetic-real" };
            ds.push(&format!("synth-{:07}", 2 * i + label as usize), source, label, &row)?;
        }
    }
    Ok(ds)
}

// ---------------------------------------------------------------------------
// Video pooling

/// Splits a `video_id/frame_idx` tag.
pub fn parse_frame_tag(tag: &str) -> Option<(&str, u64)> {
    let (video, frame) = tag.rsplit_once('/')?;
    if video.is_empty() {
        return None;
    }
    frame.parse().ok().map(|f| (video, f))
}

/// Video-level view: mean of frame scores per video, in order of first appearance.
#[derive(Debug, Clone, PartialEq)]
pub struct PooledScores {
    pub videos: Vec<String>,
    pub scores: Vec<f64>,
    pub labels: Vec<u8>,
}

/// Mean-pool per-row scores by video. `None` when any row's tag lacks a frame index.
pub fn pool_by_video(ds: &EmbeddingDataset, scores: ArrayView1<f64>) -> Result<Option<PooledScores>> {
    if scores.len() != ds.len() {
        return Err(Error::Shape(format!(
            "{} scores for {} rows",
            scores.len(),
            ds.len()
        )));
    }
    let mut order: Vec<&str> = Vec::new();
    let mut acc: HashMap<&str, (f64, usize, u8)> = HashMap::new();
    for row in 0..ds.len() {
        let Some((video, _)) = parse_frame_tag(ds.source(row)) else {
            return Ok(None);
        };
        let label = ds.labels[row];
        let entry = acc.entry(video).or_insert_with(|| {
            order.push(video);
            (0.0, 0, label)
        });
        if entry.2 != label {
            return Err(Error::Data(format!("video {video:?} mixes real and fake frames")));
        }
        entry.0 += scores[row];
        entry.1 += 1;
    }
    if order.is_empty() {
        return Ok(None);
    }
    let mut pooled = PooledScores {
        videos: Vec::with_capacity(order.len()),
        scores: Vec::with_capacity(order.len()),
        labels: Vec::with_capacity(order.len()),
    };
    for video in order {
        let (sum, count, label) = acc[video];
        pooled.videos.push(video.to_owned());
        pooled.scores.push(sum / count as f64);
        pooled.labels.push(label);
    }
    Ok(Some(pooled))
}
