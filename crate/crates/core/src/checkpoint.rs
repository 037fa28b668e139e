//! `WCHK` head checkpoints.
//!
//! Little-endian, no padding; strings are `u32` length + UTF-8:
//!
//! ```text
//! "WCHK" | version u16 = 1
//! head type: string ("wavelet" | "baseline") | family: string ("" for baseline)
//! dim u32 | config text: string
//! MLP count u32, then per MLP:
//!     layer count u32, then per layer:
//!         out u32 | in u32 | activation u8 | W: out×in f64 row-major | b: out f64
//! optimizer present u8 (0 | 1), then if 1, per MLP:
//!     step u64 | lr, beta1, beta2, eps, weight_decay f64
//!     first moment (W, b per layer) | second moment (W, b per layer)
//! ```
//!
//! The wavelet head stores its low-band MLP first, then its classifier.

use std::path::Path;

use ndarray::{Array1, Array2};

use crate::config::HeadKind;
use crate::data::ByteReader;
use crate::error::{Error, FormatError, Result};
use crate::head::{BaselineHeadParams, Head, HeadParams, WaveletHeadParams};
use crate::nn::{Activation, AdamConfig, Gradients, Layer, LayerGrad, MlpParams, OptimizerState};
use crate::wavelet::{make_filter_bank, Family};

pub const WCHK_MAGIC: [u8; 4] = *b"WCHK";
pub const WCHK_VERSION: u16 = 1;

/// Largest layer width accepted on read.
const MAX_WIDTH: u32 = 1 << 20;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub head: HeadParams,
    /// Canonical text of the training config that produced the head.
    pub config_text: String,
    pub optimizer: Option<Vec<OptimizerState>>,
}

fn put_u32(buf: &mut Vec<u8>, v: u32) {
    buf.extend_from_slice(&v.to_le_bytes());
}

fn put_str(buf: &mut Vec<u8>, s: &str) {
    put_u32(buf, s.len() as u32);
    buf.extend_from_slice(s.as_bytes());
}

fn put_f64s<'a>(buf: &mut Vec<u8>, values: impl IntoIterator<Item = &'a f64>) {
    for v in values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
}

pub fn encode_checkpoint(ck: &Checkpoint) -> Vec<u8> {
    let mut buf = Vec::new();
    buf.extend_from_slice(&WCHK_MAGIC);
    buf.extend_from_slice(&WCHK_VERSION.to_le_bytes());
    put_str(&mut buf, ck.head.kind().name());
    put_str(&mut buf, ck.head.family().map(Family::name).unwrap_or(""));
    put_u32(&mut buf, ck.head.dim() as u32);
    put_str(&mut buf, &ck.config_text);
    let mlps = ck.head.mlps();
    put_u32(&mut buf, mlps.len() as u32);
    for mlp in &mlps {
        put_u32(&mut buf, mlp.layers().len() as u32);
        for layer in mlp.layers() {
            put_u32(&mut buf, layer.out_dim() as u32);
            put_u32(&mut buf, layer.in_dim() as u32);
            buf.push(layer.activation.tag());
            put_f64s(&mut buf, layer.weight.iter());
            put_f64s(&mut buf, layer.bias.iter());
        }
    }
    match &ck.optimizer {
        None => buf.push(0),
        Some(states) => {
            buf.push(1);
            for st in states {
                buf.extend_from_slice(&st.step.to_le_bytes());
                let c = st.config;
                put_f64s(&mut buf, &[c.lr, c.beta1, c.beta2, c.eps, c.weight_decay]);
                for moment in [&st.first_moment, &st.second_moment] {
                    for g in &moment.layers {
                        put_f64s(&mut buf, g.weight.iter());
                        put_f64s(&mut buf, g.bias.iter());
                    }
                }
            }
        }
    }
    buf
}

fn invalid(offset: usize, reason: impl Into<String>) -> Error {
    Error::Format(FormatError::InvalidField {
        offset,
        reason: reason.into(),
    })
}

fn read_f64s(r: &mut ByteReader<'_>, n: usize) -> Result<Vec<f64>> {
    if r.remaining() < n.saturating_mul(8) {
        r.take(n.saturating_mul(8))?;
    }
    (0..n).map(|_| Ok(r.f64()?)).collect()
}

fn read_mlp(r: &mut ByteReader<'_>) -> Result<MlpParams> {
    let at = r.offset();
    let count = r.u32()?;
    if count == 0 {
        return Err(invalid(at, "MLP with zero layers"));
    }
    let mut layers = Vec::new();
    for _ in 0..count {
        let at = r.offset();
        let out = r.u32()?;
        let inp = r.u32()?;
        if out == 0 || inp == 0 || out > MAX_WIDTH || inp > MAX_WIDTH {
            return Err(invalid(at, format!("layer shape {out}x{inp} out of range")));
        }
        let (out, inp) = (out as usize, inp as usize);
        let at = r.offset();
        let activation = Activation::from_tag(r.u8()?)
            .ok_or_else(|| invalid(at, "unknown activation tag"))?;
        let weight = Array2::from_shape_vec((out, inp), read_f64s(r, out * inp)?)
            .map_err(|e| invalid(at, e.to_string()))?;
        let bias = Array1::from(read_f64s(r, out)?);
        layers.push(Layer {
            weight,
            bias,
            activation,
        });
    }
    MlpParams::new(layers).map_err(|e| invalid(at, e.to_string()))
}

fn read_moment(r: &mut ByteReader<'_>, mlp: &MlpParams) -> Result<Gradients> {
    let mut layers = Vec::with_capacity(mlp.layers().len());
    for layer in mlp.layers() {
        let weight = Array2::from_shape_vec(layer.weight.raw_dim(), read_f64s(r, layer.weight.len())?)
            .map_err(|e| invalid(r.offset(), e.to_string()))?;
        let bias = Array1::from(read_f64s(r, layer.bias.len())?);
        layers.push(LayerGrad { weight, bias });
    }
    Ok(Gradients { layers })
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint> {
    let mut r = ByteReader::new(bytes);
    let magic = r.array::<4>()?;
    if magic != WCHK_MAGIC {
        return Err(FormatError::BadMagic {
            expected: WCHK_MAGIC,
            found: magic,
        }
        .into());
    }
    let version = r.u16()?;
    if version != WCHK_VERSION {
        return Err(FormatError::UnsupportedVersion(version).into());
    }
    let at = r.offset();
    let kind: HeadKind = r.string()?.parse().map_err(|_| invalid(at, "unknown head type"))?;
    let at = r.offset();
    let family_name = r.string()?.to_owned();
    let dim_at = r.offset();
    let dim = r.u32()? as usize;
    let config_text = r.string()?.to_owned();
    let at_count = r.offset();
    let count = r.u32()?;
    let expected = match kind {
        HeadKind::Wavelet => 2,
        HeadKind::Baseline => 1,
    };
    if count != expected {
        return Err(invalid(at_count, format!("{kind} head needs {expected} MLPs, found {count}")));
    }
    let mlps: Vec<MlpParams> = (0..count).map(|_| read_mlp(&mut r)).collect::<Result<_>>()?;
    let head = match kind {
        HeadKind::Wavelet => {
            let family: Family = family_name
                .parse()
                .map_err(|_| invalid(at, format!("unknown wavelet family {family_name:?}")))?;
            let mut it = mlps.into_iter();
            let (low, cls) = (it.next().unwrap(), it.next().unwrap());
            HeadParams::Wavelet(
                WaveletHeadParams::new(low, cls, make_filter_bank(family))
                    .map_err(|e| invalid(at_count, e.to_string()))?,
            )
        }
        HeadKind::Baseline => {
            if !family_name.is_empty() {
                return Err(invalid(at, "baseline head carries a wavelet family"));
            }
            HeadParams::Baseline(
                BaselineHeadParams::new(mlps.into_iter().next().unwrap())
                    .map_err(|e| invalid(at_count, e.to_string()))?,
            )
        }
    };
    if head.dim() != dim {
        return Err(invalid(dim_at, format!("header dim {dim} != network dim {}", head.dim())));
    }
    let at = r.offset();
    let optimizer = match r.u8()? {
        0 => None,
        1 => {
            let mut states = Vec::new();
            for mlp in head.mlps() {
                let step = r.u64()?;
                let c = read_f64s(&mut r, 5)?;
                let config = AdamConfig {
                    lr: c[0],
                    beta1: c[1],
                    beta2: c[2],
                    eps: c[3],
                    weight_decay: c[4],
                };
                let first_moment = read_moment(&mut r, mlp)?;
                let second_moment = read_moment(&mut r, mlp)?;
                states.push(OptimizerState {
                    step,
                    first_moment,
                    second_moment,
                    config,
                });
            }
            Some(states)
        }
        other => return Err(invalid(at, format!("optimizer flag {other}"))),
    };
    r.finish()?;
    Ok(Checkpoint {
        head,
        config_text,
        optimizer,
    })
}

pub fn write_checkpoint(path: impl AsRef<Path>, ck: &Checkpoint) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_checkpoint(ck)).map_err(|e| Error::io(path, e))
}

pub fn read_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::TrainConfig;
    use crate::data::make_synthetic;
    use crate::head::train;

    fn trained(kind: HeadKind) -> Checkpoint {
        let cfg = TrainConfig {
            head: kind,
            family: Family::Db2,
            low_hidden: 3,
            cls_hidden: 4,
            epochs: 2,
            batch_size: 4,
            ..TrainConfig::default()
        };
        let ds = make_synthetic(6, 8, 2.0, 0).unwrap();
        let mut head = HeadParams::init(8, &cfg).unwrap();
        let report = train(&mut head, &ds, &cfg).unwrap();
        Checkpoint {
            head,
            config_text: cfg.to_text(),
            optimizer: Some(report.optimizer),
        }
    }

    #[test]
    fn round_trips_both_heads() {
        for kind in [HeadKind::Wavelet, HeadKind::Baseline] {
            let ck = trained(kind);
            let bytes = encode_checkpoint(&ck);
            assert_eq!(&bytes[..4], b"WCHK");
            assert_eq!(decode_checkpoint(&bytes).unwrap(), ck);
            let bare = Checkpoint {
                optimizer: None,
                ..ck
            };
            assert_eq!(decode_checkpoint(&encode_checkpoint(&bare)).unwrap(), bare);
        }
    }

    #[test]
    fn rejects_corruption() {
        let bytes = encode_checkpoint(&trained(HeadKind::Wavelet));
        let mut b = bytes.clone();
        b[1] = b'X';
        assert!(matches!(decode_checkpoint(&b), Err(Error::Format(FormatError::BadMagic { .. }))));
        let mut b = bytes.clone();
        b.push(0);
        assert!(matches!(decode_checkpoint(&b), Err(Error::Format(FormatError::TrailingBytes(1)))));
        for cut in [3, 10, bytes.len() / 2, bytes.len() - 1] {
            assert!(matches!(
                decode_checkpoint(&bytes[..cut]),
                Err(Error::Format(FormatError::Truncated { .. }))
            ));
        }
    }
}
