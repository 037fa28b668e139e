//! Orthonormal filter banks and single-level discrete wavelet transforms.
//!
//! Analysis of a length-`n` signal `x` produces
//!
//! ```text
//! low[k]  = sum_j l[(j - 2k) mod n] * x[j]
//! high[k] = sum_j h[(j - 2k) mod n] * x[j]
//! ```
//!
//! for `k in 0..n/2`, i.e. `low = L x` and `high = H x` with the stride-2
//! circulant operators `L`, `H`. Synthesis applies the transposes. Indices
//! wrap periodically, so for an orthonormal bank `[L; H]` is an orthogonal
//! matrix and synthesis is the exact inverse of analysis.
//!
//! Transforms are evaluated as stride-2 convolutions. The dense operators
//! from [`analysis_operators`] are a reference form, used to cross-check.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};

/// Supported wavelet families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Family {
    #[default]
    Haar,
    /// Daubechies, two vanishing moments (4 taps).
    Db2,
}

impl Family {
    pub fn name(self) -> &'static str {
        match self {
            Family::Haar => "haar",
            Family::Db2 => "db2",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "haar" | "db1" => Ok(Family::Haar),
            "db2" => Ok(Family::Db2),
            other => Err(Error::Config(format!("unknown wavelet family {other:?}"))),
        }
    }
}

/// Low-pass / high-pass analysis coefficients of an orthonormal wavelet.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterBank {
    family: Family,
    low: Vec<f64>,
    high: Vec<f64>,
}

/// Build the filter bank for `family`.
pub fn make_filter_bank(family: Family) -> FilterBank {
    let low = match family {
        Family::Haar => vec![std::f64::consts::FRAC_1_SQRT_2; 2],
        Family::Db2 => {
            let s3 = 3f64.sqrt();
            let norm = 4.0 * std::f64::consts::SQRT_2;
            vec![
                (1.0 + s3) / norm,
                (3.0 + s3) / norm,
                (3.0 - s3) / norm,
                (1.0 - s3) / norm,
            ]
        }
    };
    // Quadrature mirror: h[j] = (-1)^j l[len - 1 - j]
    let len = low.len();
    let high = (0..len)
        .map(|j| {
            let v = low[len - 1 - j];
            if j % 2 == 0 {
                v
            } else {
                -v
            }
        })
        .collect();
    FilterBank { family, low, high }
}

impl FilterBank {
    pub fn family(&self) -> Family {
        self.family
    }

    pub fn low(&self) -> &[f64] {
        &self.low
    }

    pub fn high(&self) -> &[f64] {
        &self.high
    }

    pub fn taps(&self) -> usize {
        self.low.len()
    }

    fn check_len(&self, n: usize) -> Result<()> {
        if n == 0 || !n.is_multiple_of(2) {
            return Err(Error::Shape(format!(
                "signal length {n} must be even and positive"
            )));
        }
        if n < self.taps() {
            return Err(Error::Shape(format!(
                "signal length {n} shorter than {} filter ({} taps)",
                self.family,
                self.taps()
            )));
        }
        Ok(())
    }
}

/// Dense analysis matrices `L`, `H`, each of shape `(n/2, n)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisOperators {
    pub low: Array2<f64>,
    pub high: Array2<f64>,
}

impl AnalysisOperators {
    pub fn n(&self) -> usize {
        self.low.ncols()
    }
}

/// Materialize `L` and `H` for signals of length `n`: row `k` holds the
/// filter taps at columns `(2k + m) mod n`.
pub fn analysis_operators(fb: &FilterBank, n: usize) -> Result<AnalysisOperators> {
    fb.check_len(n)?;
    let half = n / 2;
    let mut low = Array2::zeros((half, n));
    let mut high = Array2::zeros((half, n));
    for k in 0..half {
        for m in 0..fb.taps() {
            let j = (2 * k + m) % n;
            low[[k, j]] += fb.low[m];
            high[[k, j]] += fb.high[m];
        }
    }
    Ok(AnalysisOperators { low, high })
}

/// Low and high bands of a 1D transform.
#[derive(Debug, Clone, PartialEq)]
pub struct Subbands1D {
    pub low: Vec<f64>,
    pub high: Vec<f64>,
}

/// Single-level analysis into `(low, high)`, each of length `x.len() / 2`.
pub fn dwt1d(fb: &FilterBank, x: &[f64]) -> Result<Subbands1D> {
    let n = x.len();
    fb.check_len(n)?;
    let mut low = vec![0.0; n / 2];
    let mut high = vec![0.0; n / 2];
    analyze_into(fb, x, &mut low, &mut high);
    Ok(Subbands1D { low, high })
}

/// Single-level synthesis; the inverse of [`dwt1d`].
pub fn idwt1d(fb: &FilterBank, sb: &Subbands1D) -> Result<Vec<f64>> {
    if sb.low.len() != sb.high.len() {
        return Err(Error::Shape(format!(
            "band lengths differ: low {} vs high {}",
            sb.low.len(),
            sb.high.len()
        )));
    }
    let n = 2 * sb.low.len();
    fb.check_len(n)?;
    let mut out = vec![0.0; n];
    synthesize_into(fb, &sb.low, &sb.high, &mut out);
    Ok(out)
}

/// Unchecked kernel: `low`/`high` must have length `x.len() / 2`.
pub(crate) fn analyze_into(fb: &FilterBank, x: &[f64], low: &mut [f64], high: &mut [f64]) {
    let n = x.len();
    for k in 0..n / 2 {
        let mut lo = 0.0;
        let mut hi = 0.0;
        for (m, (&lm, &hm)) in fb.low.iter().zip(&fb.high).enumerate() {
            let v = x[(2 * k + m) % n];
            lo += lm * v;
            hi += hm * v;
        }
        low[k] = lo;
        high[k] = hi;
    }
}

/// Unchecked kernel: `out` must have length `2 * low.len()`. Overwrites `out`.
pub(crate) fn synthesize_into(fb: &FilterBank, low: &[f64], high: &[f64], out: &mut [f64]) {
    let n = out.len();
    out.iter_mut().for_each(|v| *v = 0.0);
    for (k, (&lo, &hi)) in low.iter().zip(high).enumerate() {
        for (m, (&lm, &hm)) in fb.low.iter().zip(&fb.high).enumerate() {
            out[(2 * k + m) % n] += lm * lo + hm * hi;
        }
    }
}

/// The four subbands of a 2D transform, named row-filter first:
/// `lh = H X Lᵀ` is high-pass down the columns and low-pass along rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Subbands2D {
    pub ll: Array2<f64>,
    pub lh: Array2<f64>,
    pub hl: Array2<f64>,
    pub hh: Array2<f64>,
}

/// Separable single-level 2D analysis:
/// `ll = L X Lᵀ`, `lh = H X Lᵀ`, `hl = L X Hᵀ`, `hh = H X Hᵀ`.
pub fn dwt2d(fb: &FilterBank, x: ArrayView2<f64>) -> Result<Subbands2D> {
    let (rows, cols) = x.dim();
    fb.check_len(rows)?;
    fb.check_len(cols)?;
    let (hr, hc) = (rows / 2, cols / 2);

    // Along each row: X Lᵀ and X Hᵀ, shape (rows, cols/2).
    let mut xl = Array2::zeros((rows, hc));
    let mut xh = Array2::zeros((rows, hc));
    let mut lo = vec![0.0; hc];
    let mut hi = vec![0.0; hc];
    for (r, row) in x.rows().into_iter().enumerate() {
        let row: Vec<f64> = row.to_vec();
        analyze_into(fb, &row, &mut lo, &mut hi);
        xl.row_mut(r).assign(&ndarray::aview1(&lo));
        xh.row_mut(r).assign(&ndarray::aview1(&hi));
    }

    // Down each column.
    let columns = |m: &Array2<f64>| -> (Array2<f64>, Array2<f64>) {
        let mut a = Array2::zeros((hr, hc));
        let mut b = Array2::zeros((hr, hc));
        let mut lo = vec![0.0; hr];
        let mut hi = vec![0.0; hr];
        for (c, col) in m.columns().into_iter().enumerate() {
            let col: Vec<f64> = col.to_vec();
            analyze_into(fb, &col, &mut lo, &mut hi);
            a.column_mut(c).assign(&ndarray::aview1(&lo));
            b.column_mut(c).assign(&ndarray::aview1(&hi));
        }
        (a, b)
    };
    let (ll, lh) = columns(&xl);
    let (hl, hh) = columns(&xh);
    Ok(Subbands2D { ll, lh, hl, hh })
}

/// Inverse of [`dwt2d`]:
/// `X = Lᵀ ll L + Hᵀ lh L + Lᵀ hl H + Hᵀ hh H`.
pub fn idwt2d(fb: &FilterBank, sb: &Subbands2D) -> Result<Array2<f64>> {
    let shape = sb.ll.dim();
    for (name, band) in [("lh", &sb.lh), ("hl", &sb.hl), ("hh", &sb.hh)] {
        if band.dim() != shape {
            return Err(Error::Shape(format!(
                "subband {name} has shape {:?}, ll has {:?}",
                band.dim(),
                shape
            )));
        }
    }
    let (hr, hc) = shape;
    let (rows, cols) = (2 * hr, 2 * hc);
    fb.check_len(rows)?;
    fb.check_len(cols)?;

    let columns = |a: &Array2<f64>, b: &Array2<f64>| -> Array2<f64> {
        let mut out = Array2::zeros((rows, hc));
        let mut buf = vec![0.0; rows];
        for c in 0..hc {
            let lo: Vec<f64> = a.column(c).to_vec();
            let hi: Vec<f64> = b.column(c).to_vec();
            synthesize_into(fb, &lo, &hi, &mut buf);
            out.column_mut(c).assign(&ndarray::aview1(&buf));
        }
        out
    };
    let xl = columns(&sb.ll, &sb.lh);
    let xh = columns(&sb.hl, &sb.hh);

    let mut out = Array2::zeros((rows, cols));
    let mut buf = vec![0.0; cols];
    for r in 0..rows {
        let lo: Vec<f64> = xl.row(r).to_vec();
        let hi: Vec<f64> = xh.row(r).to_vec();
        synthesize_into(fb, &lo, &hi, &mut buf);
        out.row_mut(r).assign(&ndarray::aview1(&buf));
    }
    Ok(out)
}
