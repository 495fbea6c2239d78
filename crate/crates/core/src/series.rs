//! Multivariate series with a missingness mask.
//!
//! Values are stored column-per-time-step (`dim x T`). The flat coordinate of
//! entry `(d, t)` is `t * dim + d`, which matches stacking the columns
//! `X = (X_1', ..., X_T')'`.

use nalgebra::DMatrix;

use crate::error::{FemmError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    values: DMatrix<f64>,
    /// `true` marks a missing entry.
    mask: DMatrix<bool>,
}

impl Series {
    pub fn new(values: DMatrix<f64>, mask: DMatrix<bool>) -> Result<Self> {
        if values.shape() != mask.shape() {
            return Err(FemmError::Dimension(format!(
                "values {:?} and mask {:?} differ in shape",
                values.shape(),
                mask.shape()
            )));
        }
        if values.nrows() == 0 || values.ncols() == 0 {
            return Err(FemmError::Dimension("series must be non-empty".into()));
        }
        for (v, m) in values.iter().zip(mask.iter()) {
            if !m && !v.is_finite() {
                return Err(FemmError::Parse(
                    "observed entry is not a finite number".into(),
                ));
            }
        }
        Ok(Self { values, mask })
    }

    /// A series without missing entries.
    pub fn complete(values: DMatrix<f64>) -> Self {
        let mask = DMatrix::from_element(values.nrows(), values.ncols(), false);
        Self { values, mask }
    }

    /// Treats every NaN entry as missing.
    pub fn from_nan(values: DMatrix<f64>) -> Self {
        let mask = values.map(|v| v.is_nan());
        Self { values, mask }
    }

    pub fn dim(&self) -> usize {
        self.values.nrows()
    }

    pub fn len(&self) -> usize {
        self.values.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn mask(&self) -> &DMatrix<bool> {
        &self.mask
    }

    pub fn is_missing(&self, d: usize, t: usize) -> bool {
        self.mask[(d, t)]
    }

    pub fn missing_count(&self) -> usize {
        self.mask.iter().filter(|m| **m).count()
    }

    pub fn has_missing(&self) -> bool {
        self.mask.iter().any(|m| *m)
    }

    /// Copy of the values with missing entries replaced by NaN.
    pub fn values_with_nan(&self) -> DMatrix<f64> {
        let mut out = self.values.clone();
        for (v, m) in out.iter_mut().zip(self.mask.iter()) {
            if *m {
                *v = f64::NAN;
            }
        }
        out
    }

    /// Writes `filled` into the missing positions, leaving observed entries untouched.
    pub fn merge_missing(&self, filled: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if filled.shape() != self.values.shape() {
            return Err(FemmError::Dimension("filled buffer shape differs".into()));
        }
        let mut out = self.values.clone();
        for ((o, f), m) in out.iter_mut().zip(filled.iter()).zip(self.mask.iter()) {
            if *m {
                *o = *f;
            }
        }
        Ok(out)
    }

    /// Per-dimension linear interpolation of the missing entries, with the
    /// nearest observed value carried outwards at both edges.
    pub fn interpolate(&self) -> Result<DMatrix<f64>> {
        let (dim, len) = self.values.shape();
        let mut out = self.values.clone();
        for d in 0..dim {
            let observed: Vec<usize> = (0..len).filter(|&t| !self.mask[(d, t)]).collect();
            let (&first, &last) = match (observed.first(), observed.last()) {
                (Some(f), Some(l)) => (f, l),
                _ => return Err(FemmError::FullyMissing { dim: d }),
            };
            for t in 0..first {
                out[(d, t)] = self.values[(d, first)];
            }
            for t in last + 1..len {
                out[(d, t)] = self.values[(d, last)];
            }
            for pair in observed.windows(2) {
                let (a, b) = (pair[0], pair[1]);
                if b - a < 2 {
                    continue;
                }
                let (va, vb) = (self.values[(d, a)], self.values[(d, b)]);
                let span = (b - a) as f64;
                for t in a + 1..b {
                    let w = (t - a) as f64 / span;
                    out[(d, t)] = va + w * (vb - va);
                }
            }
        }
        Ok(out)
    }
}
