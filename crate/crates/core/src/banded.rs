//! Symmetric banded storage and its Cholesky factorization.

use nalgebra::{DMatrix, DVector};

/// Symmetric `n x n` matrix with `bw` sub-diagonals; only the lower band is stored.
#[derive(Debug, Clone, PartialEq)]
pub struct BandedSym {
    n: usize,
    bw: usize,
    // row-major lower band: entry (i, j) with j <= i lives at i * (bw + 1) + (i - j)
    data: Vec<f64>,
}

impl BandedSym {
    pub fn zeros(n: usize, bw: usize) -> Self {
        let bw = bw.min(n.saturating_sub(1));
        Self {
            n,
            bw,
            data: vec![0.0; n * (bw + 1)],
        }
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.bw
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> Option<usize> {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        if i - j > self.bw {
            None
        } else {
            Some(i * (self.bw + 1) + (i - j))
        }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.idx(i, j).map_or(0.0, |k| self.data[k])
    }

    /// Adds `v` to entry `(i, j)` (and, implicitly, `(j, i)`).
    ///
    /// Panics if the entry lies outside the band.
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let k = self
            .idx(i, j)
            .unwrap_or_else(|| panic!("entry ({i}, {j}) outside bandwidth {}", self.bw));
        self.data[k] += v;
    }

    /// Adds the dense symmetric block `block` with its top-left corner at `(offset, offset)`.
    pub fn add_block(&mut self, offset: usize, block: &DMatrix<f64>, scale: f64) {
        for j in 0..block.ncols() {
            for i in j..block.nrows() {
                self.add(offset + i, offset + j, scale * block[(i, j)]);
            }
        }
    }

    pub fn add_diagonal(&mut self, v: f64) {
        for i in 0..self.n {
            self.data[i * (self.bw + 1)] += v;
        }
    }

    pub fn diagonal(&self) -> DVector<f64> {
        DVector::from_fn(self.n, |i, _| self.data[i * (self.bw + 1)])
    }

    pub fn mul_vec(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut y = DVector::zeros(self.n);
        for i in 0..self.n {
            let row = &self.data[i * (self.bw + 1)..(i + 1) * (self.bw + 1)];
            y[i] += row[0] * x[i];
            for (d, &a) in row.iter().enumerate().skip(1) {
                if d > i {
                    break;
                }
                if a != 0.0 {
                    let j = i - d;
                    y[i] += a * x[j];
                    y[j] += a * x[i];
                }
            }
        }
        y
    }

    /// `x' A x`.
    pub fn quad_form(&self, x: &DVector<f64>) -> f64 {
        x.dot(&self.mul_vec(x))
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n, self.n, |i, j| self.get(i, j))
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// Principal submatrix on the sorted index list `idx`.
    pub fn principal_submatrix(&self, idx: &[usize]) -> BandedSym {
        let m = idx.len();
        // reduced bandwidth: furthest reduced column still inside the original band
        let mut bw = 0;
        let mut lo = 0;
        for (i, &oi) in idx.iter().enumerate() {
            while oi - idx[lo] > self.bw {
                lo += 1;
            }
            bw = bw.max(i - lo);
        }
        let mut out = BandedSym::zeros(m, bw);
        let mut lo = 0;
        for (i, &oi) in idx.iter().enumerate() {
            while oi - idx[lo] > self.bw {
                lo += 1;
            }
            for (j, &oj) in idx.iter().enumerate().take(i + 1).skip(lo) {
                let v = self.get(oi, oj);
                if v != 0.0 {
                    out.add(i, j, v);
                }
            }
        }
        out
    }

    /// Lower Cholesky factor, or `None` when a pivot is not strictly positive.
    pub fn cholesky(&self) -> Option<BandedCholesky> {
        self.factor(None)
    }

    /// Cholesky factor in which every pivot below `floor` is replaced by a
    /// huge value, which effectively zeroes the corresponding solution
    /// component. Used for the nearly singular systems of interior-point
    /// iterations.
    pub fn cholesky_with_floor(&self, floor: f64) -> BandedCholesky {
        self.factor(Some(floor))
            .expect("floored factorization never rejects a pivot")
    }

    fn factor(&self, floor: Option<f64>) -> Option<BandedCholesky> {
        let (n, bw) = (self.n, self.bw);
        let w = bw + 1;
        let mut l = self.data.clone();
        for i in 0..n {
            let jlo = i.saturating_sub(bw);
            for j in jlo..=i {
                // L[i][j] = (A[i][j] - sum_k L[i][k] L[j][k]) / L[j][j]
                let klo = jlo.max(j.saturating_sub(bw));
                let mut s = l[i * w + (i - j)];
                for k in klo..j {
                    s -= l[i * w + (i - k)] * l[j * w + (j - k)];
                }
                if i == j {
                    match floor {
                        Some(f) if !(s > f) || !s.is_finite() => {
                            l[i * w] = 1e64;
                            continue;
                        }
                        None if !(s > 0.0) || !s.is_finite() => return None,
                        _ => {}
                    }
                    l[i * w] = s.sqrt();
                } else {
                    l[i * w + (i - j)] = s / l[j * w];
                }
            }
        }
        Some(BandedCholesky { n, bw, l })
    }
}

/// `A = L L'` with `L` lower banded.
#[derive(Debug, Clone)]
pub struct BandedCholesky {
    n: usize,
    bw: usize,
    l: Vec<f64>,
}

impl BandedCholesky {
    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        let (n, bw, w) = (self.n, self.bw, self.bw + 1);
        let mut y = b.clone();
        for i in 0..n {
            let mut s = y[i];
            for k in i.saturating_sub(bw)..i {
                s -= self.l[i * w + (i - k)] * y[k];
            }
            y[i] = s / self.l[i * w];
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in i + 1..(i + bw + 1).min(n) {
                s -= self.l[k * w + (k - i)] * y[k];
            }
            y[i] = s / self.l[i * w];
        }
        y
    }

    /// Smallest and largest squared pivot, a cheap conditioning hint.
    pub fn pivot_range(&self) -> (f64, f64) {
        let w = self.bw + 1;
        (0..self.n).fold((f64::INFINITY, 0.0_f64), |(lo, hi), i| {
            let p = self.l[i * w] * self.l[i * w];
            (lo.min(p), hi.max(p))
        })
    }
}

/// Estimates the 2-norm condition number of the SPD matrix `a` from a few
/// rounds of power iteration on `a` and inverse iteration through `chol`.
pub fn condition_estimate(a: &BandedSym, chol: &BandedCholesky, iterations: usize) -> f64 {
    let n = a.size();
    if n == 0 {
        return 1.0;
    }
    let start = DVector::from_fn(n, |i, _| 1.0 + 0.1 * ((i * 7919 % 13) as f64));
    let mut v = start.normalize();
    let mut lmax = 0.0;
    for _ in 0..iterations {
        let w = a.mul_vec(&v);
        let nw = w.norm();
        if nw == 0.0 {
            return f64::INFINITY;
        }
        lmax = nw;
        v = w / nw;
    }
    let mut v = start.normalize();
    let mut inv_lmin = 0.0;
    for _ in 0..iterations {
        let w = chol.solve(&v);
        let nw = w.norm();
        if !nw.is_finite() {
            return f64::INFINITY;
        }
        inv_lmin = nw;
        v = w / nw;
    }
    lmax * inv_lmin
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn random_spd(n: usize, bw: usize, seed: u64) -> BandedSym {
        let mut s = seed;
        let mut next = || {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((s >> 33) as f64 / (1u64 << 31) as f64) - 0.5
        };
        let mut a = BandedSym::zeros(n, bw);
        for i in 0..n {
            for j in i.saturating_sub(bw)..i {
                a.add(i, j, next());
            }
            a.add(i, i, 2.0 * bw as f64 + 1.0);
        }
        a
    }

    #[test]
    fn matches_dense_cholesky_solve() {
        let a = random_spd(30, 4, 3);
        let b = DVector::from_fn(30, |i, _| (i as f64).sin());
        let x = a.cholesky().unwrap().solve(&b);
        let dense = a.to_dense().cholesky().unwrap().solve(&b);
        for i in 0..30 {
            assert_relative_eq!(x[i], dense[i], epsilon = 1e-12);
        }
    }

    #[test]
    fn mul_vec_matches_dense() {
        let a = random_spd(12, 3, 9);
        let x = DVector::from_fn(12, |i, _| i as f64 - 4.0);
        let y = a.mul_vec(&x);
        let yd = a.to_dense() * &x;
        assert_relative_eq!((y - yd).norm(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn submatrix_matches_dense_slice() {
        let a = random_spd(20, 3, 5);
        let idx = vec![0, 2, 3, 7, 8, 9, 15, 19];
        let sub = a.principal_submatrix(&idx);
        let dense = a.to_dense();
        for (i, &oi) in idx.iter().enumerate() {
            for (j, &oj) in idx.iter().enumerate() {
                assert_eq!(sub.get(i, j), dense[(oi, oj)]);
            }
        }
        assert!(sub.bandwidth() <= 3);
    }

    #[test]
    fn indefinite_matrix_has_no_factor() {
        let mut a = BandedSym::zeros(2, 1);
        a.add(0, 0, 1.0);
        a.add(1, 1, 1.0);
        a.add(1, 0, 2.0);
        assert!(a.cholesky().is_none());
    }

    #[test]
    fn condition_of_diagonal() {
        let mut a = BandedSym::zeros(3, 0);
        a.add(0, 0, 1.0);
        a.add(1, 1, 10.0);
        a.add(2, 2, 100.0);
        let c = condition_estimate(&a, &a.cholesky().unwrap(), 200);
        assert_relative_eq!(c, 100.0, max_relative = 1e-6);
    }
}
