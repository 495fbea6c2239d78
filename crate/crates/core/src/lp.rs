//! Primal-dual interior-point solver for standard-form linear programs
//! `min c'x  s.t.  A x = b, x >= 0` whose constraint rows split into a
//! banded leading block and a few dense trailing rows.
//!
//! The normal matrix `A D A'` then has a banded leading block and a dense
//! border; it is factored by a banded Cholesky plus a Schur complement on
//! the border.

use nalgebra::{DMatrix, DVector};

use crate::banded::{BandedCholesky, BandedSym};
use crate::error::{FemmError, Result};

/// Sparse standard-form program stored by columns.
#[derive(Debug, Clone)]
pub struct StandardLp {
    /// Nonzeros `(row, value)` of each column of `A`.
    pub columns: Vec<Vec<(usize, f64)>>,
    pub b: DVector<f64>,
    pub c: DVector<f64>,
    /// Rows `0..n_band` form the banded block; the rest are border rows.
    pub n_band: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct LpOptions {
    pub tol: f64,
    /// Looser tolerance accepted for the best iterate when progress stalls.
    pub acceptable_tol: f64,
    pub max_iterations: usize,
}

impl Default for LpOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            acceptable_tol: 1e-8,
            max_iterations: 100,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub x: DVector<f64>,
    pub y: DVector<f64>,
    pub s: DVector<f64>,
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub gap: f64,
}

impl LpSolution {
    fn worst(&self) -> f64 {
        self.primal_residual.max(self.dual_residual).max(self.gap)
    }
}

impl StandardLp {
    pub fn n_rows(&self) -> usize {
        self.b.len()
    }

    pub fn n_vars(&self) -> usize {
        self.columns.len()
    }

    fn check(&self) -> Result<usize> {
        let m = self.n_rows();
        if self.c.len() != self.n_vars() {
            return Err(FemmError::Dimension("cost length differs from column count".into()));
        }
        if self.n_band > m {
            return Err(FemmError::Dimension("band block larger than row count".into()));
        }
        let mut bw = 0;
        for col in &self.columns {
            let mut lo = usize::MAX;
            let mut hi = 0;
            for &(r, _) in col {
                if r >= m {
                    return Err(FemmError::Dimension(format!("row {r} out of range")));
                }
                if r < self.n_band {
                    lo = lo.min(r);
                    hi = hi.max(r);
                }
            }
            if lo <= hi {
                bw = bw.max(hi - lo);
            }
        }
        Ok(bw)
    }

    fn mul(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.n_rows());
        for (col, &xj) in self.columns.iter().zip(x.iter()) {
            if xj != 0.0 {
                for &(r, a) in col {
                    out[r] += a * xj;
                }
            }
        }
        out
    }

    fn mul_tr(&self, y: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(
            self.n_vars(),
            self.columns
                .iter()
                .map(|col| col.iter().map(|&(r, a)| a * y[r]).sum::<f64>()),
        )
    }
}

/// Factorization of `A D A'` in bordered-banded form.
struct NormalFactor {
    band: BandedCholesky,
    /// `M11^{-1} M12`, one column per border row.
    w: DMatrix<f64>,
    /// Cholesky factor of the Schur complement, or `None` without a border.
    schur: Option<nalgebra::Cholesky<f64, nalgebra::Dyn>>,
    m12: DMatrix<f64>,
}

impl NormalFactor {
    fn new(lp: &StandardLp, bw: usize, d: &DVector<f64>) -> Self {
        let nb = lp.n_band;
        let nk = lp.n_rows() - nb;
        let mut m11 = BandedSym::zeros(nb, bw);
        let mut m12 = DMatrix::zeros(nb, nk);
        let mut m22 = DMatrix::zeros(nk, nk);
        for (col, &dj) in lp.columns.iter().zip(d.iter()) {
            for (i, &(ri, ai)) in col.iter().enumerate() {
                for &(rj, aj) in &col[..=i] {
                    let v = dj * ai * aj;
                    let (hi, lo) = if ri >= rj { (ri, rj) } else { (rj, ri) };
                    if hi < nb {
                        m11.add(hi, lo, v);
                    } else if lo < nb {
                        m12[(lo, hi - nb)] += v;
                    } else {
                        m22[(hi - nb, lo - nb)] += v;
                        if hi != lo {
                            m22[(lo - nb, hi - nb)] += v;
                        }
                    }
                }
            }
        }
        let scale = m11.max_abs().max(m22.amax()).max(1.0);
        let band = m11.cholesky_with_floor(1e-30 * scale);
        let mut w = DMatrix::zeros(nb, nk);
        for j in 0..nk {
            let col = band.solve(&m12.column(j).into_owned());
            w.set_column(j, &col);
        }
        let schur = if nk > 0 {
            let mut s = m22 - m12.transpose() * &w;
            s = (&s + s.transpose()) * 0.5;
            let mut shift = 0.0;
            loop {
                let mut t = s.clone();
                for i in 0..nk {
                    t[(i, i)] += shift;
                }
                if let Some(ch) = t.cholesky() {
                    break Some(ch);
                }
                shift = if shift == 0.0 { 1e-14 * scale } else { shift * 100.0 };
            }
        } else {
            None
        };
        Self { band, w, schur, m12 }
    }

    fn solve(&self, r: &DVector<f64>) -> DVector<f64> {
        let nb = self.w.nrows();
        let r1 = r.rows(0, nb).into_owned();
        let mut out = DVector::zeros(r.len());
        match &self.schur {
            None => out.copy_from(&self.band.solve(&r1)),
            Some(ch) => {
                let r2 = r.rows(nb, r.len() - nb).into_owned();
                let y2 = ch.solve(&(r2 - self.w.transpose() * &r1));
                let y1 = self.band.solve(&(r1 - &self.m12 * &y2));
                out.rows_mut(0, nb).copy_from(&y1);
                out.rows_mut(nb, y2.len()).copy_from(&y2);
            }
        }
        out
    }
}

fn max_step(v: &DVector<f64>, dv: &DVector<f64>) -> f64 {
    v.iter()
        .zip(dv.iter())
        .filter(|(_, d)| **d < 0.0)
        .fold(1.0_f64, |a, (x, d)| a.min(-x / d))
}

/// Mehrotra predictor-corrector. Returns an error when the tolerances are
/// not met within the iteration budget.
pub fn solve_lp(lp: &StandardLp, opts: &LpOptions) -> Result<LpSolution> {
    let bw = lp.check()?;
    let n = lp.n_vars();
    let bnorm = 1.0 + lp.b.amax();
    let cnorm = 1.0 + lp.c.amax();

    // starting point from the least-norm solutions of A x = b and A'y ≈ c
    let ones = DVector::from_element(n, 1.0);
    let f0 = NormalFactor::new(lp, bw, &ones);
    let mut x = lp.mul_tr(&f0.solve(&lp.b));
    let mut y = f0.solve(&lp.mul(&lp.c));
    let mut s = &lp.c - lp.mul_tr(&y);
    let dx = (-1.5 * x.min()).max(0.0);
    let ds = (-1.5 * s.min()).max(0.0);
    x.add_scalar_mut(dx);
    s.add_scalar_mut(ds);
    let xs = x.dot(&s);
    let dx2 = 0.5 * xs / s.sum().max(1e-300);
    let ds2 = 0.5 * xs / x.sum().max(1e-300);
    x.add_scalar_mut(dx2.max(1e-8));
    s.add_scalar_mut(ds2.max(1e-8));

    let mut best: Option<LpSolution> = None;
    let mut last = (f64::INFINITY, f64::INFINITY, f64::INFINITY);
    for iter in 0..=opts.max_iterations {
        let rb = lp.mul(&x) - &lp.b;
        let rc = lp.mul_tr(&y) + &s - &lp.c;
        let pres = rb.amax() / bnorm;
        let dres = rc.amax() / cnorm;
        let gap = x.dot(&s) / (1.0 + lp.c.dot(&x).abs());
        last = (pres, dres, gap);
        let worst = pres.max(dres).max(gap);
        if best.as_ref().is_none_or(|b| worst < b.worst()) {
            best = Some(LpSolution {
                x: x.clone(),
                y: y.clone(),
                s: s.clone(),
                iterations: iter,
                primal_residual: pres,
                dual_residual: dres,
                gap,
            });
        }
        if worst <= opts.tol || iter == opts.max_iterations || !worst.is_finite() {
            break;
        }
        // stalled: residuals no longer shrink once the iterate sits on the boundary
        if let Some(b) = &best {
            if iter >= b.iterations + 5 && b.worst() <= opts.acceptable_tol {
                break;
            }
        }

        let d = x.component_div(&s);
        let factor = NormalFactor::new(lp, bw, &d);
        let mu = x.dot(&s) / n as f64;

        let direction = |rxs: &DVector<f64>| {
            // A D A' dy = -rb + A (S^{-1} rxs - D rc)
            let t = rxs.component_div(&s) - d.component_mul(&rc);
            let dy = factor.solve(&(lp.mul(&t) - &rb));
            let ds = -&rc - lp.mul_tr(&dy);
            let dx = -rxs.component_div(&s) - d.component_mul(&ds);
            (dx, dy, ds)
        };

        let rxs = x.component_mul(&s);
        let (dxa, _, dsa) = direction(&rxs);
        let ap = max_step(&x, &dxa);
        let ad = max_step(&s, &dsa);
        let mu_aff = (&x + ap * &dxa).dot(&(&s + ad * &dsa)) / n as f64;
        let sigma = (mu_aff / mu).powi(3).clamp(0.0, 1.0);

        let rxs = rxs + dxa.component_mul(&dsa) - DVector::from_element(n, sigma * mu);
        let (dx, dy, ds) = direction(&rxs);
        let ap = (0.995 * max_step(&x, &dx)).min(1.0);
        let ad = (0.995 * max_step(&s, &ds)).min(1.0);
        x.axpy(ap, &dx, 1.0);
        y.axpy(ad, &dy, 1.0);
        s.axpy(ad, &ds, 1.0);
    }
    if let Some(b) = best {
        if b.worst() <= opts.acceptable_tol {
            return Ok(b);
        }
    }
    Err(FemmError::LpFailure {
        iterations: opts.max_iterations,
        primal_residual: last.0,
        dual_residual: last.1,
        gap: last.2,
    })
}
