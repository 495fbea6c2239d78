//! Switching-weight update: minimize the weighted model distance over the
//! weights subject to per-step simplex constraints and a bound on the total
//! variation of each weight trajectory.
//!
//! The absolute differences are linearized with `Δγ = p - m`, `p, m >= 0`,
//! and a slack `v_k` closes each budget row, giving the standard-form program
//!
//! ```text
//! min  sum d_{k,t} γ_{k,t}
//! s.t. sum_k γ_{k,t} = 1                     (every t)
//!      γ_{k,t+1} - γ_{k,t} - p_{k,t} + m_{k,t} = 0
//!      sum_t (p_{k,t} + m_{k,t}) + v_k = C   (every k)
//! ```
//!
//! Rows are ordered by time, so all but the `K` budget rows form a band.

use nalgebra::{DMatrix, DVector};

use crate::error::{FemmError, Result};
use crate::lp::{solve_lp, LpOptions, StandardLp};
use crate::model::{ModelSet, SwitchingWeights};

/// Entry `(k, j)` is the squared residual of model `k` at step `mem + j`.
pub fn distance_matrix(models: &ModelSet, x: &DMatrix<f64>, u: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if x.nrows() != models.dimx() || u.nrows() != models.dimu() {
        return Err(FemmError::Dimension("series dimensions do not match the model set".into()));
    }
    if x.ncols() != u.ncols() {
        return Err(FemmError::Dimension("series lengths differ".into()));
    }
    let mem = models.mem();
    if x.ncols() <= mem {
        return Err(FemmError::Dimension(format!(
            "series of length {} is too short for memory {mem}",
            x.ncols()
        )));
    }
    let n = x.ncols() - mem;
    let mut d = DMatrix::zeros(models.k(), n);
    for j in 0..n {
        let t = mem + j;
        for (k, m) in models.models().iter().enumerate() {
            d[(k, j)] = (x.column(t) - m.predict(x, u, t)).norm_squared();
        }
    }
    Ok(d)
}

fn argmin(v: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::INFINITY);
    for (i, x) in v.enumerate() {
        if x < best.1 {
            best = (i, x);
        }
    }
    best.0
}

fn build_lp(d: &DMatrix<f64>, bound: f64, scale: f64) -> StandardLp {
    let (k, n) = d.shape();
    let nd = n - 1;
    let block = k + 1;
    let simplex_row = |t: usize| t * block;
    let diff_row = |kk: usize, t: usize| t * block + 1 + kk;
    let n_band = n * block - k;
    let budget_row = |kk: usize| n_band + kk;

    let n_vars = k * n + 2 * k * nd + k;
    let mut columns = Vec::with_capacity(n_vars);
    let mut c = DVector::zeros(n_vars);
    for t in 0..n {
        for kk in 0..k {
            let mut col = Vec::with_capacity(3);
            if t > 0 {
                col.push((diff_row(kk, t - 1), 1.0));
            }
            col.push((simplex_row(t), 1.0));
            if t < nd {
                col.push((diff_row(kk, t), -1.0));
            }
            c[columns.len()] = d[(kk, t)] / scale;
            columns.push(col);
        }
    }
    for sign in [-1.0, 1.0] {
        for t in 0..nd {
            for kk in 0..k {
                columns.push(vec![(diff_row(kk, t), sign), (budget_row(kk), 1.0)]);
            }
        }
    }
    for kk in 0..k {
        columns.push(vec![(budget_row(kk), 1.0)]);
    }
    let mut b = DVector::zeros(n_band + k);
    for t in 0..n {
        b[simplex_row(t)] = 1.0;
    }
    for kk in 0..k {
        b[budget_row(kk)] = bound;
    }
    StandardLp {
        columns,
        b,
        c,
        n_band,
    }
}

/// Clips to the simplex, then blends towards the time-mean column until
/// every total variation is within `bound`.
fn project_feasible(w: &mut DMatrix<f64>, bound: f64) {
    for mut col in w.column_iter_mut() {
        col.apply(|v| *v = v.max(0.0));
        let s = col.sum();
        if s > 0.0 {
            col /= s;
        } else {
            col.fill(1.0 / col.len() as f64);
        }
    }
    let n = w.ncols();
    let mut alpha: f64 = 0.0;
    for row in w.row_iter() {
        let bv: f64 = (0..n - 1).map(|t| (row[t + 1] - row[t]).abs()).sum();
        if bv > bound {
            alpha = alpha.max(1.0 - bound / bv);
        }
    }
    if alpha > 0.0 {
        let mean = w.column_mean();
        for mut col in w.column_iter_mut() {
            col.axpy(alpha, &mean, 1.0 - alpha);
        }
    }
}

/// Minimizes `sum d_{k,t} γ_{k,t}` over weights on the simplex whose
/// trajectories have total variation at most `bound`.
///
/// `distances` is `K x n`; the returned weights cover the same `n` steps.
pub fn solve_gamma(distances: &DMatrix<f64>, bound: f64) -> Result<SwitchingWeights> {
    let (k, n) = distances.shape();
    if k == 0 || n == 0 {
        return Err(FemmError::Dimension("empty distance matrix".into()));
    }
    if distances.iter().any(|v| !v.is_finite()) {
        return Err(FemmError::Dimension("distances must be finite".into()));
    }
    if !(bound >= 0.0) {
        return Err(FemmError::Config(format!("BV bound must be nonnegative, got {bound}")));
    }
    let scale = distances.amax();
    if k == 1 || scale == 0.0 {
        return Ok(SwitchingWeights::constant(k, n));
    }
    if bound == 0.0 {
        let best = argmin(distances.row_iter().map(|r| r.sum()));
        return SwitchingWeights::from_labels(&vec![best; n], k);
    }
    if bound >= (n - 1) as f64 {
        let labels: Vec<usize> = distances
            .column_iter()
            .map(|c| argmin(c.iter().copied()))
            .collect();
        return SwitchingWeights::from_labels(&labels, k);
    }

    let lp = build_lp(distances, bound, scale);
    let sol = solve_lp(&lp, &LpOptions::default())?;
    let mut w = DMatrix::from_column_slice(k, n, &sol.x.as_slice()[..k * n]);
    project_feasible(&mut w, bound);
    Ok(SwitchingWeights::from_raw(w))
}

/// Extends weights over steps `mem..T` to all `T` steps by copying the first
/// column into the leading `mem` columns.
pub fn extend_to_series(weights: &SwitchingWeights, mem: usize) -> SwitchingWeights {
    let (k, n) = (weights.k(), weights.len());
    let src = weights.weights();
    let w = DMatrix::from_fn(k, n + mem, |r, c| src[(r, c.saturating_sub(mem))]);
    SwitchingWeights::from_raw(w)
}

/// Weighted total of `distances` under `weights` (same `K x n` shape).
pub fn lp_objective(distances: &DMatrix<f64>, weights: &SwitchingWeights) -> f64 {
    distances.component_mul(weights.weights()).sum()
}
