//! The objective as a quadratic program in the stacked covariates
//! `U = (U_1', .., U_T')'`.
//!
//! With `B̂_k = [B_{k,P}, .., B_{k,0}]` and `Û_t = (U_{t-P}', .., U_t')'` the
//! weighted distance at step `t` is `Û_t' D_t Û_t + G_t' Û_t + const` where
//! `D_t = sum_k γ_k B̂_k' B̂_k` and `G_t = -2 sum_k γ_k B̂_k' e_k` with
//! `e_k = X_t - c_k - sum_q A_{k,q} X_{t-q}`.

use nalgebra::{DMatrix, DVector};

use crate::error::{FemmError, Result};
use crate::model::{LocalModel, ModelSet, SwitchingWeights};
use crate::qp::AssembledQp;

/// `B̂ = [B_P, .., B_0]`.
pub fn stacked_controls(model: &LocalModel) -> DMatrix<f64> {
    let (dx, du, p) = (model.dimx(), model.dimu(), model.p());
    let mut b = DMatrix::zeros(dx, du * (p + 1));
    for (slot, lag) in (0..=p).rev().enumerate() {
        b.view_mut((0, slot * du), (dx, du))
            .copy_from(&model.controls[lag]);
    }
    b
}

/// `X_t - c - sum_q A_q X_{t-q}`, the part of the residual not involving `U`.
fn autoregressive_part(model: &LocalModel, x: &DMatrix<f64>, t: usize) -> DVector<f64> {
    let mut e = x.column(t) - &model.offset;
    for (i, a) in model.interactions.iter().enumerate() {
        e.gemv(-1.0, a, &x.column(t - i - 1), 1.0);
    }
    e
}

/// Block `(D_t, G_t)` for zero-based step `t`, given the regime weights of that step.
pub fn assemble_block_u(
    models: &ModelSet,
    weights: &[f64],
    x: &DMatrix<f64>,
    t: usize,
) -> Result<(DMatrix<f64>, DVector<f64>)> {
    if weights.len() != models.k() {
        return Err(FemmError::Dimension("gamma column length differs from K".into()));
    }
    if x.nrows() != models.dimx() {
        return Err(FemmError::Dimension("series dimension mismatch".into()));
    }
    if t < models.mem() || t >= x.ncols() {
        return Err(FemmError::IndexOutOfRange {
            t,
            reason: format!("need {} <= t < {}", models.mem(), x.ncols()),
        });
    }
    let n = models.dimu() * (models.p() + 1);
    let mut d = DMatrix::zeros(n, n);
    let mut g = DVector::zeros(n);
    for (m, &w) in models.models().iter().zip(weights) {
        if w == 0.0 {
            continue;
        }
        let b = stacked_controls(m);
        d.gemm_tr(w, &b, &b, 1.0);
        g.gemv_tr(-2.0 * w, &b, &autoregressive_part(m, x, t), 1.0);
    }
    Ok((d, g))
}

/// Assembles the program over all `dimu * T` coordinates of `U`; the
/// `U`-independent terms are omitted.
pub fn assemble_qp_u(
    models: &ModelSet,
    gamma: &SwitchingWeights,
    x: &DMatrix<f64>,
) -> Result<AssembledQp> {
    let (du, p, len) = (models.dimu(), models.p(), x.ncols());
    if gamma.len() != len || gamma.k() != models.k() {
        return Err(FemmError::Dimension("gamma shape mismatch".into()));
    }
    if x.nrows() != models.dimx() {
        return Err(FemmError::Dimension("series dimension mismatch".into()));
    }
    let window = du * (p + 1);
    let mut qp = AssembledQp::zeros(du * len, window - 1);
    let stacked: Vec<DMatrix<f64>> = models.models().iter().map(stacked_controls).collect();
    let grams: Vec<DMatrix<f64>> = stacked.iter().map(|b| b.transpose() * b).collect();
    let w = gamma.weights();
    for t in models.mem()..len {
        let offset = (t - p) * du;
        for (k, m) in models.models().iter().enumerate() {
            let g = w[(k, t)];
            if g == 0.0 {
                continue;
            }
            qp.hessian.add_block(offset, &grams[k], g);
            let e = autoregressive_part(m, x, t);
            qp.linear
                .rows_mut(offset, window)
                .gemv_tr(-2.0 * g, &stacked[k], &e, 1.0);
        }
    }
    Ok(qp)
}
