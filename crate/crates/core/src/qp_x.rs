//! The objective as a quadratic program in the stacked target series
//! `X = (X_1', .., X_T')'`.
//!
//! With `Ã_k = [-A_{k,Q}, .., -A_{k,1}, I]` the weighted distance at step `t`
//! is `X̃_t' Z_t X̃_t + F_t' X̃_t + const`, where `X̃_t` stacks
//! `X_{t-Q}, .., X_t`. The windows overlap with a shift of `dimx`, so the
//! assembled matrix is banded with `dimx * (Q + 1) - 1` sub-diagonals.

use nalgebra::{DMatrix, DVector};

use crate::error::{FemmError, Result};
use crate::model::{LocalModel, ModelSet, SwitchingWeights};
use crate::qp::AssembledQp;

/// `Ã = [-A_Q, .., -A_1, I]`.
pub fn stacked_interactions(model: &LocalModel) -> DMatrix<f64> {
    let (dx, q) = (model.dimx(), model.q());
    let mut a = DMatrix::zeros(dx, dx * (q + 1));
    for (slot, lag) in (1..=q).rev().enumerate() {
        a.view_mut((0, slot * dx), (dx, dx))
            .copy_from(&(-&model.interactions[lag - 1]));
    }
    a.view_mut((0, q * dx), (dx, dx))
        .copy_from(&DMatrix::identity(dx, dx));
    a
}

/// `c_k + sum_p B_{k,p} U_{t-p}`.
fn exogenous_part(model: &LocalModel, u: &DMatrix<f64>, t: usize) -> DVector<f64> {
    let mut v = model.offset.clone();
    for (p, b) in model.controls.iter().enumerate() {
        v.gemv(1.0, b, &u.column(t - p), 1.0);
    }
    v
}

/// `Ã' v` without forming `Ã'`.
fn stacked_transpose_mul(model: &LocalModel, v: &DVector<f64>) -> DVector<f64> {
    let (dx, q) = (model.dimx(), model.q());
    let mut out = DVector::zeros(dx * (q + 1));
    for (slot, lag) in (1..=q).rev().enumerate() {
        let mut part = out.rows_mut(slot * dx, dx);
        part.gemv_tr(-1.0, &model.interactions[lag - 1], v, 0.0);
    }
    out.rows_mut(q * dx, dx).copy_from(v);
    out
}

fn check_inputs(models: &ModelSet, weights: &[f64], u: &DMatrix<f64>, t: usize) -> Result<()> {
    if weights.len() != models.k() {
        return Err(FemmError::Dimension("gamma column length differs from K".into()));
    }
    if u.nrows() != models.dimu() {
        return Err(FemmError::Dimension("covariate dimension mismatch".into()));
    }
    if t < models.mem() || t >= u.ncols() {
        return Err(FemmError::IndexOutOfRange {
            t,
            reason: format!("need {} <= t < {}", models.mem(), u.ncols()),
        });
    }
    Ok(())
}

/// Block `(Z_t, F_t)` for zero-based step `t`, given the regime weights of that step.
pub fn assemble_block_x(
    models: &ModelSet,
    weights: &[f64],
    u: &DMatrix<f64>,
    t: usize,
) -> Result<(DMatrix<f64>, DVector<f64>)> {
    check_inputs(models, weights, u, t)?;
    let n = models.dimx() * (models.q() + 1);
    let mut z = DMatrix::zeros(n, n);
    let mut f = DVector::zeros(n);
    for (m, &g) in models.models().iter().zip(weights) {
        if g == 0.0 {
            continue;
        }
        let a = stacked_interactions(m);
        z.gemm_tr(g, &a, &a, 1.0);
        f.axpy(-2.0 * g, &stacked_transpose_mul(m, &exogenous_part(m, u, t)), 1.0);
    }
    Ok((z, f))
}

/// Assembles the program over all `dimx * T` coordinates of `X`.
///
/// The residual terms that do not depend on `X` are omitted, so
/// `qp.value(vec(X))` equals the objective up to an `X`-independent constant.
pub fn assemble_qp_x(
    models: &ModelSet,
    gamma: &SwitchingWeights,
    u: &DMatrix<f64>,
) -> Result<AssembledQp> {
    let (dx, q, len) = (models.dimx(), models.q(), u.ncols());
    if gamma.len() != len || gamma.k() != models.k() {
        return Err(FemmError::Dimension("gamma shape mismatch".into()));
    }
    if u.nrows() != models.dimu() {
        return Err(FemmError::Dimension("covariate dimension mismatch".into()));
    }
    let window = dx * (q + 1);
    let mut qp = AssembledQp::zeros(dx * len, window - 1);
    let grams: Vec<DMatrix<f64>> = models
        .models()
        .iter()
        .map(|m| {
            let a = stacked_interactions(m);
            a.transpose() * a
        })
        .collect();
    let w = gamma.weights();
    for t in models.mem()..len {
        let offset = (t - q) * dx;
        for (k, m) in models.models().iter().enumerate() {
            let g = w[(k, t)];
            if g == 0.0 {
                continue;
            }
            qp.hessian.add_block(offset, &grams[k], g);
            let ft = stacked_transpose_mul(m, &exogenous_part(m, u, t));
            qp.linear.rows_mut(offset, window).axpy(-2.0 * g, &ft, 1.0);
        }
    }
    Ok(qp)
}
