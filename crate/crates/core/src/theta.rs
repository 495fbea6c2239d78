//! Local model update: weighted least squares per regime, optionally inside
//! an L1 ball.

use nalgebra::{DMatrix, DVector};

use crate::error::{FemmError, Result};
use crate::model::LocalModel;

/// Gram condition numbers above this switch to the L2-regularized solution.
pub const MAX_GRAM_CONDITION: f64 = 1e12;

/// Total weight below which a regime counts as empty.
pub const EMPTY_WEIGHT: f64 = 1e-12;

/// Regression rows for steps `mem..T`.
///
/// Row `j` (step `t = mem + j`) is `[1, X_{t-1}', .., X_{t-Q}', U_t', .., U_{t-P}']`
/// and the matching target row is `X_t'`.
pub fn build_design(
    x: &DMatrix<f64>,
    u: &DMatrix<f64>,
    q: usize,
    p: usize,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let (dx, du, len) = (x.nrows(), u.nrows(), x.ncols());
    if u.ncols() != len {
        return Err(FemmError::Dimension("series lengths differ".into()));
    }
    let mem = q.max(p);
    if len <= mem {
        return Err(FemmError::Dimension(format!(
            "series of length {len} is too short for memory {mem}"
        )));
    }
    let n = len - mem;
    let ncols = 1 + dx * q + du * (p + 1);
    let mut design = DMatrix::zeros(n, ncols);
    let mut targets = DMatrix::zeros(n, dx);
    for j in 0..n {
        let t = mem + j;
        design[(j, 0)] = 1.0;
        let mut col = 1;
        for lag in 1..=q {
            for d in 0..dx {
                design[(j, col)] = x[(d, t - lag)];
                col += 1;
            }
        }
        for lag in 0..=p {
            for d in 0..du {
                design[(j, col)] = u[(d, t - lag)];
                col += 1;
            }
        }
        for d in 0..dx {
            targets[(j, d)] = x[(d, t)];
        }
    }
    Ok((design, targets))
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ThetaOptions {
    /// L1 bound on all coefficients, offset included; `None` is unconstrained.
    pub lasso_bound: Option<f64>,
    /// Ridge used when the weighted Gram matrix is ill-conditioned;
    /// `None` means `1e-8 * trace(Gram) / ncols`.
    pub l2_fallback: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct ThetaFit {
    pub model: LocalModel,
    /// Condition estimate of the weighted Gram matrix.
    pub condition: f64,
    pub warning: Option<String>,
}

/// `sum_t w_t |target_t - W row_t|^2` for coefficients `w` (`dimx x ncols`).
pub fn weighted_residual(
    design: &DMatrix<f64>,
    targets: &DMatrix<f64>,
    weights: &[f64],
    w: &DMatrix<f64>,
) -> f64 {
    let resid = targets - design * w.transpose();
    resid
        .row_iter()
        .zip(weights)
        .map(|(r, &wt)| wt * r.norm_squared())
        .sum()
}

fn l1(w: &DMatrix<f64>) -> f64 {
    w.iter().map(|v| v.abs()).sum()
}

/// Euclidean projection onto `{v : |v|_1 <= radius}` (sort-based).
fn project_l1_ball(v: &mut [f64], radius: f64) {
    let norm: f64 = v.iter().map(|a| a.abs()).sum();
    if norm <= radius {
        return;
    }
    if radius <= 0.0 {
        v.fill(0.0);
        return;
    }
    let mut mags: Vec<f64> = v.iter().map(|a| a.abs()).collect();
    mags.sort_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut tau = 0.0;
    for (i, &m) in mags.iter().enumerate() {
        cum += m;
        let candidate = (cum - radius) / (i + 1) as f64;
        if m > candidate {
            tau = candidate;
        } else {
            break;
        }
    }
    for a in v.iter_mut() {
        *a = a.signum() * (a.abs() - tau).max(0.0);
    }
}

/// Accelerated projected gradient on `tr(W G W') - 2 tr(B W')` over the L1 ball.
fn lasso(gram: &DMatrix<f64>, cross: &DMatrix<f64>, start: &DMatrix<f64>, radius: f64) -> DMatrix<f64> {
    let lmax = gram.clone().symmetric_eigenvalues().max().max(f64::MIN_POSITIVE);
    let step = 1.0 / (2.0 * lmax);
    let value = |w: &DMatrix<f64>| (w * gram).dot(w) - 2.0 * cross.dot(w);
    let mut w = start.clone();
    project_l1_ball(w.as_mut_slice(), radius);
    let mut best = (value(&w), w.clone());
    let mut yk = w.clone();
    let mut tk = 1.0_f64;
    for _ in 0..20_000 {
        let grad = 2.0 * (&yk * gram - cross);
        let mut next = &yk - step * grad;
        project_l1_ball(next.as_mut_slice(), radius);
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * tk * tk).sqrt());
        let moved = (&next - &w).amax();
        yk = &next + ((tk - 1.0) / t_next) * (&next - &w);
        w = next;
        tk = t_next;
        let v = value(&w);
        if v < best.0 {
            best = (v, w.clone());
        }
        if moved <= 1e-13 * (1.0 + w.amax()) {
            break;
        }
    }
    best.1
}

/// Minimizes `sum_t w_t |target_t - W row_t|^2`, subject to `|W|_1 <= bound`
/// when a Lasso bound is set, and returns the coefficients as a local model.
pub fn solve_theta(
    design: &DMatrix<f64>,
    targets: &DMatrix<f64>,
    weights: &[f64],
    dimu: usize,
    q: usize,
    p: usize,
    opts: &ThetaOptions,
) -> Result<ThetaFit> {
    let (n, ncols) = design.shape();
    let dx = targets.ncols();
    if targets.nrows() != n || weights.len() != n {
        return Err(FemmError::Dimension("design, targets and weights differ in length".into()));
    }
    if ncols != 1 + dx * q + dimu * (p + 1) {
        return Err(FemmError::Dimension("design width does not match the lag orders".into()));
    }
    if weights.iter().any(|w| !(*w >= 0.0)) {
        return Err(FemmError::Dimension("weights must be nonnegative".into()));
    }
    if weights.iter().sum::<f64>() < EMPTY_WEIGHT {
        return Err(FemmError::EmptyCluster(0));
    }
    if let Some(b) = opts.lasso_bound {
        if b == 0.0 {
            let model = LocalModel::from_coefficients(&DMatrix::zeros(dx, ncols), dimu, q, p)?;
            return Ok(ThetaFit {
                model,
                condition: f64::NAN,
                warning: None,
            });
        }
    }

    // weighted rows; the SVD of sqrt(w) * design gives both the solution and
    // the Gram condition number without squaring it
    let mut a = design.clone();
    let mut y = targets.clone();
    for (j, &w) in weights.iter().enumerate() {
        let s = w.sqrt();
        a.row_mut(j).scale_mut(s);
        y.row_mut(j).scale_mut(s);
    }
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    let condition = if smin > 0.0 { (smax / smin).powi(2) } else { f64::INFINITY };
    let gram = a.transpose() * &a;
    let (ridge, warning) = if condition > MAX_GRAM_CONDITION {
        let r = opts
            .l2_fallback
            .unwrap_or(1e-8 * gram.trace() / ncols as f64);
        (
            r,
            Some(format!(
                "weighted Gram matrix is ill-conditioned (condition estimate {condition:.3e}); \
                 added L2 regularization {r:.3e}"
            )),
        )
    } else {
        (0.0, None)
    };
    let uty = svd.u.as_ref().expect("requested U").transpose() * &y;
    let filter = DVector::from_iterator(
        svd.singular_values.len(),
        svd.singular_values.iter().map(|&s| {
            let d = s * s + ridge;
            if d > 0.0 {
                s / d
            } else {
                0.0
            }
        }),
    );
    let scaled = DMatrix::from_fn(uty.nrows(), uty.ncols(), |i, j| filter[i] * uty[(i, j)]);
    let mut w = (svd.v_t.as_ref().expect("requested V'").transpose() * scaled).transpose();

    if let Some(b) = opts.lasso_bound.filter(|b| b.is_finite()) {
        if l1(&w) > b {
            let mut g = gram;
            for i in 0..ncols {
                g[(i, i)] += ridge;
            }
            let cross = y.transpose() * &a;
            w = lasso(&g, &cross, &w, b);
        }
    }
    Ok(ThetaFit {
        model: LocalModel::from_coefficients(&w, dimu, q, p)?,
        condition,
        warning,
    })
}
