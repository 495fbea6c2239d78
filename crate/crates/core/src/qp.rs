//! Quadratic programs over stacked series and their reduction to the
//! missing coordinates.
//!
//! A program represents `v(x) = x' H x + f' x + constant`. The assembled form
//! covers every coordinate of a series; [`reduce_qp`] folds the observed
//! coordinates into the linear term and constant so that only the missing
//! ones remain as unknowns.

use nalgebra::{DMatrix, DVector};

use crate::banded::{condition_estimate, BandedSym};
use crate::error::{FemmError, Result};

/// Condition estimates above this trigger the regularized fallback.
pub const MAX_CONDITION: f64 = 1e12;

const CONDITION_ITERATIONS: usize = 40;

#[derive(Debug, Clone)]
pub struct AssembledQp {
    pub hessian: BandedSym,
    pub linear: DVector<f64>,
    /// Known additive constant; for assembled programs this excludes the
    /// coordinate-independent term of the residuals, which is never formed.
    pub constant: f64,
}

impl AssembledQp {
    pub fn zeros(n: usize, bandwidth: usize) -> Self {
        Self {
            hessian: BandedSym::zeros(n, bandwidth),
            linear: DVector::zeros(n),
            constant: 0.0,
        }
    }

    pub fn size(&self) -> usize {
        self.linear.len()
    }

    pub fn value(&self, x: &DVector<f64>) -> f64 {
        self.hessian.quad_form(x) + self.linear.dot(x) + self.constant
    }

    /// Value with `ridge * |x|^2` added.
    pub fn regularized_value(&self, x: &DVector<f64>, ridge: f64) -> f64 {
        self.value(x) + ridge * x.norm_squared()
    }

    pub fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        self.hessian.mul_vec(x) * 2.0 + &self.linear
    }
}

/// Missing and observed flat coordinates of a `dim x T` buffer. Coordinate
/// `t * dim + d` refers to entry `(d, t)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReductionMaps {
    pub missing: Vec<usize>,
    pub observed: Vec<usize>,
}

impl ReductionMaps {
    pub fn from_mask(mask: &DMatrix<bool>) -> Self {
        // column-major storage of a dim x T matrix is exactly the flat order
        let (missing, observed): (Vec<usize>, Vec<usize>) =
            (0..mask.len()).partition(|&i| mask.as_slice()[i]);
        Self { missing, observed }
    }

    pub fn len(&self) -> usize {
        self.missing.len() + self.observed.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn gather_missing(&self, values: &DMatrix<f64>) -> DVector<f64> {
        DVector::from_iterator(
            self.missing.len(),
            self.missing.iter().map(|&i| values.as_slice()[i]),
        )
    }

    pub fn scatter_missing(&self, target: &mut DMatrix<f64>, values: &DVector<f64>) {
        let data = target.as_mut_slice();
        for (&i, v) in self.missing.iter().zip(values.iter()) {
            data[i] = *v;
        }
    }
}

/// Flattens a `dim x T` buffer into `(X_1', .., X_T')'`.
pub fn flatten(values: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_column_slice(values.as_slice())
}

/// Restricts `qp` to the missing coordinates of `maps`, using `values` for the
/// observed ones. The result satisfies
/// `reduced.value(x[m]) == qp.value(x)` for every completion `x`.
pub fn reduce_qp(qp: &AssembledQp, maps: &ReductionMaps, values: &DVector<f64>) -> AssembledQp {
    let mut observed_only = values.clone();
    for &i in &maps.missing {
        observed_only[i] = 0.0;
    }
    let z_xo = qp.hessian.mul_vec(&observed_only);
    let linear = DVector::from_iterator(
        maps.missing.len(),
        maps.missing.iter().map(|&i| 2.0 * z_xo[i] + qp.linear[i]),
    );
    let constant = observed_only.dot(&z_xo) + qp.linear.dot(&observed_only) + qp.constant;
    AssembledQp {
        hessian: qp.hessian.principal_submatrix(&maps.missing),
        linear,
        constant,
    }
}

#[derive(Debug, Clone)]
pub struct MissingSolution {
    pub values: DVector<f64>,
    pub condition: f64,
    pub warning: Option<String>,
}

/// Minimizes `x' (H + ridge I) x + f' x`, i.e. solves `2 (H + ridge I) x = -f`.
///
/// `current` is the incoming filling. When `H + ridge I` is singular or its
/// condition estimate exceeds [`MAX_CONDITION`], coordinates with a zero
/// diagonal keep their current values and the remaining system is solved with
/// a small diagonal shift; that point is returned only if it does not
/// increase the regularized value relative to `current`.
pub fn solve_missing(
    qp: &AssembledQp,
    ridge: f64,
    current: &DVector<f64>,
) -> Result<MissingSolution> {
    let n = qp.size();
    if n == 0 {
        return Err(FemmError::Dimension("no missing coordinates to solve for".into()));
    }
    if !(ridge >= 0.0) {
        return Err(FemmError::Config(format!("ridge must be nonnegative, got {ridge}")));
    }
    if current.len() != n {
        return Err(FemmError::Dimension("current filling length mismatch".into()));
    }
    let mut a = qp.hessian.clone();
    a.add_diagonal(ridge);
    let rhs = -0.5 * &qp.linear;

    let mut condition = f64::INFINITY;
    if let Some(chol) = a.cholesky() {
        condition = condition_estimate(&a, &chol, CONDITION_ITERATIONS);
        if condition <= MAX_CONDITION {
            return Ok(MissingSolution {
                values: chol.solve(&rhs),
                condition,
                warning: None,
            });
        }
    }

    // regularized fallback
    let diag = a.diagonal();
    let scale = diag.iter().fold(0.0_f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    let active: Vec<usize> = (0..n).filter(|&i| diag[i] > 1e-14 * scale).collect();
    let mut x = current.clone();
    if !active.is_empty() {
        let mut sub = a.principal_submatrix(&active);
        let mut sub_rhs = DVector::from_iterator(active.len(), active.iter().map(|&i| rhs[i]));
        // frozen coordinates with nonzero coupling move to the right-hand side
        if active.len() < n {
            let mut frozen = current.clone();
            for &i in &active {
                frozen[i] = 0.0;
            }
            let coupling = a.mul_vec(&frozen);
            for (r, &i) in active.iter().enumerate() {
                sub_rhs[r] -= coupling[i];
            }
        }
        sub.add_diagonal(1e-10 * scale);
        let chol = sub
            .cholesky()
            .ok_or(FemmError::IllConditioned { condition })?;
        let sol = chol.solve(&sub_rhs);
        for (r, &i) in active.iter().enumerate() {
            x[i] = sol[r];
        }
    }
    let before = qp.regularized_value(current, ridge);
    let after = qp.regularized_value(&x, ridge);
    if after > before + 1e-12 * before.abs().max(1.0) {
        return Err(FemmError::IllConditioned { condition });
    }
    Ok(MissingSolution {
        values: x,
        condition,
        warning: Some(format!(
            "missing-value system is ill-conditioned (condition estimate {condition:.3e}); \
             used a regularized fallback, consider a larger ridge"
        )),
    })
}
