//! Local VARX models, the switching weights that blend them, and the
//! model-distance objective.
//!
//! Time indices in this module are zero-based column indices. The first time
//! step that enters the objective is `mem = max(Q, P)`, i.e. the one-based
//! `t_st = mem + 1`.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{FemmError, Result};

/// Parameters of one stationary VARX regime.
///
/// The prediction for step `t` is
/// `offset + sum_q interactions[q-1] X_{t-q} + sum_p controls[p] U_{t-p}`.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalModel {
    pub offset: DVector<f64>,
    /// `A_1 .. A_Q`, each `dimx x dimx`.
    pub interactions: Vec<DMatrix<f64>>,
    /// `B_0 .. B_P`, each `dimx x dimu`.
    pub controls: Vec<DMatrix<f64>>,
}

impl LocalModel {
    pub fn new(
        offset: DVector<f64>,
        interactions: Vec<DMatrix<f64>>,
        controls: Vec<DMatrix<f64>>,
    ) -> Result<Self> {
        let dimx = offset.len();
        if dimx == 0 {
            return Err(FemmError::Dimension("offset must be non-empty".into()));
        }
        if controls.is_empty() {
            return Err(FemmError::Dimension(
                "at least one control matrix (B_0) is required".into(),
            ));
        }
        if interactions.iter().any(|a| a.shape() != (dimx, dimx)) {
            return Err(FemmError::Dimension(format!(
                "interaction matrices must be {dimx}x{dimx}"
            )));
        }
        let dimu = controls[0].ncols();
        if controls.iter().any(|b| b.shape() != (dimx, dimu)) {
            return Err(FemmError::Dimension(format!(
                "control matrices must all be {dimx}x{dimu}"
            )));
        }
        Ok(Self {
            offset,
            interactions,
            controls,
        })
    }

    pub fn zeros(dimx: usize, dimu: usize, q: usize, p: usize) -> Self {
        Self {
            offset: DVector::zeros(dimx),
            interactions: vec![DMatrix::zeros(dimx, dimx); q],
            controls: vec![DMatrix::zeros(dimx, dimu); p + 1],
        }
    }

    pub fn dimx(&self) -> usize {
        self.offset.len()
    }

    pub fn dimu(&self) -> usize {
        self.controls[0].ncols()
    }

    pub fn q(&self) -> usize {
        self.interactions.len()
    }

    pub fn p(&self) -> usize {
        self.controls.len() - 1
    }

    /// Number of scalar parameters.
    pub fn n_params(&self) -> usize {
        let (dx, du) = (self.dimx(), self.dimu());
        dx * (1 + dx * self.q() + du * (self.p() + 1))
    }

    /// Coefficients as one `dimx x (1 + dimx*Q + dimu*(P+1))` matrix with
    /// column blocks `[c, A_1, .., A_Q, B_0, .., B_P]`.
    pub fn coefficients(&self) -> DMatrix<f64> {
        let (dx, du) = (self.dimx(), self.dimu());
        let ncols = 1 + dx * self.q() + du * (self.p() + 1);
        let mut w = DMatrix::zeros(dx, ncols);
        w.set_column(0, &self.offset);
        let mut col = 1;
        for a in &self.interactions {
            w.view_mut((0, col), (dx, dx)).copy_from(a);
            col += dx;
        }
        for b in &self.controls {
            w.view_mut((0, col), (dx, du)).copy_from(b);
            col += du;
        }
        w
    }

    /// Inverse of [`LocalModel::coefficients`].
    pub fn from_coefficients(w: &DMatrix<f64>, dimu: usize, q: usize, p: usize) -> Result<Self> {
        let dx = w.nrows();
        let expected = 1 + dx * q + dimu * (p + 1);
        if w.ncols() != expected {
            return Err(FemmError::Dimension(format!(
                "coefficient matrix has {} columns, expected {expected}",
                w.ncols()
            )));
        }
        let offset = w.column(0).into_owned();
        let mut col = 1;
        let mut interactions = Vec::with_capacity(q);
        for _ in 0..q {
            interactions.push(w.view((0, col), (dx, dx)).into_owned());
            col += dx;
        }
        let mut controls = Vec::with_capacity(p + 1);
        for _ in 0..=p {
            controls.push(w.view((0, col), (dx, dimu)).into_owned());
            col += dimu;
        }
        Ok(Self {
            offset,
            interactions,
            controls,
        })
    }

    /// Sum of absolute values of every parameter, offset included.
    pub fn l1_norm(&self) -> f64 {
        self.offset.iter().map(|v| v.abs()).sum::<f64>()
            + self
                .interactions
                .iter()
                .chain(self.controls.iter())
                .flat_map(|m| m.iter())
                .map(|v| v.abs())
                .sum::<f64>()
    }

    /// Model prediction for step `t` (requires `t >= max(Q, P)`).
    pub fn predict(&self, x: &DMatrix<f64>, u: &DMatrix<f64>, t: usize) -> DVector<f64> {
        let mut pred = self.offset.clone();
        for (i, a) in self.interactions.iter().enumerate() {
            pred.gemv(1.0, a, &x.column(t - i - 1), 1.0);
        }
        for (p, b) in self.controls.iter().enumerate() {
            pred.gemv(1.0, b, &u.column(t - p), 1.0);
        }
        pred
    }

    /// `X_t` minus the model prediction.
    pub fn residual(&self, x: &DMatrix<f64>, u: &DMatrix<f64>, t: usize) -> Result<DVector<f64>> {
        self.check_window(x, u, t)?;
        Ok(x.column(t) - self.predict(x, u, t))
    }

    fn check_window(&self, x: &DMatrix<f64>, u: &DMatrix<f64>, t: usize) -> Result<()> {
        if x.nrows() != self.dimx() || u.nrows() != self.dimu() {
            return Err(FemmError::Dimension(format!(
                "model is {}x{} (dimx x dimu), series are {} and {}",
                self.dimx(),
                self.dimu(),
                x.nrows(),
                u.nrows()
            )));
        }
        let mem = self.q().max(self.p());
        if t < mem || t >= x.ncols() || t >= u.ncols() {
            return Err(FemmError::IndexOutOfRange {
                t,
                reason: format!("need {mem} <= t < {}", x.ncols().min(u.ncols())),
            });
        }
        Ok(())
    }
}

/// `K` local models sharing dimensions and lag orders.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSet {
    models: Vec<LocalModel>,
}

impl ModelSet {
    pub fn new(models: Vec<LocalModel>) -> Result<Self> {
        let first = models
            .first()
            .ok_or_else(|| FemmError::Dimension("a model set needs at least one model".into()))?;
        let shape = (first.dimx(), first.dimu(), first.q(), first.p());
        if models
            .iter()
            .any(|m| (m.dimx(), m.dimu(), m.q(), m.p()) != shape)
        {
            return Err(FemmError::Dimension(
                "all local models must share dimx, dimu, Q and P".into(),
            ));
        }
        Ok(Self { models })
    }

    pub fn models(&self) -> &[LocalModel] {
        &self.models
    }

    pub fn models_mut(&mut self) -> &mut [LocalModel] {
        &mut self.models
    }

    pub fn into_models(self) -> Vec<LocalModel> {
        self.models
    }

    pub fn k(&self) -> usize {
        self.models.len()
    }

    pub fn q(&self) -> usize {
        self.models[0].q()
    }

    pub fn p(&self) -> usize {
        self.models[0].p()
    }

    pub fn dimx(&self) -> usize {
        self.models[0].dimx()
    }

    pub fn dimu(&self) -> usize {
        self.models[0].dimu()
    }

    /// `max(Q, P)`; also the zero-based index of the first objective step.
    pub fn mem(&self) -> usize {
        self.q().max(self.p())
    }

    /// One-based first objective step, `mem + 1`.
    pub fn t_st(&self) -> usize {
        self.mem() + 1
    }

    /// Reorders the models so that position `i` holds the old model `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        Self {
            models: perm.iter().map(|&i| self.models[i].clone()).collect(),
        }
    }
}

/// Regime weights, one column per time step, each column on the probability simplex.
#[derive(Debug, Clone, PartialEq)]
pub struct SwitchingWeights {
    weights: DMatrix<f64>,
}

impl SwitchingWeights {
    pub fn new(weights: DMatrix<f64>) -> Result<Self> {
        let sw = Self { weights };
        sw.check_simplex(1e-9)?;
        Ok(sw)
    }

    /// Skips validation; callers guarantee the simplex property.
    pub(crate) fn from_raw(weights: DMatrix<f64>) -> Self {
        Self { weights }
    }

    /// Hard assignment: column `t` is the vertex `labels[t]`.
    pub fn from_labels(labels: &[usize], k: usize) -> Result<Self> {
        let mut w = DMatrix::zeros(k, labels.len());
        for (t, &l) in labels.iter().enumerate() {
            if l >= k {
                return Err(FemmError::Dimension(format!("label {l} >= K = {k}")));
            }
            w[(l, t)] = 1.0;
        }
        Ok(Self { weights: w })
    }

    pub fn constant(k: usize, len: usize) -> Self {
        Self {
            weights: DMatrix::from_element(k, len, 1.0 / k as f64),
        }
    }

    pub fn weights(&self) -> &DMatrix<f64> {
        &self.weights
    }

    pub fn k(&self) -> usize {
        self.weights.nrows()
    }

    pub fn len(&self) -> usize {
        self.weights.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn check_simplex(&self, tol: f64) -> Result<()> {
        for (t, col) in self.weights.column_iter().enumerate() {
            let sum: f64 = col.iter().sum();
            if col.iter().any(|v| *v < -tol || !v.is_finite()) || (sum - 1.0).abs() > tol {
                return Err(FemmError::Dimension(format!(
                    "column {t} of the switching weights is not on the simplex"
                )));
            }
        }
        Ok(())
    }

    /// Total variation of each weight trajectory over columns `from..`.
    pub fn bv_norms(&self, from: usize) -> Vec<f64> {
        (0..self.k())
            .map(|k| {
                let row = self.weights.row(k);
                (from..self.len().saturating_sub(1))
                    .map(|t| (row[t + 1] - row[t]).abs())
                    .sum()
            })
            .collect()
    }

    /// Index of the largest weight per column (lowest index on ties).
    pub fn hard_labels(&self) -> Vec<usize> {
        self.weights
            .column_iter()
            .map(|c| {
                let mut best = 0;
                for k in 1..c.len() {
                    if c[k] > c[best] {
                        best = k;
                    }
                }
                best
            })
            .collect()
    }

    pub fn permuted(&self, perm: &[usize]) -> Self {
        let mut w = DMatrix::zeros(self.k(), self.len());
        for (i, &src) in perm.iter().enumerate() {
            w.set_row(i, &self.weights.row(src));
        }
        Self { weights: w }
    }
}

/// Temporal embedding `(X_{t-Q}', .., X_{t-1}', X_t')'`.
pub fn embed_x(x: &DMatrix<f64>, t: usize, q: usize) -> Result<DVector<f64>> {
    if t < q || t >= x.ncols() {
        return Err(FemmError::IndexOutOfRange {
            t,
            reason: format!("embedding of order {q} needs {q} <= t < {}", x.ncols()),
        });
    }
    let dim = x.nrows();
    let mut out = DVector::zeros(dim * (q + 1));
    for (slot, s) in (t - q..=t).enumerate() {
        out.rows_mut(slot * dim, dim).copy_from(&x.column(s));
    }
    Ok(out)
}

/// Covariate window `(U_t', U_{t-1}', .., U_{t-P}')'`.
pub fn embed_u_descending(u: &DMatrix<f64>, t: usize, p: usize) -> Result<DVector<f64>> {
    if t < p || t >= u.ncols() {
        return Err(FemmError::IndexOutOfRange {
            t,
            reason: format!("embedding of order {p} needs {p} <= t < {}", u.ncols()),
        });
    }
    let dim = u.nrows();
    let mut out = DVector::zeros(dim * (p + 1));
    for lag in 0..=p {
        out.rows_mut(lag * dim, dim).copy_from(&u.column(t - lag));
    }
    Ok(out)
}

/// Covariate window `(U_{t-P}', .., U_t')'`; the ordering of the flat `U` vector.
pub fn embed_u_ascending(u: &DMatrix<f64>, t: usize, p: usize) -> Result<DVector<f64>> {
    embed_x(u, t, p)
}

/// Squared Euclidean residual of one local model at step `t`.
pub fn model_distance(
    theta: &LocalModel,
    x: &DMatrix<f64>,
    u: &DMatrix<f64>,
    t: usize,
) -> Result<f64> {
    Ok(theta.residual(x, u, t)?.norm_squared())
}

fn check_buffers(
    models: &ModelSet,
    gamma: &SwitchingWeights,
    x: &DMatrix<f64>,
    u: &DMatrix<f64>,
) -> Result<()> {
    if x.nrows() != models.dimx() || u.nrows() != models.dimu() {
        return Err(FemmError::Dimension(
            "series dimensions do not match the model set".into(),
        ));
    }
    if x.ncols() != u.ncols() || gamma.len() != x.ncols() {
        return Err(FemmError::Dimension(format!(
            "series lengths differ: x {}, u {}, gamma {}",
            x.ncols(),
            u.ncols(),
            gamma.len()
        )));
    }
    if gamma.k() != models.k() {
        return Err(FemmError::Dimension(format!(
            "gamma has {} rows, model set has {} models",
            gamma.k(),
            models.k()
        )));
    }
    if x.ncols() <= models.mem() {
        return Err(FemmError::Dimension(format!(
            "series of length {} is too short for memory {}",
            x.ncols(),
            models.mem()
        )));
    }
    Ok(())
}

/// Weighted model distance summed over every step from `mem` to `T-1`.
pub fn objective(
    models: &ModelSet,
    gamma: &SwitchingWeights,
    x: &DMatrix<f64>,
    u: &DMatrix<f64>,
) -> Result<f64> {
    check_buffers(models, gamma, x, u)?;
    let w = gamma.weights();
    let mut total = 0.0;
    for t in models.mem()..x.ncols() {
        for (k, m) in models.models().iter().enumerate() {
            let g = w[(k, t)];
            if g != 0.0 {
                total += g * (x.column(t) - m.predict(x, u, t)).norm_squared();
            }
        }
    }
    Ok(total)
}

/// Runs the mixture VARX recursion forward.
///
/// `x_init` supplies the first `mem` columns. With `noise_cov = None` the
/// result is the noise-free mean path. Each regime draws its own noise term
/// `L z`, where `L L' = noise_cov`.
pub fn simulate(
    models: &ModelSet,
    gamma: &SwitchingWeights,
    u: &DMatrix<f64>,
    x_init: &DMatrix<f64>,
    noise_cov: Option<&DMatrix<f64>>,
    seed: u64,
) -> Result<DMatrix<f64>> {
    let (dimx, mem, len) = (models.dimx(), models.mem(), u.ncols());
    if u.iter().any(|v| !v.is_finite()) {
        return Err(FemmError::Incomplete(
            "covariates contain undefined entries".into(),
        ));
    }
    if u.nrows() != models.dimu() {
        return Err(FemmError::Dimension("covariate dimension mismatch".into()));
    }
    if x_init.shape() != (dimx, mem) {
        return Err(FemmError::Dimension(format!(
            "initial values must be {dimx}x{mem}, got {:?}",
            x_init.shape()
        )));
    }
    if gamma.len() != len || gamma.k() != models.k() {
        return Err(FemmError::Dimension("gamma shape mismatch".into()));
    }
    let chol = match noise_cov {
        Some(cov) if cov.iter().any(|v| *v != 0.0) => {
            if cov.shape() != (dimx, dimx) {
                return Err(FemmError::Dimension("noise covariance shape".into()));
            }
            let c = cov.clone().cholesky().ok_or_else(|| {
                FemmError::Config("noise covariance is not positive definite".into())
            })?;
            Some(c.l())
        }
        _ => None,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = DMatrix::zeros(dimx, len);
    x.columns_mut(0, mem.min(len))
        .copy_from(&x_init.columns(0, mem.min(len)));
    let w = gamma.weights();
    for t in mem..len {
        let mut next = DVector::zeros(dimx);
        for (k, m) in models.models().iter().enumerate() {
            let mut term = m.predict(&x, u, t);
            if let Some(l) = &chol {
                let z = DVector::from_fn(dimx, |_, _| StandardNormal.sample(&mut rng));
                term += l * z;
            }
            next.axpy(w[(k, t)], &term, 1.0);
        }
        x.set_column(t, &next);
    }
    Ok(x)
}
