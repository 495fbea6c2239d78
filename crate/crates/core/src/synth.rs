//! Synthetic two-regime test case: four covariates (trend, two oscillations
//! and a random walk), a mixture VARX target series, and MCAR masking.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{FemmError, Result};
use crate::model::{simulate, LocalModel, ModelSet, SwitchingWeights};
use crate::series::Series;

/// Parameters of the two regimes, their initial values and dimensions.
pub const TWO_REGIME_DATA: &str = include_str!("../data/two_regime_varx.json");

#[derive(Debug, Deserialize)]
struct RegimeRecord {
    offset: Vec<f64>,
    interactions: Vec<Vec<Vec<f64>>>,
    controls: Vec<Vec<Vec<f64>>>,
}

#[derive(Debug, Deserialize)]
struct DataRecord {
    dimx: usize,
    dimu: usize,
    q: usize,
    p: usize,
    regimes: Vec<RegimeRecord>,
    x_init: Vec<Vec<f64>>,
}

fn matrix(rows: &[Vec<f64>], nrows: usize, ncols: usize) -> Result<DMatrix<f64>> {
    if rows.len() != nrows || rows.iter().any(|r| r.len() != ncols) {
        return Err(FemmError::Parse(format!("expected a {nrows}x{ncols} matrix")));
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

/// True models and the first `mem` columns of the target series.
#[derive(Debug, Clone, PartialEq)]
pub struct TrueParameters {
    pub models: ModelSet,
    /// `dimx x mem`.
    pub x_init: DMatrix<f64>,
}

pub fn two_regime_parameters() -> Result<TrueParameters> {
    let rec: DataRecord =
        serde_json::from_str(TWO_REGIME_DATA).map_err(|e| FemmError::Parse(e.to_string()))?;
    let mut models = Vec::new();
    for r in &rec.regimes {
        let interactions = r
            .interactions
            .iter()
            .map(|m| matrix(m, rec.dimx, rec.dimx))
            .collect::<Result<Vec<_>>>()?;
        let controls = r
            .controls
            .iter()
            .map(|m| matrix(m, rec.dimx, rec.dimu))
            .collect::<Result<Vec<_>>>()?;
        models.push(LocalModel::new(DVector::from_vec(r.offset.clone()), interactions, controls)?);
    }
    let models = ModelSet::new(models)?;
    if models.q() != rec.q || models.p() != rec.p {
        return Err(FemmError::Parse("lag orders disagree with the stored matrices".into()));
    }
    let mem = models.mem();
    if rec.x_init.len() != mem || rec.x_init.iter().any(|c| c.len() != rec.dimx) {
        return Err(FemmError::Parse(format!("expected {mem} initial columns")));
    }
    let x_init = DMatrix::from_fn(rec.dimx, mem, |i, j| rec.x_init[j][i]);
    Ok(TrueParameters { models, x_init })
}

/// Generator settings. Times in `regime_path` are one-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorSpec {
    pub t: usize,
    /// Target noise covariance is `noise_x * I`.
    pub noise_x: f64,
    /// Standard deviation of the covariate noise.
    pub sigma_u: f64,
    /// Noise standard deviation of the random-walk covariate; defaults to `sigma_u`.
    pub sigma_u4: Option<f64>,
    pub walk_a: f64,
    pub walk_b: f64,
    pub walk_start: f64,
    /// `(start, regime)` pairs, both one-based.
    pub regime_path: Vec<(usize, usize)>,
    pub seed: u64,
}

impl Default for GeneratorSpec {
    fn default() -> Self {
        Self {
            t: 1002,
            noise_x: 0.005,
            sigma_u: 0.5,
            sigma_u4: None,
            walk_a: -0.5,
            walk_b: 0.5,
            walk_start: 0.5,
            regime_path: block_path(1002, 250, 2),
            seed: 0,
        }
    }
}

/// Regimes `1, 2, .., k, 1, ..` in consecutive blocks of `block` steps.
pub fn block_path(t: usize, block: usize, k: usize) -> Vec<(usize, usize)> {
    (0..t.div_ceil(block.max(1)))
        .map(|i| (1 + i * block, 1 + i % k))
        .collect()
}

impl GeneratorSpec {
    /// Default settings with a series of length `t`.
    pub fn with_length(t: usize) -> Self {
        Self {
            t,
            regime_path: block_path(t, 250, 2),
            ..Self::default()
        }
    }

    pub fn validate(&self, k: usize) -> Result<()> {
        let fail = |m: String| Err(FemmError::Config(m));
        if self.t < 2 {
            return fail("t must be at least 2".into());
        }
        if !(self.noise_x >= 0.0) || !(self.sigma_u >= 0.0) || !(self.sigma_u4.unwrap_or(0.0) >= 0.0) {
            return fail("noise levels must be nonnegative".into());
        }
        match self.regime_path.first() {
            Some(&(1, _)) => {}
            _ => return fail("regime path must start at time 1".into()),
        }
        for w in self.regime_path.windows(2) {
            if w[1].0 <= w[0].0 {
                return fail("regime path start times must increase".into());
            }
        }
        for &(start, regime) in &self.regime_path {
            if start > self.t || regime == 0 || regime > k {
                return fail(format!("invalid regime path entry ({start}, {regime})"));
            }
        }
        Ok(())
    }

    /// Zero-based regime label of every step.
    pub fn labels(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.t);
        for (i, &(start, regime)) in self.regime_path.iter().enumerate() {
            let end = self.regime_path.get(i + 1).map_or(self.t, |n| n.0 - 1);
            out.extend(std::iter::repeat_n(regime - 1, end + 1 - start));
        }
        out
    }
}

fn noise(sd: f64) -> Option<Normal<f64>> {
    (sd > 0.0).then(|| Normal::new(0.0, sd).expect("finite positive deviation"))
}

/// The four covariates, one column per step.
pub fn make_covariates(spec: &GeneratorSpec) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(1);
    let eta = noise(spec.sigma_u);
    let eta4 = noise(spec.sigma_u4.unwrap_or(spec.sigma_u));
    let big_t = spec.t as f64;
    let mut u = DMatrix::zeros(4, spec.t);
    let mut walk = spec.walk_start;
    for col in 0..spec.t {
        let t = (col + 1) as f64;
        if col > 0 {
            walk += spec.walk_a + (spec.walk_b - spec.walk_a) * rng.random::<f64>();
        }
        u[(0, col)] = -2.0 * t / big_t + 1.0;
        u[(1, col)] = (2.0 * PI * t / 150.0).sin();
        u[(2, col)] = (2.0 * PI * t / 200.0).sin()
            * (2.0 * PI * t / 40.0 + 0.5 * PI * (2.0 * PI * t / 120.0).sin()).cos();
        u[(3, col)] = walk;
        for d in 0..3 {
            if let Some(n) = &eta {
                u[(d, col)] += n.sample(&mut rng);
            }
        }
        if let Some(n) = &eta4 {
            u[(3, col)] += n.sample(&mut rng);
        }
    }
    u
}

/// Target series and the hard regime weights that generated it.
pub fn make_series(
    spec: &GeneratorSpec,
    truth: &TrueParameters,
    covariates: &DMatrix<f64>,
) -> Result<(DMatrix<f64>, SwitchingWeights)> {
    spec.validate(truth.models.k())?;
    if covariates.ncols() != spec.t {
        return Err(FemmError::Dimension("covariates do not cover t steps".into()));
    }
    let gamma = SwitchingWeights::from_labels(&spec.labels(), truth.models.k())?;
    let dimx = truth.models.dimx();
    let cov = DMatrix::identity(dimx, dimx) * spec.noise_x;
    let noise_seed = spec.seed.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let x = simulate(&truth.models, &gamma, covariates, &truth.x_init, Some(&cov), noise_seed)?;
    Ok((x, gamma))
}

/// Complete synthetic data set.
#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub x: DMatrix<f64>,
    pub u: DMatrix<f64>,
    pub gamma: SwitchingWeights,
    pub truth: TrueParameters,
}

pub fn generate(spec: &GeneratorSpec) -> Result<SyntheticData> {
    let truth = two_regime_parameters()?;
    let u = make_covariates(spec);
    let (x, gamma) = make_series(spec, &truth, &u)?;
    Ok(SyntheticData { x, u, gamma, truth })
}

/// Zero-based protected columns: the first and last step, or the whole
/// initial window `0..mem` plus the last step when `protect_initial` is set.
pub fn default_protected(t: usize, mem: usize, protect_initial: bool) -> Vec<usize> {
    let mut p: Vec<usize> = if protect_initial { (0..mem.max(1)).collect() } else { vec![0] };
    p.push(t - 1);
    p.dedup();
    p
}

/// Marks `round(fraction * eligible)` further entries missing, uniformly
/// without replacement among observed entries outside the protected columns.
pub fn inject_mcar(series: &Series, fraction: f64, protected: &[usize], seed: u64) -> Result<Series> {
    if !(fraction >= 0.0 && fraction.is_finite()) {
        return Err(FemmError::Config(format!("fraction must be a finite nonnegative number, got {fraction}")));
    }
    let (dim, len) = (series.dim(), series.len());
    let eligible: Vec<usize> = (0..len)
        .filter(|t| !protected.contains(t))
        .flat_map(|t| (0..dim).map(move |d| t * dim + d))
        .filter(|&i| !series.mask().as_slice()[i])
        .collect();
    let requested = (fraction * eligible.len() as f64).round() as usize;
    // a fraction of one or more would leave nothing observed outside the protected steps
    if fraction >= 1.0 || requested > eligible.len() {
        return Err(FemmError::MaskExhausted {
            requested,
            eligible: eligible.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut mask = series.mask().clone();
    for i in rand::seq::index::sample(&mut rng, eligible.len(), requested) {
        mask.as_mut_slice()[eligible[i]] = true;
    }
    Series::new(series.values().clone(), mask)
}
