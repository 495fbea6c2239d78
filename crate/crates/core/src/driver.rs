//! Restarted alternating minimization over the switching weights, the
//! missing target entries, the missing covariate entries and the local
//! models.
//!
//! The functional being minimized is the weighted model distance plus the
//! ridge penalties `ridge_x |X_miss|^2 + ridge_u |U_miss|^2`. Every step is an
//! exact minimization over one block, so the recorded values never increase;
//! a step whose numerical result would increase the functional is rejected.

use log::{debug, warn};
use nalgebra::DMatrix;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;

use crate::config::FemmConfig;
use crate::error::{FemmError, Result};
use crate::gamma::{distance_matrix, extend_to_series, solve_gamma};
use crate::model::{objective, LocalModel, ModelSet, SwitchingWeights};
use crate::qp::{flatten, reduce_qp, solve_missing, ReductionMaps};
use crate::qp_u::assemble_qp_u;
use crate::qp_x::assemble_qp_x;
use crate::series::Series;
use crate::theta::{build_design, solve_theta, ThetaOptions, EMPTY_WEIGHT};

/// Relative slack below which a step counts as non-increasing.
const ACCEPT_SLACK: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct InitialState {
    pub gamma: SwitchingWeights,
    pub x: DMatrix<f64>,
    pub u: DMatrix<f64>,
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub models: ModelSet,
    pub gamma: SwitchingWeights,
    pub x_filled: DMatrix<f64>,
    pub u_filled: DMatrix<f64>,
    /// Penalized objective after every executed step.
    pub objective_trace: Vec<f64>,
    pub sweeps: usize,
    pub restart_index: usize,
    pub converged: bool,
    pub warnings: Vec<String>,
}

impl FitResult {
    /// Final value of the penalized objective.
    pub fn objective(&self) -> f64 {
        self.objective_trace.last().copied().unwrap_or(f64::INFINITY)
    }
}

/// Seed of restart `index`, derived from the configured seed.
pub fn restart_seed(seed: u64, index: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng.next_u64()
}

fn check_inputs(x: &Series, u: &Series, config: &FemmConfig) -> Result<()> {
    config.validate()?;
    if x.len() != u.len() {
        return Err(FemmError::Dimension(format!(
            "target has {} steps, covariates {}",
            x.len(),
            u.len()
        )));
    }
    if x.len() <= config.mem() + 1 {
        return Err(FemmError::Dimension(format!(
            "series of length {} is too short for memory {}",
            x.len(),
            config.mem()
        )));
    }
    Ok(())
}

fn filled(s: &Series) -> Result<DMatrix<f64>> {
    if s.has_missing() {
        s.interpolate()
    } else {
        Ok(s.values().clone())
    }
}

/// Random weights (uniform on the simplex per column) and interpolated fillings.
pub fn initialize(x: &Series, u: &Series, config: &FemmConfig, seed: u64) -> Result<InitialState> {
    check_inputs(x, u, config)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (k, len) = (config.k, x.len());
    let mut w = DMatrix::zeros(k, len);
    for mut col in w.column_iter_mut() {
        for v in col.iter_mut() {
            *v = rng.sample::<f64, _>(Exp1);
        }
        let s = col.sum();
        col /= s;
    }
    Ok(InitialState {
        gamma: SwitchingWeights::new(w)?,
        x: filled(x)?,
        u: filled(u)?,
    })
}

struct State<'a> {
    x_obs: &'a Series,
    u_obs: &'a Series,
    config: &'a FemmConfig,
    models: ModelSet,
    gamma: SwitchingWeights,
    x: DMatrix<f64>,
    u: DMatrix<f64>,
    warnings: Vec<String>,
}

fn missing_energy(values: &DMatrix<f64>, mask: &DMatrix<bool>) -> f64 {
    values
        .iter()
        .zip(mask.iter())
        .filter(|(_, m)| **m)
        .map(|(v, _)| v * v)
        .sum()
}

impl State<'_> {
    fn penalized(&self, models: &ModelSet, gamma: &SwitchingWeights, x: &DMatrix<f64>, u: &DMatrix<f64>) -> Result<f64> {
        Ok(objective(models, gamma, x, u)?
            + self.config.ridge_x * missing_energy(x, self.x_obs.mask())
            + self.config.ridge_u * missing_energy(u, self.u_obs.mask()))
    }

    fn current(&self) -> Result<f64> {
        self.penalized(&self.models, &self.gamma, &self.x, &self.u)
    }

    fn warn(&mut self, msg: String) {
        warn!("{msg}");
        self.warnings.push(msg);
    }

    fn gamma_step(&mut self) -> Result<SwitchingWeights> {
        let d = distance_matrix(&self.models, &self.x, &self.u)?;
        let inner = solve_gamma(&d, self.config.c)?;
        Ok(extend_to_series(&inner, self.models.mem()))
    }

    fn x_step(&mut self) -> Result<DMatrix<f64>> {
        let qp = assemble_qp_x(&self.models, &self.gamma, &self.u)?;
        let maps = ReductionMaps::from_mask(self.x_obs.mask());
        let reduced = reduce_qp(&qp, &maps, &flatten(&self.x));
        let sol = solve_missing(&reduced, self.config.ridge_x, &maps.gather_missing(&self.x))?;
        if let Some(w) = sol.warning {
            self.warn(format!("target reconstruction: {w}"));
        }
        let mut x = self.x.clone();
        maps.scatter_missing(&mut x, &sol.values);
        Ok(x)
    }

    fn u_step(&mut self) -> Result<DMatrix<f64>> {
        let qp = assemble_qp_u(&self.models, &self.gamma, &self.x)?;
        let maps = ReductionMaps::from_mask(self.u_obs.mask());
        let reduced = reduce_qp(&qp, &maps, &flatten(&self.u));
        let sol = solve_missing(&reduced, self.config.ridge_u, &maps.gather_missing(&self.u))?;
        if let Some(w) = sol.warning {
            self.warn(format!("covariate reconstruction: {w}"));
        }
        let mut u = self.u.clone();
        maps.scatter_missing(&mut u, &sol.values);
        Ok(u)
    }

    /// New local models; `previous = None` only before the first sweep.
    fn theta_step(&mut self, previous: Option<&ModelSet>) -> Result<ModelSet> {
        let cfg = self.config;
        let (design, targets) = build_design(&self.x, &self.u, cfg.q, cfg.p)?;
        let mem = cfg.mem();
        let opts = ThetaOptions {
            lasso_bound: cfg.lasso_bound,
            l2_fallback: None,
        };
        let mut models = Vec::with_capacity(cfg.k);
        for k in 0..cfg.k {
            let weights: Vec<f64> = self.gamma.weights().row(k).columns(mem, design.nrows()).iter().copied().collect();
            if weights.iter().sum::<f64>() < EMPTY_WEIGHT {
                let kept = match previous {
                    Some(p) => p.models()[k].clone(),
                    None => LocalModel::zeros(self.x.nrows(), self.u.nrows(), cfg.q, cfg.p),
                };
                self.warn(format!("regime {k} carries no weight; keeping its previous parameters"));
                models.push(kept);
                continue;
            }
            let fit = solve_theta(&design, &targets, &weights, self.u.nrows(), cfg.q, cfg.p, &opts)?;
            if let Some(w) = fit.warning {
                self.warn(format!("regime {k}: {w}"));
            }
            models.push(fit.model);
        }
        ModelSet::new(models)
    }

    /// Sweeps until the relative decrease over one sweep drops below `tol`
    /// or the sweep budget is spent. With `free_missing` unset the missing
    /// entries stay at their current filling.
    fn sweep_until_converged(&mut self, trace: &mut Vec<f64>, free_missing: bool) -> Result<(usize, bool)> {
        let config = self.config;
        let mut sweeps = 0;
        let mut sweep_start = f64::INFINITY;
        for sweep in 0..config.max_alternate {
            sweeps = sweep + 1;

            // the initial weights violate the variation bound, so the first
            // update is taken unconditionally
            let gamma = self.gamma_step()?;
            let value = self.penalized(&self.models, &gamma, &self.x, &self.u)?;
            match trace.last() {
                Some(&prev) if !accepts(value, prev) => {
                    debug!("weight update rejected ({value} > {prev})");
                    trace.push(prev);
                }
                _ => {
                    self.gamma = gamma;
                    trace.push(value);
                }
            }

            if free_missing && self.x_obs.has_missing() {
                let cand = self.x_step()?;
                let value = self.penalized(&self.models, &self.gamma, &cand, &self.u)?;
                let prev = *trace.last().expect("trace is non-empty");
                if accepts(value, prev) {
                    self.x = cand;
                    trace.push(value);
                } else {
                    debug!("target update rejected ({value} > {prev})");
                    trace.push(prev);
                }
            }

            if free_missing && self.u_obs.has_missing() {
                let cand = self.u_step()?;
                let value = self.penalized(&self.models, &self.gamma, &self.x, &cand)?;
                let prev = *trace.last().expect("trace is non-empty");
                if accepts(value, prev) {
                    self.u = cand;
                    trace.push(value);
                } else {
                    debug!("covariate update rejected ({value} > {prev})");
                    trace.push(prev);
                }
            }

            let previous = self.models.clone();
            let cand = self.theta_step(Some(&previous))?;
            let value = self.penalized(&cand, &self.gamma, &self.x, &self.u)?;
            let prev = *trace.last().expect("trace is non-empty");
            if accepts(value, prev) {
                self.models = cand;
                trace.push(value);
            } else {
                debug!("model update rejected ({value} > {prev})");
                trace.push(prev);
            }

            let end = *trace.last().expect("trace is non-empty");
            if sweep > 0 {
                let decrease = (sweep_start - end) / sweep_start.abs().max(f64::MIN_POSITIVE);
                if decrease < config.tol {
                    return Ok((sweeps, true));
                }
            }
            sweep_start = end;
        }
        Ok((sweeps, false))
    }
}

fn accepts(new: f64, old: f64) -> bool {
    new <= old + ACCEPT_SLACK * old.abs()
}

/// Runs the alternating minimization from `init`.
pub fn alternate(x: &Series, u: &Series, config: &FemmConfig, init: InitialState) -> Result<FitResult> {
    check_inputs(x, u, config)?;
    if init.gamma.k() != config.k || init.gamma.len() != x.len() {
        return Err(FemmError::Dimension("initial weights do not match K and T".into()));
    }
    if init.x.shape() != x.values().shape() || init.u.shape() != u.values().shape() {
        return Err(FemmError::Dimension("initial fillings do not match the series".into()));
    }
    let placeholder = ModelSet::new(vec![LocalModel::zeros(x.dim(), u.dim(), config.q, config.p); config.k])?;
    let mut st = State {
        x_obs: x,
        u_obs: u,
        config,
        models: placeholder,
        gamma: init.gamma,
        x: x.merge_missing(&init.x)?,
        u: u.merge_missing(&init.u)?,
        warnings: Vec::new(),
    };
    st.models = st.theta_step(None)?;

    let mut trace = Vec::new();
    let mut sweeps = 0;
    if config.warm_up && (x.has_missing() || u.has_missing()) {
        let (n, _) = st.sweep_until_converged(&mut trace, false)?;
        sweeps += n;
    }
    let (n, converged) = st.sweep_until_converged(&mut trace, true)?;
    sweeps += n;
    // final value of the objective as stored, recomputed for consistency
    debug_assert!((st.current()? - trace.last().copied().unwrap_or(0.0)).abs() <= 1e-9 * st.current()?.abs().max(1.0));

    Ok(FitResult {
        models: st.models,
        gamma: st.gamma,
        x_filled: st.x,
        u_filled: st.u,
        objective_trace: trace,
        sweeps,
        restart_index: 0,
        converged,
        warnings: st.warnings,
    })
}

/// Best of `config.max_restart` independent restarts.
pub fn fit(x: &Series, u: &Series, config: &FemmConfig) -> Result<FitResult> {
    check_inputs(x, u, config)?;
    let mut best: Option<FitResult> = None;
    let mut failures = Vec::new();
    for i in 0..config.max_restart {
        let seed = restart_seed(config.seed, i);
        let run = initialize(x, u, config, seed).and_then(|init| alternate(x, u, config, init));
        match run {
            Ok(mut r) => {
                r.restart_index = i;
                debug!("restart {i}: objective {:.6e} after {} sweeps", r.objective(), r.sweeps);
                if best.as_ref().is_none_or(|b| r.objective() < b.objective()) {
                    best = Some(r);
                }
            }
            Err(e) => {
                warn!("restart {i} failed: {e}");
                failures.push(format!("restart {i}: {e}"));
            }
        }
    }
    match best {
        Some(mut b) => {
            if !failures.is_empty() {
                b.warnings.push(format!("{} of {} restarts failed", failures.len(), config.max_restart));
                b.warnings.extend(failures);
            }
            Ok(b)
        }
        None => Err(FemmError::AllRestartsFailed {
            restarts: config.max_restart,
            details: failures.join("; "),
        }),
    }
}
