//! Solver hyperparameters.

use serde::{Deserialize, Serialize};

use crate::error::{FemmError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FemmConfig {
    /// Number of regimes.
    pub k: usize,
    /// Bound on the total variation of each weight trajectory.
    pub c: f64,
    pub q: usize,
    pub p: usize,
    /// L1 bound on each local model; `None` means unconstrained.
    pub lasso_bound: Option<f64>,
    /// Ridge multiplier for the missing target entries.
    pub ridge_x: f64,
    /// Ridge multiplier for the missing covariate entries.
    pub ridge_u: f64,
    pub max_restart: usize,
    pub max_alternate: usize,
    pub tol: f64,
    pub seed: u64,
    /// Before the full alternation, alternate only the weights and the local
    /// models with the missing entries held at their interpolated filling.
    pub warm_up: bool,
}

impl Default for FemmConfig {
    fn default() -> Self {
        Self {
            k: 2,
            c: 9.0,
            q: 3,
            p: 3,
            lasso_bound: None,
            ridge_x: 0.0,
            ridge_u: 0.005,
            max_restart: 20,
            max_alternate: 100,
            tol: 5e-4,
            seed: 0,
            warm_up: false,
        }
    }
}

impl FemmConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(FemmError::Config(m.to_string()));
        if self.k == 0 {
            return fail("k must be positive");
        }
        if !(self.c >= 0.0) {
            return fail("c must be nonnegative");
        }
        if let Some(b) = self.lasso_bound {
            if !(b >= 0.0) {
                return fail("lasso_bound must be nonnegative");
            }
        }
        if !(self.ridge_x >= 0.0 && self.ridge_x.is_finite()) {
            return fail("ridge_x must be a finite nonnegative number");
        }
        if !(self.ridge_u >= 0.0 && self.ridge_u.is_finite()) {
            return fail("ridge_u must be a finite nonnegative number");
        }
        if self.max_restart == 0 {
            return fail("max_restart must be at least 1");
        }
        if self.max_alternate == 0 {
            return fail("max_alternate must be at least 1");
        }
        if !(self.tol > 0.0) {
            return fail("tol must be positive");
        }
        Ok(())
    }

    /// `max(Q, P)`.
    pub fn mem(&self) -> usize {
        self.q.max(self.p)
    }
}
