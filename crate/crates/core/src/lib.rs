//! Nonstationary VARX estimation with simultaneous reconstruction of
//! missing values in the target series and its covariates.
//!
//! `K` local VARX models are blended by switching weights whose total
//! variation is bounded. Weights, model parameters and the missing entries
//! of both series are found by alternating exact minimization of a single
//! objective, restarted from random initial weights.

pub mod banded;
pub mod config;
pub mod driver;
pub mod error;
pub mod gamma;
pub mod harness;
pub mod lp;
pub mod model;
pub mod qp;
pub mod qp_u;
pub mod qp_x;
pub mod series;
pub mod synth;
pub mod theta;

pub use config::FemmConfig;
pub use error::{FemmError, Result};
pub use model::{LocalModel, ModelSet, SwitchingWeights};
pub use series::Series;
