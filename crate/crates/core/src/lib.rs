//! Post-processing of ensemble rainfall forecasts.
//!
//! The crate turns raw ensemble forecasts of 6-h rainfall into calibrated
//! predictive distributions and scores them:
//!
//! * [`forests`]: quantile regression forests (CART splits) and gradient
//!   forests (quantile-gradient splits) producing weighted empirical CDFs;
//! * [`tail_hybrid`]: fits an extended generalized Pareto (EGP) law to a
//!   forest ECDF through probability weighted moments;
//! * [`emos`]: ensemble model output statistics with censored-shifted gamma,
//!   censored GEV and EGP predictive laws fitted by mean CRPS minimization;
//! * [`analogs`]: analog ensembles under a flow-dependent distance;
//! * [`verification`]: fair CRPS, CRPSS, rank/PIT statistics, flatness test
//!   and ROC summaries;
//! * [`simlab`]: synthetic scenarios with known conditional truth;
//! * [`pipeline`]: config-driven orchestration used by the `pluvio` CLI.
//!
//! Data-parallel loops go through [`par`], which uses rayon when the
//! `parallel` feature is enabled and runs sequentially otherwise.

pub mod analogs;
pub mod cv;
pub mod data;
pub mod distributions;
pub mod emos;
pub mod error;
pub mod forests;
pub mod optim;
pub mod par;
pub mod pipeline;
pub mod predictive;
pub mod predictors;
pub mod quadrature;
pub mod selection;
pub mod simlab;
pub mod special;
pub mod tail_hybrid;
pub mod verification;

pub use error::{Error, Result};
pub use predictive::Predictive;
