//! Time-dependent importance reweighting for score-based diffusion models,
//! studied on Gaussian mixtures where every ground-truth quantity is analytic.

pub mod commands;
pub mod config;
pub mod error;
pub mod io;
pub mod metrics;
pub mod mixture;
pub mod nn;
pub mod objectives;
pub mod quadrature;
pub mod rng;
pub mod score;
pub mod ratio;
pub mod sampler;
pub mod sde;
pub mod training;

pub use error::{Error, ErrorCategory, Result};
pub use mixture::{true_ratio, GaussianMixture};
pub use score::{FnScore, OracleScore, ScoreFn, TrainableScore};
pub use sde::{reverse_generate, Integrator, SamplerKind, SamplerSpec, VpSchedule};
