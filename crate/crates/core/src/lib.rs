//! Bayesian stochastic-volatility estimation without the standard library.
//!
//! The sampler draws the whole log-volatility path in one block through a
//! banded Cholesky factorization and interweaves centered and noncentered
//! parameter updates. Regression and GARCH samplers and one-step predictive
//! likelihoods are built on the same pieces.
#![no_std]
// NaN must fail these checks, so `!(x > 0.0)` is intended
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![allow(clippy::too_many_arguments)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod driver;
pub mod error;
pub mod garch;
pub mod latent;
pub mod linreg;
pub mod mixture;
pub mod model;
pub mod predictive;
pub mod rng;
pub mod special;
pub mod stats;
pub mod theta;

pub use driver::{
    predict_volatility, residuals, sv_update_step, svsample, updatesummary, ResidualType, SamplerConfig, SvDraws,
};
pub use error::{Error, Result};
pub use garch::{garch_rwmh, GarchConfig, GarchParams};
pub use linreg::{gibbs_homoskedastic, gibbs_sv_errors, RegressionData, RegressionPrior};
pub use mixture::MixtureTable;
pub use model::{logret, svsim, LatentPath, PriorSpec, ReturnsSeries, SvParameters};
pub use predictive::{cumulative_bayes_factor, log_marginal_likelihood, predictive_step, rolling_evaluation, ModelTag};
pub use theta::{Parameterization, ProposalKind, ThetaUpdateConfig};
