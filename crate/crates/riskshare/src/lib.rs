//! Optimal risk sharing under model ambiguity for compound Poisson losses.
//!
//! An insurer facing Gamma-severity compound Poisson claims cedes losses to a
//! counterparty under a proportional-cost premium and evaluates outcomes with
//! monotone mean–variance preferences over an ensemble of candidate loss
//! models. The crate provides:
//!
//! - [`compensators`]: Gamma loss compensators, the model ensemble, and the
//!   cross-integral feasibility checks;
//! - [`controls`]: optimal per-claim retention and premium-density controls
//!   and the value function;
//! - [`moments`]: closed-form means, variances, and covariances of the optimal
//!   wealth and the model-weight processes under the relevant measures;
//! - [`simulate`]: exact event-driven simulation of the optimal strategy,
//!   pathwise SDE reconstruction, and terminal-wealth density estimates;
//! - [`verify`]: numerical verification that the closed-form controls solve
//!   the dynamic-programming equation (residuals under control perturbations);
//! - [`pricing`]: the counterparty's safety-loading optimization, including
//!   the one-model Lambert-W closed form;
//! - [`fitting`]: claims-data calibration (Poisson rate, weighted Gamma
//!   severity MLE) and cross-validation ensembles;
//! - [`quadrature`]: the adaptive Gauss–Kronrod oracle used for every
//!   integral cross-check;
//! - [`manifest`]: reproducibility manifests written by the CLI.

// Numerics-crate lint policy:
// - excessive_precision: reference constants (series coefficients, frozen test
//   values) are written at full source precision; truncating them by hand to
//   the nearest representable double invites transcription errors.
// - neg_cmp_op_on_partial_ord: validation uses `!(x > 0.0)` deliberately so
//   NaN fails closed; `x <= 0.0` would accept NaN.
// - needless_range_loop: index loops over several same-length arrays at once
//   read better here than nested zips.
#![allow(clippy::excessive_precision)]
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![allow(clippy::needless_range_loop)]

pub mod compensators;
pub mod error;
pub mod manifest;
pub mod quadrature;

mod special;

pub mod controls;
pub mod fitting;
pub mod moments;
pub mod pricing;
pub mod simulate;
pub mod verify;

pub use compensators::{
    check_assumption_1, check_assumption_2, cross_integral_2, cross_integral_3, GammaCompensator,
    ModelEnsemble, ModelId,
};
pub use controls::{alpha_star, beta_star, growth_exponent, value_function, GrowthFactors, MarketParams};
pub use error::{Error, Result};
