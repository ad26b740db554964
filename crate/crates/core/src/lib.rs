//! Complexity priors on scale parameters.
//!
//! A scale `tau` controls how far an extended model may drift from a base
//! model. Instead of placing a prior on `tau` directly, a density
//! `pi_KL` is placed on the expected predictive KL divergence `D(tau)`
//! between the two models and pulled back through the change of variables
//!
//! ```text
//! pi(tau) = pi_KL(D(tau) + eps_KL) * |dD/dtau|
//! ```
//!
//! which is a proper density whenever `D` is a differentiable bijection of
//! `(0, inf)` onto itself.
//!
//! The crate is organized as:
//!
//! - [`kld_prior`]: the density families used as `pi_KL`.
//! - [`divergence`]: the [`DivergenceMap`] abstraction and the generic
//!   change-of-variables density.
//! - [`linear`]: closed-form maps for linear regression (evidence-based and
//!   Jensen-bound predictive versions), marginal priors, shrinkage profiles and
//!   tail probabilities.
//! - [`nn`]: a bias-free ReLU network (plain or residual) with observation
//!   models and per-row predictive divergences.
//! - [`predcp`]: Monte-Carlo divergence maps with exact scalar sensitivities,
//!   depth-wise and modular priors, and numerical verification.
//! - [`sampler`]: sampling `tau` by numerical inversion and drawing prior
//!   functions ancestrally.
//! - [`quadrature`]: adaptive Gauss-Kronrod integration on finite and
//!   semi-infinite ranges.

// `!(x >= 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod divergence;
pub mod dual;
mod error;
pub mod kld_prior;
pub mod linear;
pub mod nn;
pub mod predcp;
pub mod quadrature;
pub mod rng;
pub mod sampler;

pub use divergence::{cov_density, cov_log_density, DivergenceMap, MapPoint};
pub use error::{Error, Result};
pub use kld_prior::{Family, KldPriorSpec};
pub use linear::LinearModelSpec;
pub use nn::{Network, NetworkSpec, ObservationModel, WeightState};
pub use predcp::{McConfig, McEstimate, McMap, PriorEvalResult};
pub use quadrature::Integral;
pub use sampler::{SamplerConfig, SamplerMode};

/// Constant added to a divergence before it is passed to `pi_KL`, so that
/// families without support at zero stay finite.
pub const EPS_KL: f64 = 1e-12;
