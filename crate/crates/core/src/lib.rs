//! Transparent summary measures of treatment effects on ordinal outcomes,
//! with Bayesian cumulative-logit inference behind them.
//!
//! An ordinal outcome with `K` ordered levels (lower = better) has `K − 1`
//! break points, each splitting the scale into `Y ≤ k` vs `Y > k`. Per break
//! point there is a cumulative odds ratio, risk difference, and a pair of
//! relative risks; this crate aggregates them into weighted population-level
//! summaries (weighted geometric-mean OR and RRs, weighted mean RD) whose
//! weights come from the outcome distribution itself.
//!
//! Modules:
//! - [`measures`] — closed-form break-point effects, weighting schemes, and
//!   the weighted summaries.
//! - [`ppo`] — log-density and gradient of the Bayesian proportional-odds /
//!   partial-proportional-odds model with optional covariates.
//! - [`sampler`] — blocked adaptive Metropolis (and optional Hamiltonian)
//!   posterior sampling with split-R̂/ESS diagnostics.
//! - [`marginal`] — posterior draws of marginal arm-wise outcome
//!   distributions, covariate-adjusted via Bayesian-bootstrap g-computation.
//! - [`glm`] — frequentist comparators: dichotomized logistic fits and the
//!   net benefit.
//! - [`simulate`] — scenario registry and the replicate power/type-I-error
//!   harness.

pub mod error;
pub mod glm;
pub mod marginal;
pub mod measures;
pub mod ppo;
pub mod rng;
pub mod sampler;
pub mod simulate;

pub use error::{Error, Result};
