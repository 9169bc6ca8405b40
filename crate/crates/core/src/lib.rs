//! Median bias of univariate and partialled M/Z-estimators.
//!
//! The crate computes the median bias of an estimator θ̂ of θ₀,
//! `(1/2 − min{P(θ̂ ≤ θ₀), P(θ̂ ≥ θ₀)})₊`, together with upper bounds on it
//! that only involve the sign of the estimating function at θ₀, and a
//! Monte-Carlo harness ([`simlab`]) that checks every bound against direct
//! simulation.
//!
//! Module map:
//! - [`median_bias`]: the functional and its empirical plug-in.
//! - [`objectives`]: convex location objectives with exact subgradients.
//! - [`solver`]: bisection minimizers and Z-root finders.
//! - [`bounds`]: right-hand sides of the sign-probability bounds.
//! - [`partialling`]: least squares with nuisance covariates, reduced to a
//!   univariate problem by residualization.
//! - [`plm`]: the sample-split partial linear model.
//! - [`simlab`]: experiment configs, the replication engine, reports and the CLI back end.

pub mod bounds;
pub mod error;
pub mod median_bias;
pub mod objectives;
pub mod partialling;
pub mod plm;
pub mod quadrature;
pub mod simlab;
pub mod solver;

pub use error::{Error, Result};
pub use median_bias::{mc_med_bias, med_bias, sign_probabilities, EstimatorDraws, MedBiasEstimate, SignProbabilities};
pub use objectives::{LocationFamily, ObjectiveFamily, ObjectiveKind, Subgradient};
pub use solver::{minimize_convex, solve_z, Bracket};
