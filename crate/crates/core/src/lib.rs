//! Mean-squared-error lower bounds under model misspecification.
//!
//! The crate computes and cross-validates three bounds for an estimator built
//! from an assumed model `f` when data actually come from `p`:
//!
//! * the misspecified Cramer-Rao bound (a sandwich `A^{-1} B A^{-1}` around
//!   the pseudo-true parameter),
//! * a "naive" variant that projects the true score onto the assumed one,
//!   which is never above the sandwich bound,
//! * the oracle Cramer-Rao bound of the true model.
//!
//! Built-in model pairs (scalar Gaussian mean families and a single-source
//! DOA problem with colored noise) have closed-form information matrices; any
//! user model implementing [`models::DensityModel`] gets Monte Carlo
//! fallbacks. The `experiments` module drives end-to-end scenarios with CSV
//! output; the `misspec-bounds` binary exposes them on the command line.

pub mod bounds;
pub mod equivalent;
pub mod error;
pub mod estimators;
pub mod experiments;
pub mod information;
pub mod models;
pub mod numerics;
pub mod pseudo_true;

pub use error::{Error, Result};
