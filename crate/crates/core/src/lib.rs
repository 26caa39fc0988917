//! Multiple-testing error rates, p-value adjustment procedures, effect-size
//! shrinkage, and a Monte Carlo simulation lab that measures the error rates
//! the procedures actually achieve.
//!
//! The crate is organised around six areas:
//!
//! - [`special`]: distribution functions (normal, Student-t, F) built on the
//!   regularized incomplete beta function.
//! - [`rng`]: seedable, stream-indexed random sources for reproducible
//!   parallel simulation.
//! - [`testing`]: two-sample t-tests and one-way ANOVA over raw group data.
//! - [`error_rates`]: closed-form PCER/FWER/FDR/PFER arithmetic and the
//!   alpha-percentage diagnostic.
//! - [`adjust`]: p-value adjustments (Bonferroni, Sidak, Holm, BH, BY),
//!   fixed-sequence testing, and the two weak-control procedures
//!   (omnibus-gated LSD, Student-Newman-Keuls).
//! - [`shrinkage`]: normal-means shrinkage with fixed, empirical-Bayes, and
//!   spike-and-slab priors, plus simulation-based sigma calibration.
//! - [`simlab`]: scenario-driven Monte Carlo measurement of achieved error
//!   rates and power for any of the above procedures.

pub mod adjust;
pub mod error;
pub mod error_rates;
pub mod rng;
pub mod shrinkage;
pub mod simlab;
pub mod special;
pub mod srange;
pub mod testing;

pub use error::{Error, Result};
