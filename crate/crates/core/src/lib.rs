//! Wilson score kernel density estimation (WS-KDE).
//!
//! Function estimates with conservative confidence bounds for stochastic
//! functions whose outputs lie in `[0, 1]`, a grid-based Bayesian optimizer
//! that prunes the search space with those bounds, and an experiment
//! harness for coverage and convergence studies.
//!
//! ```
//! use wskde::estimator::{ws_kde, Bandwidth, Confidence, SampleRecord};
//!
//! let h = Bandwidth::new(vec![0.02]).unwrap();
//! let data = vec![SampleRecord::new(vec![0.0], 1.0).unwrap()];
//! let est = ws_kde(&[0.0], &data, &h, Confidence::LEVEL_95).unwrap();
//! assert!(est.lcb > 0.0 && est.ucb == 1.0);
//! ```

pub mod cli;
pub mod error;
pub mod estimator;
pub mod metrics;
pub mod objectives;
pub mod optimizer;
pub mod parallel;

pub use error::{Error, Result};
pub use estimator::{Bandwidth, Confidence, Estimate, SampleRecord};
pub use objectives::{NoiseModel, RngStream, TestFunction};
pub use optimizer::{Domain, EstimatorKind, Grid, OptimizerConfig};
