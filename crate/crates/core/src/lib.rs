//! Mobility-marked Hawkes model for multi-region epidemic forecasting.
//!
//! Daily case counts in each region follow a discrete-time marked Hawkes
//! process. Past cases, plus infected travellers estimated from
//! origin-destination flows, excite future cases through an incubation
//! kernel. A covariate-driven mark scales the excitation; it is a log-linear
//! reproduction number fitted by lasso-penalized Poisson regression.
//!
//! The crate is organised by pipeline stage:
//!
//! - [`domain`]: panels, mobility tensors, the Gamma incubation kernel
//! - [`mark`]: covariate standardization and the Poisson lasso
//! - [`process`]: travel correction and conditional intensity
//! - [`estimate`]: EM fitting, leave-one-region-out CV, grid tuning
//! - [`forecast`]: seeded Poisson rollouts
//! - [`simulate`]: a generative sampler with known ground truth
//! - [`eval`]: error metrics, the naive Hawkes baseline, Wilcoxon test
//! - [`data`]: CSV bundles, covariate construction, JSON documents
//! - [`cli`]: the `mmhm` command-line front end

pub mod cli;
pub mod data;
pub mod domain;
pub mod error;
pub mod estimate;
pub mod eval;
pub mod forecast;
pub mod mark;
pub mod process;
pub mod rng;
pub mod simulate;

pub use domain::{DayIndex, Kernel, MobilityTensor, RegionId, RegionPanel};
pub use error::{Error, Result};
pub use estimate::{EmConfig, FittedMmhm, ImportTerm};
pub use mark::MarkModel;
