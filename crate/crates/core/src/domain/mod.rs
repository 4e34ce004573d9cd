//! Shared data types and the discretized incubation kernel.

mod kernel;
pub mod special;
mod types;

pub use kernel::{
    discretize_gamma, gamma_cdf, Kernel, DEFAULT_TRUNCATION, INCUBATION_SCALE, INCUBATION_SHAPE,
};
pub use types::{DayIndex, MobilityTensor, RegionId, RegionPanel};
