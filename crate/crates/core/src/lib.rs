//! Extended-object tracking over sets of trajectories.
//!
//! This crate implements two PHD filters for extended objects under the
//! gamma Gaussian inverse-Wishart model: a baseline mixture filter with
//! labeled components, and a trajectory filter whose components carry the
//! whole state history of a hypothesis and support in-update kinematic
//! smoothing plus backward extent smoothing. Around the filters it provides
//! measurement partitioning, simulation scenarios, a decomposed trajectory
//! metric and a Monte Carlo harness.

pub mod distributions;
pub mod error;
pub mod ggiw_phd;
pub mod ggiwt_phd;
pub mod linalg;
pub mod metrics;
pub mod models;
pub mod partitioning;
pub mod sim;
mod update;

pub use distributions::{GammaParams, GaussianParams, GgiwParams, InverseWishartParams};
pub use error::{Error, Result};
pub use ggiw_phd::{BirthTemplate, Estimate, FilterConfig, GgiwComponent, GgiwMixture};
pub use ggiwt_phd::{EstimatedTrajectory, TrajectoryComponent, TrajectoryMixture};
pub use metrics::{CostDecomposition, MetricConfig, MetricReport, MetricTrajectory};
pub use models::{MeasModel, MotionConfig, StateCov, StateVector};
pub use partitioning::{Cell, Partition};
pub use sim::{
    AreaBounds, ExperimentConfig, FilterKind, GroundTruthObject, MonteCarloOutput, ScenarioConfig,
};
