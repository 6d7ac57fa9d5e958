//! Online look-ahead Gaussian-process path planning.
//!
//! An agent holds a GP belief over a scalar field (e.g. chlorophyll
//! concentration) and repeatedly solves a receding-horizon problem over its
//! next `N` waypoints. The cost is the summed probability of misclassifying
//! each grid node against a threshold, evaluated under the variance the
//! belief would have after sampling those waypoints.
//!
//! Modules:
//! * [`gp_field`]: GP regression with O(|D|^2) updates and look-ahead variance.
//! * [`objective`]: misclassification cost, path/current/wind regularizers and
//!   their gradients.
//! * [`planner`]: the constrained waypoint solver plus greedy/static baselines.
//! * [`mission`]: scenarios, simulated sensing and the sense-plan-move loop.
//! * [`experiment`]: multi-seed comparisons and summary tables.
//! * [`commands`]: the operations behind the `olahgp` command line.

pub mod commands;
pub mod error;
pub mod experiment;
pub mod fgrid;
pub mod geometry;
pub mod gp_field;
pub mod mission;
pub mod objective;
pub mod planner;
pub mod render;

pub use error::{Error, Result};
pub use geometry::{GridDomain, GridField, GridKind, Point2};
pub use gp_field::{GpModel, KernelParams, Measurement, PriorField, VarianceMode};
