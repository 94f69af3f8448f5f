//! Hybrid RSS-AOA localization with heterogeneous anchors.
//!
//! * [`geometry`]: noise-free angles, path loss and spherical unit vectors
//! * [`synthesis`]: heterogeneous noise profiles and measurement time series
//! * [`estimators`]: LS, range-weighted WLS and the two-stage residual-variance WLS
//! * [`crlb`]: Fisher information, Cramér–Rao bounds and bound heatmaps
//! * [`bench`]: Monte-Carlo RMSE sweeps and runtime profiling
//! * [`config`]: JSON scenario files and bundled presets

pub mod bench;
pub mod config;
pub mod crlb;
pub mod error;
pub mod estimators;
pub mod geometry;
pub mod rng;
pub mod synthesis;

pub use error::{Error, Result};
pub use estimators::{Estimate, Method, Stage};
pub use geometry::{PathLossParams, Point3};
pub use synthesis::{HeteroNoiseSpec, MeasurementSeries, NoiseProfile};
