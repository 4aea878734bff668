//! Coherent forecasting for multivariate hierarchical time series.
//!
//! The crate builds summing matrices from aggregation trees, extends them to
//! several variables with Kronecker products, estimates forecast-error
//! covariances, reconciles base forecasts by minimum-trace projection, and
//! provides the simulation and evaluation machinery used to benchmark the
//! approach.

pub mod baseforecast;
pub mod covariance;
pub mod error;
pub mod evaluate;
pub mod hierarchy;
pub mod panel;
pub mod reconcile;
pub mod simulate;
pub mod testutil;

pub use baseforecast::{BaseForecastSet, ForecasterSpec};
pub use covariance::{CovarianceEstimate, CovarianceKind, ResidualPanel};
pub use evaluate::{CvConfig, ErrorCube, ReplicateErrors};
pub use error::{Error, Result};
pub use hierarchy::{Hierarchy, KronMatrices, NodeTree};
pub use panel::{CoherenceCheck, MultiPanel, TimeAxis};
pub use reconcile::{MintOperator, ReconcileMethod};
pub use simulate::{ScenarioSampler, ScenarioSpec, StudyConfig, StudyResult};
