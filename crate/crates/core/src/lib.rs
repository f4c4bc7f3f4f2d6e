//! Online tire slip detection and tire-road friction estimation from vehicle
//! telemetry.
//!
//! Commanded motion is pushed through a single-track kinematic model and
//! compared against measured motion. Samples whose linear and angular
//! residuals both stay under calibrated thresholds count as rolling without
//! slip, and the friction coefficient is estimated as the largest normalized
//! traction seen on those samples.
//!
//! ```
//! use slipfric::{detector::Thresholds, estimator::estimate_stream, sim, VehicleGeometry};
//!
//! let cfg = sim::Scenario::DriftTurn.config(&sim::ScenarioParams {
//!     mu: 0.7,
//!     noise: sim::NoiseSpec::none(),
//!     ..Default::default()
//! });
//! let records = sim::simulate_run(&cfg).unwrap();
//! let geom = VehicleGeometry::default();
//! let th = slipfric::calibration::compute_thresholds(&[&records[..]], &geom).unwrap();
//! let est = estimate_stream(&records, &th, &geom, 9.81).unwrap();
//! let mu = est["sim"].mu_hat().unwrap();
//! assert!(mu <= 0.7 && mu >= 0.68);
//! ```

pub mod calibration;
pub mod detector;
pub mod error;
pub mod estimator;
pub mod fsutil;
pub mod metrics;
pub mod model;
pub mod par;
pub mod pipeline;
pub mod sim;
pub mod telemetry;
pub mod types;

pub use error::{Error, Result};
pub use types::{ControlAction, Observation, TelemetryRecord, VehicleGeometry, DEFAULT_GRAVITY};
