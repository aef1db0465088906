//! Desensitized extended Kalman filtering for Mars atmospheric entry navigation.
//!
//! * [`filter`] - model-agnostic EKF / desensitized EKF recursions.
//! * [`dynamics`] and [`measurement`] - entry equations of motion, IMU and
//!   beacon range models with their Jacobians.
//! * [`scenario`] and [`config`] - the entry scenario and its file format.
//! * [`montecarlo`] - truth simulation, paired filter runs and statistics.
//! * [`report`] - CSV output.
//! * [`validate`] - headless property checks used by the `validate` command.

pub mod config;
pub mod dynamics;
pub mod filter;
pub mod measurement;
pub mod montecarlo;
pub mod report;
pub mod scenario;
pub mod validate;

pub use config::{load_config, parse_config, ConfigError};
pub use dynamics::{EntryState, PlanetModel, UncertainParams, VehicleModel};
pub use filter::{FilterError, FilterState, GainMode, SensitivityWeights};
pub use montecarlo::{run_campaign, run_paired, HarnessError, MonteCarloReport, RunHistory};
pub use scenario::ScenarioConfig;
