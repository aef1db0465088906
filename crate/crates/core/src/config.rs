//! Scenario configuration files.
//!
//! The format is flat TOML. Keys carry their unit as a suffix (`_km`, `_deg`,
//! `_m_s`, ...) and are converted to SI once, here. Unknown keys are rejected,
//! so a key with the wrong unit suffix fails to load instead of being ignored.

use std::path::{Path, PathBuf};

use nalgebra::{Matrix3, Vector3};
use serde::Deserialize;
use thiserror::Error;

use crate::dynamics::{EntryState, PlanetModel, UncertainParams, VehicleModel};
use crate::measurement::{BeaconEphemeris, ImuModel};
use crate::scenario::ScenarioConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{0}")]
    Parse(String),
    #[error("invalid value for `{key}`: {reason}")]
    Invalid { key: &'static str, reason: String },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    seed: u64,
    runs: usize,
    dt_s: f64,
    horizon_s: f64,

    gravitational_parameter_m3_s2: f64,
    surface_density_kg_m3: f64,
    reference_radius_km: f64,
    scale_height_km: f64,

    nominal_lift_to_drag: f64,
    bank_angle_deg: f64,
    truth_ballistic_coeff_m2_kg: f64,
    filter_ballistic_coeff_m2_kg: f64,

    truth_radius_km: f64,
    truth_velocity_m_s: f64,
    truth_fpa_deg: f64,
    truth_longitude_deg: f64,
    truth_latitude_deg: f64,
    truth_azimuth_deg: f64,

    initial_radius_km: f64,
    initial_velocity_m_s: f64,
    initial_fpa_deg: f64,
    initial_longitude_deg: f64,
    initial_latitude_deg: f64,
    initial_azimuth_deg: f64,

    accel_bias_m_s2: [f64; 3],

    orbiter_position_m: [f64; 3],
    orbiter_velocity_m_s: [f64; 3],
    surface_beacon_1_position_m: [f64; 3],
    surface_beacon_2_position_m: [f64; 3],

    initial_covariance_diag: [f64; 6],
    process_noise_diag: [f64; 6],
    measurement_noise_diag: [f64; 6],

    sensitivity_weights: [f64; 2],
    param_half_widths: [f64; 2],
    #[serde(default)]
    param_sigmas: Option<[f64; 2]>,
    #[serde(default)]
    fixed_params: Option<[f64; 2]>,
}

fn invalid(key: &'static str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        key,
        reason: reason.into(),
    }
}

fn positive(key: &'static str, v: f64) -> Result<f64, ConfigError> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(invalid(key, format!("{v} must be finite and positive")))
    }
}

fn nonnegative<const N: usize>(key: &'static str, v: [f64; N]) -> Result<[f64; N], ConfigError> {
    match v.iter().position(|x| !(x.is_finite() && *x >= 0.0)) {
        Some(i) => Err(invalid(
            key,
            format!("entry {i} = {} must be finite and nonnegative", v[i]),
        )),
        None => Ok(v),
    }
}

fn finite<const N: usize>(key: &'static str, v: [f64; N]) -> Result<[f64; N], ConfigError> {
    match v.iter().position(|x| !x.is_finite()) {
        Some(i) => Err(invalid(key, format!("entry {i} is not finite"))),
        None => Ok(v),
    }
}

fn entry_state(
    prefix: &'static str,
    [r_km, v, fpa, lon, lat, az]: [f64; 6],
) -> Result<EntryState, ConfigError> {
    let state = EntryState {
        radius: r_km * 1000.0,
        velocity: v,
        flight_path_angle: fpa.to_radians(),
        longitude: lon.to_radians(),
        latitude: lat.to_radians(),
        azimuth: az.to_radians(),
    };
    state
        .validate()
        .map_err(|e| invalid(prefix, e.to_string()))?;
    Ok(state)
}

impl ConfigFile {
    fn into_scenario(self) -> Result<ScenarioConfig, ConfigError> {
        let dt = positive("dt_s", self.dt_s)?;
        let horizon = positive("horizon_s", self.horizon_s)?;
        let steps = horizon / dt;
        if (steps - steps.round()).abs() > 1e-9 * steps.max(1.0) {
            return Err(invalid(
                "horizon_s",
                format!("{horizon} s is not an integral number of {dt} s steps"),
            ));
        }
        if self.runs == 0 {
            return Err(invalid("runs", "at least one run is required"));
        }

        let planet = PlanetModel {
            mu: positive("gravitational_parameter_m3_s2", self.gravitational_parameter_m3_s2)?,
            surface_density: positive("surface_density_kg_m3", self.surface_density_kg_m3)?,
            reference_radius: positive("reference_radius_km", self.reference_radius_km)? * 1000.0,
            scale_height: positive("scale_height_km", self.scale_height_km)? * 1000.0,
        };
        let [lift_to_drag] = nonnegative("nominal_lift_to_drag", [self.nominal_lift_to_drag])?;
        let [bank_deg] = finite("bank_angle_deg", [self.bank_angle_deg])?;
        let vehicle = |key, b| -> Result<VehicleModel, ConfigError> {
            Ok(VehicleModel {
                ballistic_coeff: positive(key, b)?,
                lift_to_drag,
                bank_angle: bank_deg.to_radians(),
            })
        };
        let truth_vehicle = vehicle("truth_ballistic_coeff_m2_kg", self.truth_ballistic_coeff_m2_kg)?;
        let filter_vehicle =
            vehicle("filter_ballistic_coeff_m2_kg", self.filter_ballistic_coeff_m2_kg)?;

        let truth_initial = entry_state(
            "truth_*",
            [
                self.truth_radius_km,
                self.truth_velocity_m_s,
                self.truth_fpa_deg,
                self.truth_longitude_deg,
                self.truth_latitude_deg,
                self.truth_azimuth_deg,
            ],
        )?;
        let filter_initial = entry_state(
            "initial_*",
            [
                self.initial_radius_km,
                self.initial_velocity_m_s,
                self.initial_fpa_deg,
                self.initial_longitude_deg,
                self.initial_latitude_deg,
                self.initial_azimuth_deg,
            ],
        )?;

        let measurement_noise = nonnegative("measurement_noise_diag", self.measurement_noise_diag)?;
        if let Some(i) = measurement_noise.iter().position(|v| *v <= 0.0) {
            return Err(invalid(
                "measurement_noise_diag",
                format!("entry {i} must be positive (R must be positive definite)"),
            ));
        }
        let imu = ImuModel {
            accel_bias: Vector3::from(finite("accel_bias_m_s2", self.accel_bias_m_s2)?),
            accel_noise_cov: Matrix3::from_diagonal(&Vector3::new(
                measurement_noise[0],
                measurement_noise[1],
                measurement_noise[2],
            )),
        };
        let beacons = [
            BeaconEphemeris::orbiting(
                Vector3::from(finite("orbiter_position_m", self.orbiter_position_m)?),
                Vector3::from(finite("orbiter_velocity_m_s", self.orbiter_velocity_m_s)?),
            ),
            BeaconEphemeris::surface(Vector3::from(finite(
                "surface_beacon_1_position_m",
                self.surface_beacon_1_position_m,
            )?)),
            BeaconEphemeris::surface(Vector3::from(finite(
                "surface_beacon_2_position_m",
                self.surface_beacon_2_position_m,
            )?)),
        ];

        let param_half_widths = nonnegative("param_half_widths", self.param_half_widths)?;
        let param_sigmas = match self.param_sigmas {
            Some(s) => nonnegative("param_sigmas", s)?,
            None => param_half_widths.map(|hw| hw / 3f64.sqrt()),
        };
        let fixed_params = match self.fixed_params {
            Some(c) => {
                let [c1, c2] = finite("fixed_params", c)?;
                if 1.0 + c1 <= 0.0 {
                    return Err(invalid("fixed_params", "density fraction must exceed -1"));
                }
                Some(UncertainParams::new(c1, c2))
            }
            None => None,
        };
        if param_half_widths[0] >= 1.0 {
            return Err(invalid("param_half_widths", "density half-width must be below 1"));
        }

        Ok(ScenarioConfig {
            planet,
            truth_vehicle,
            filter_vehicle,
            truth_initial,
            filter_initial,
            imu,
            beacons,
            initial_covariance: nonnegative("initial_covariance_diag", self.initial_covariance_diag)?,
            process_noise: nonnegative("process_noise_diag", self.process_noise_diag)?,
            measurement_noise,
            weights: nonnegative("sensitivity_weights", self.sensitivity_weights)?,
            param_half_widths,
            param_sigmas,
            fixed_params,
            dt,
            horizon,
            runs: self.runs,
            seed: self.seed,
        })
    }
}

/// Parses and validates configuration text.
pub fn parse_config(text: &str) -> Result<ScenarioConfig, ConfigError> {
    let file: ConfigFile = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
    file.into_scenario()
}

pub fn load_config(path: impl AsRef<Path>) -> Result<ScenarioConfig, ConfigError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_config(&text).map_err(|e| match e {
        ConfigError::Parse(msg) => ConfigError::Parse(format!("{}: {msg}", path.display())),
        other => other,
    })
}
