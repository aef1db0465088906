//! The Mars entry navigation scenario and its filter-model adapters.

use nalgebra::{DMatrix, DVector, Matrix6, Vector6};

use crate::dynamics::{
    discrete_param_jacobian, discrete_state_jacobian, rk4_step_vector, EntryState, PlanetModel,
    UncertainParams, VehicleModel, PARAM_DIM, STATE_DIM,
};
use crate::filter::{
    FilterError, MeasurementLinearization, MeasurementModel, ProcessLinearization, ProcessModel,
};
use crate::measurement::{
    measurement_jacobians, measurement_predict, BeaconEphemeris, ImuModel, NUM_BEACONS,
};

/// Every constant a simulation campaign needs, in SI units.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub planet: PlanetModel,
    pub truth_vehicle: VehicleModel,
    pub filter_vehicle: VehicleModel,
    pub truth_initial: EntryState,
    pub filter_initial: EntryState,
    pub imu: ImuModel,
    /// Range order: orbiter, surface beacon 1, surface beacon 2.
    pub beacons: [BeaconEphemeris; NUM_BEACONS],
    pub initial_covariance: [f64; STATE_DIM],
    pub process_noise: [f64; STATE_DIM],
    pub measurement_noise: [f64; STATE_DIM],
    pub weights: [f64; PARAM_DIM],
    /// Half-widths of the zero-centred uniform distributions of `c`.
    pub param_half_widths: [f64; PARAM_DIM],
    /// Standard deviations used for the perturbation matrix.
    pub param_sigmas: [f64; PARAM_DIM],
    /// When set, every run uses these parameters instead of sampling them.
    pub fixed_params: Option<UncertainParams>,
    pub dt: f64,
    pub horizon: f64,
    pub runs: usize,
    pub seed: u64,
}

pub const DEFAULT_PRESET: &str = include_str!("../presets/mars_entry.toml");

impl ScenarioConfig {
    /// The shipped Mars entry preset.
    pub fn mars_entry() -> Self {
        crate::config::parse_config(DEFAULT_PRESET).expect("shipped preset is valid")
    }

    /// Number of filter steps; the history holds one more epoch than this.
    pub fn steps(&self) -> usize {
        (self.horizon / self.dt).round() as usize
    }

    pub fn epoch_count(&self) -> usize {
        self.steps() + 1
    }

    pub fn epoch_time(&self, k: usize) -> f64 {
        k as f64 * self.dt
    }

    pub fn initial_covariance_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_column_slice(&self.initial_covariance))
    }

    pub fn process_model(&self) -> EntryProcessModel {
        EntryProcessModel {
            vehicle: self.filter_vehicle,
            planet: self.planet,
            c_bar: UncertainParams::NOMINAL,
            noise_cov: Matrix6::from_diagonal(&Vector6::from_column_slice(&self.process_noise)),
        }
    }

    pub fn measurement_model(&self) -> EntryMeasurementModel {
        EntryMeasurementModel {
            vehicle: self.filter_vehicle,
            planet: self.planet,
            beacons: self.beacons,
            c_bar: UncertainParams::NOMINAL,
            noise_cov: Matrix6::from_diagonal(&Vector6::from_column_slice(
                &self.measurement_noise,
            )),
        }
    }
}

fn to_dmatrix<const R: usize, const C: usize>(
    m: &nalgebra::SMatrix<f64, R, C>,
) -> DMatrix<f64> {
    DMatrix::from_column_slice(R, C, m.as_slice())
}

fn state_from(x: &DVector<f64>) -> Result<EntryState, FilterError> {
    if x.len() != STATE_DIM {
        return Err(FilterError::DimensionMismatch {
            context: "entry model",
            detail: format!("state has {} entries, expected {STATE_DIM}", x.len()),
        });
    }
    Ok(EntryState::from_vector(&Vector6::from_column_slice(
        x.as_slice(),
    )))
}

fn model_error(epoch: f64, e: crate::dynamics::ModelError) -> FilterError {
    FilterError::Model {
        epoch,
        message: e.to_string(),
    }
}

/// Filter-side entry dynamics, linearized by differencing the RK4 step.
#[derive(Debug, Clone, PartialEq)]
pub struct EntryProcessModel {
    pub vehicle: VehicleModel,
    pub planet: PlanetModel,
    pub c_bar: UncertainParams,
    pub noise_cov: Matrix6<f64>,
}

impl ProcessModel for EntryProcessModel {
    fn linearize(
        &self,
        x: &DVector<f64>,
        t: f64,
        dt: f64,
    ) -> Result<ProcessLinearization, FilterError> {
        let state = state_from(x)?;
        let err = |e| model_error(t, e);
        let next = rk4_step_vector(&state.to_vector(), &self.c_bar, dt, &self.vehicle, &self.planet)
            .map_err(err)?;
        let phi = discrete_state_jacobian(&state, &self.c_bar, dt, &self.vehicle, &self.planet)
            .map_err(err)?;
        let psi = discrete_param_jacobian(&state, &self.c_bar, dt, &self.vehicle, &self.planet)
            .map_err(err)?;
        Ok(ProcessLinearization {
            next_state: DVector::from_column_slice(next.as_slice()),
            state_jacobian: to_dmatrix(&phi),
            param_jacobian: to_dmatrix(&psi),
            noise_coeff: DMatrix::identity(STATE_DIM, STATE_DIM),
            noise_cov: to_dmatrix(&self.noise_cov),
        })
    }
}

/// Filter-side accelerometer and range model.
#[derive(Debug, Clone, PartialEq)]
pub struct EntryMeasurementModel {
    pub vehicle: VehicleModel,
    pub planet: PlanetModel,
    pub beacons: [BeaconEphemeris; NUM_BEACONS],
    pub c_bar: UncertainParams,
    pub noise_cov: Matrix6<f64>,
}

impl MeasurementModel for EntryMeasurementModel {
    fn linearize(&self, x: &DVector<f64>, t: f64) -> Result<MeasurementLinearization, FilterError> {
        let state = state_from(x)?;
        let jac = measurement_jacobians(
            &state,
            &self.c_bar,
            t,
            &self.beacons,
            &self.vehicle,
            &self.planet,
        )
        .map_err(|e| model_error(t, e))?;
        let predicted = measurement_predict(
            &state,
            &self.c_bar,
            t,
            &self.beacons,
            &self.vehicle,
            &self.planet,
        );
        Ok(MeasurementLinearization {
            predicted: DVector::from_column_slice(predicted.as_slice()),
            state_jacobian: to_dmatrix(&jac.h),
            param_jacobian: to_dmatrix(&jac.hc),
            noise_coeff: to_dmatrix(&jac.y),
            noise_cov: to_dmatrix(&self.noise_cov),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preset_values() {
        let cfg = ScenarioConfig::mars_entry();
        assert_eq!(cfg.truth_initial.radius, 3_518_200.0);
        assert_eq!(cfg.filter_initial.radius, 3_519_200.0);
        assert_eq!(cfg.weights, [0.01, 0.1]);
        assert_eq!(cfg.steps(), 4000);
        assert_eq!(cfg.epoch_count(), 4001);
        assert!((cfg.param_sigmas[0] - 0.0866).abs() < 1e-4);
        assert!((cfg.param_sigmas[1] - 0.0577).abs() < 1e-4);
        assert_eq!(cfg.planet, PlanetModel::mars());
    }

    #[test]
    fn adapters_produce_conformable_linearizations() {
        let cfg = ScenarioConfig::mars_entry();
        let x = DVector::from_column_slice(cfg.filter_initial.to_vector().as_slice());
        let p = cfg.process_model().linearize(&x, 0.0, cfg.dt).unwrap();
        assert_eq!(p.state_jacobian.shape(), (6, 6));
        assert_eq!(p.param_jacobian.shape(), (6, 2));
        let m = cfg.measurement_model().linearize(&x, 0.0).unwrap();
        assert_eq!(m.param_jacobian.shape(), (6, 2));
        assert_eq!(m.noise_cov[(5, 5)], 40.0);
        assert!(cfg.process_model().linearize(&DVector::zeros(3), 0.0, 0.1).is_err());
    }
}
