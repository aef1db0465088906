//! Accelerometer and two-way range measurement models.
//!
//! The measurement vector is `(a_x, a_y, a_z, R₁, R₂, R₃)`: accelerations in
//! the aerodynamic frame followed by ranges to three beacons.

use nalgebra::{Matrix3, Matrix6, Matrix6x2, Vector3, Vector6};

use crate::dynamics::{
    aero_accels, fd_step, EntryState, ModelError, PlanetModel, UncertainParams, VehicleModel,
    PARAM_DIM, PARAM_FD_STEP, STATE_DIM,
};

pub const MEAS_DIM: usize = 6;
pub const NUM_BEACONS: usize = 3;

/// Below this separation (m) the range gradient is treated as undefined.
const COLOCATION_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BeaconKind {
    Orbiting,
    Surface,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BeaconEphemeris {
    pub kind: BeaconKind,
    /// Position at t = 0 in the planet-fixed frame, m.
    pub position0: Vector3<f64>,
    /// m/s, zero for surface beacons.
    pub velocity: Vector3<f64>,
}

impl BeaconEphemeris {
    pub fn orbiting(position0: Vector3<f64>, velocity: Vector3<f64>) -> Self {
        Self {
            kind: BeaconKind::Orbiting,
            position0,
            velocity,
        }
    }

    pub fn surface(position0: Vector3<f64>) -> Self {
        Self {
            kind: BeaconKind::Surface,
            position0,
            velocity: Vector3::zeros(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImuModel {
    /// Accelerometer bias, applied on the truth side only.
    pub accel_bias: Vector3<f64>,
    pub accel_noise_cov: Matrix3<f64>,
}

/// One epoch of measurements.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeasurementBundle {
    pub epoch: f64,
    pub accel: Vector3<f64>,
    pub ranges: Vector3<f64>,
}

impl MeasurementBundle {
    pub fn to_vector(&self) -> Vector6<f64> {
        Vector6::new(
            self.accel[0],
            self.accel[1],
            self.accel[2],
            self.ranges[0],
            self.ranges[1],
            self.ranges[2],
        )
    }

    pub fn from_vector(epoch: f64, z: &Vector6<f64>) -> Self {
        Self {
            epoch,
            accel: Vector3::new(z[0], z[1], z[2]),
            ranges: Vector3::new(z[3], z[4], z[5]),
        }
    }
}

/// Planet-fixed Cartesian position from radius, longitude and latitude.
pub fn spherical_to_cartesian(r: f64, longitude: f64, latitude: f64) -> Vector3<f64> {
    let (sin_lon, cos_lon) = longitude.sin_cos();
    let (sin_lat, cos_lat) = latitude.sin_cos();
    Vector3::new(r * cos_lat * cos_lon, r * cos_lat * sin_lon, r * sin_lat)
}

/// Specific force `(−D, −L sinφ, L cosφ)` in the aerodynamic frame.
pub fn accel_predict(
    x: &EntryState,
    c: &UncertainParams,
    vehicle: &VehicleModel,
    planet: &PlanetModel,
) -> Vector3<f64> {
    let (drag, lift) = aero_accels(x.radius, x.velocity, c, vehicle, planet);
    let (sin_phi, cos_phi) = vehicle.bank_angle.sin_cos();
    Vector3::new(-drag, -lift * sin_phi, lift * cos_phi)
}

/// Straight-line constant-velocity beacon position.
pub fn beacon_position(beacon: &BeaconEphemeris, t: f64) -> Vector3<f64> {
    match beacon.kind {
        BeaconKind::Surface => beacon.position0,
        BeaconKind::Orbiting => beacon.position0 + beacon.velocity * t,
    }
}

pub fn range_predict(x: &EntryState, beacon: &BeaconEphemeris, t: f64) -> f64 {
    let vehicle = spherical_to_cartesian(x.radius, x.longitude, x.latitude);
    (vehicle - beacon_position(beacon, t)).norm()
}

/// Filter-side measurement prediction. The accelerometer bias is not included.
pub fn measurement_predict(
    x: &EntryState,
    c: &UncertainParams,
    t: f64,
    beacons: &[BeaconEphemeris; NUM_BEACONS],
    vehicle: &VehicleModel,
    planet: &PlanetModel,
) -> Vector6<f64> {
    let a = accel_predict(x, c, vehicle, planet);
    Vector6::new(
        a[0],
        a[1],
        a[2],
        range_predict(x, &beacons[0], t),
        range_predict(x, &beacons[1], t),
        range_predict(x, &beacons[2], t),
    )
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeasurementJacobians {
    pub h: Matrix6<f64>,
    pub hc: Matrix6x2<f64>,
    pub y: Matrix6<f64>,
}

/// `H`, `Hᶜ` by central differences; `Y = I` for additive noise.
pub fn measurement_jacobians(
    x: &EntryState,
    c_bar: &UncertainParams,
    t: f64,
    beacons: &[BeaconEphemeris; NUM_BEACONS],
    vehicle: &VehicleModel,
    planet: &PlanetModel,
) -> Result<MeasurementJacobians, ModelError> {
    x.validate()?;
    for (i, b) in beacons.iter().enumerate() {
        if range_predict(x, b, t) < COLOCATION_TOLERANCE {
            return Err(ModelError::ColocatedBeacon { beacon: i });
        }
    }

    let predict = |xv: &Vector6<f64>, c: &UncertainParams| {
        measurement_predict(&EntryState::from_vector(xv), c, t, beacons, vehicle, planet)
    };
    let x0 = x.to_vector();
    let mut h = Matrix6::zeros();
    for j in 0..STATE_DIM {
        let step = fd_step(x0[j]);
        let mut plus = x0;
        let mut minus = x0;
        plus[j] += step;
        minus[j] -= step;
        h.set_column(j, &((predict(&plus, c_bar) - predict(&minus, c_bar)) / (2.0 * step)));
    }
    // accelerations do not depend on θ, λ, ψ
    for i in 0..3 {
        for j in 3..STATE_DIM {
            h[(i, j)] = 0.0;
        }
    }

    let base = c_bar.to_array();
    let mut hc = Matrix6x2::zeros();
    for j in 0..PARAM_DIM {
        let mut plus = base;
        let mut minus = base;
        plus[j] += PARAM_FD_STEP;
        minus[j] -= PARAM_FD_STEP;
        let zp = predict(&x0, &UncertainParams::new(plus[0], plus[1]));
        let zm = predict(&x0, &UncertainParams::new(minus[0], minus[1]));
        hc.set_column(j, &((zp - zm) / (2.0 * PARAM_FD_STEP)));
    }
    // ranges carry no parameter dependence
    for i in 3..MEAS_DIM {
        for j in 0..PARAM_DIM {
            hc[(i, j)] = 0.0;
        }
    }

    Ok(MeasurementJacobians {
        h,
        hc,
        y: Matrix6::identity(),
    })
}
