//! Three degree-of-freedom entry dynamics over a non-rotating planet with an
//! exponential atmosphere.
//!
//! State order is fixed everywhere as `(r, v, γ, θ, λ, ψ)`: radius, speed,
//! flight-path angle, longitude, latitude, azimuth. Units are SI.

use nalgebra::{Matrix6, Matrix6x2, Vector6};
use thiserror::Error;

pub const STATE_DIM: usize = 6;
pub const PARAM_DIM: usize = 2;

pub type StateVector = Vector6<f64>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("latitude {latitude} rad is at a pole; longitude and azimuth rates are singular")]
    PolarSingularity { latitude: f64 },
    #[error("non-physical {what} = {value}")]
    NonPhysical { what: &'static str, value: f64 },
    #[error("vehicle is colocated with beacon {beacon}; range jacobian is undefined")]
    ColocatedBeacon { beacon: usize },
}

/// Gravity and exponential-atmosphere constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlanetModel {
    /// m³/s²
    pub mu: f64,
    /// Nominal reference density, kg/m³.
    pub surface_density: f64,
    /// m
    pub reference_radius: f64,
    /// m
    pub scale_height: f64,
}

impl PlanetModel {
    pub fn mars() -> Self {
        Self {
            mu: 42_828.29e9,
            surface_density: 2.0e-4,
            reference_radius: 3_437_200.0,
            scale_height: 7_500.0,
        }
    }

    pub fn gravity(&self, r: f64) -> f64 {
        self.mu / (r * r)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VehicleModel {
    /// `C_D S / m`, m²/kg.
    pub ballistic_coeff: f64,
    /// Nominal lift-to-drag ratio.
    pub lift_to_drag: f64,
    /// Bank angle, rad. Zero throughout the entry scenario.
    pub bank_angle: f64,
}

/// Fractional perturbations of the surface density (`c1`) and of the
/// lift-to-drag ratio (`c2`).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct UncertainParams {
    pub density: f64,
    pub lift_to_drag: f64,
}

impl UncertainParams {
    pub const NOMINAL: Self = Self {
        density: 0.0,
        lift_to_drag: 0.0,
    };

    pub fn new(density: f64, lift_to_drag: f64) -> Self {
        Self {
            density,
            lift_to_drag,
        }
    }

    pub fn to_array(self) -> [f64; PARAM_DIM] {
        [self.density, self.lift_to_drag]
    }

    fn with_component(mut self, i: usize, value: f64) -> Self {
        match i {
            0 => self.density = value,
            _ => self.lift_to_drag = value,
        }
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EntryState {
    /// Distance from the planet center, m.
    pub radius: f64,
    /// m/s
    pub velocity: f64,
    pub flight_path_angle: f64,
    pub longitude: f64,
    pub latitude: f64,
    pub azimuth: f64,
}

impl EntryState {
    pub fn to_vector(&self) -> StateVector {
        Vector6::new(
            self.radius,
            self.velocity,
            self.flight_path_angle,
            self.longitude,
            self.latitude,
            self.azimuth,
        )
    }

    pub fn from_vector(x: &StateVector) -> Self {
        Self {
            radius: x[0],
            velocity: x[1],
            flight_path_angle: x[2],
            longitude: x[3],
            latitude: x[4],
            azimuth: x[5],
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        validate_vector(&self.to_vector())
    }
}

fn validate_vector(x: &StateVector) -> Result<(), ModelError> {
    const NAMES: [&str; STATE_DIM] = [
        "radius",
        "velocity",
        "flight-path angle",
        "longitude",
        "latitude",
        "azimuth",
    ];
    if let Some(i) = x.iter().position(|v| !v.is_finite()) {
        return Err(ModelError::NonPhysical {
            what: NAMES[i],
            value: x[i],
        });
    }
    if x[0] <= 0.0 {
        return Err(ModelError::NonPhysical {
            what: "radius",
            value: x[0],
        });
    }
    if x[1] <= 0.0 {
        return Err(ModelError::NonPhysical {
            what: "velocity",
            value: x[1],
        });
    }
    if x[4].abs() >= std::f64::consts::FRAC_PI_2 - 1e-9 {
        return Err(ModelError::PolarSingularity { latitude: x[4] });
    }
    Ok(())
}

/// `ρ = ρ̄₀ (1 + c1) exp((r₀ − r)/h_s)`
pub fn atmospheric_density(r: f64, density_fraction: f64, planet: &PlanetModel) -> f64 {
    planet.surface_density
        * (1.0 + density_fraction)
        * ((planet.reference_radius - r) / planet.scale_height).exp()
}

/// Drag and lift accelerations `(D, L)`, m/s².
pub fn aero_accels(
    r: f64,
    v: f64,
    c: &UncertainParams,
    vehicle: &VehicleModel,
    planet: &PlanetModel,
) -> (f64, f64) {
    let rho = atmospheric_density(r, c.density, planet);
    let drag = vehicle.ballistic_coeff * rho * v * v / 2.0;
    let lift = drag * vehicle.lift_to_drag * (1.0 + c.lift_to_drag);
    (drag, lift)
}

fn rhs(
    x: &StateVector,
    c: &UncertainParams,
    vehicle: &VehicleModel,
    planet: &PlanetModel,
) -> Result<StateVector, ModelError> {
    validate_vector(x)?;
    let (r, v, gamma, _theta, lat, psi) = (x[0], x[1], x[2], x[3], x[4], x[5]);
    let (drag, lift) = aero_accels(r, v, c, vehicle, planet);
    let g = planet.gravity(r);
    let (sin_g, cos_g) = gamma.sin_cos();
    let (sin_psi, cos_psi) = psi.sin_cos();
    let (sin_phi, cos_phi) = vehicle.bank_angle.sin_cos();

    let mut psi_dot = v / r * sin_psi * cos_g * lat.tan();
    if sin_phi != 0.0 {
        psi_dot += lift * sin_phi / (v * cos_g);
    }
    Ok(Vector6::new(
        v * sin_g,
        -drag - g * sin_g,
        (v / r - g / v) * cos_g + lift / v * cos_phi,
        v * cos_g * sin_psi / (r * lat.cos()),
        v * cos_g * cos_psi / r,
        psi_dot,
    ))
}

/// Time derivative of the state, `(ṙ, v̇, γ̇, θ̇, λ̇, ψ̇)`.
pub fn dynamics_rhs(
    x: &EntryState,
    c: &UncertainParams,
    vehicle: &VehicleModel,
    planet: &PlanetModel,
) -> Result<StateVector, ModelError> {
    rhs(&x.to_vector(), c, vehicle, planet)
}

/// One classic fourth-order Runge–Kutta step on the raw state vector.
pub fn rk4_step_vector(
    x: &StateVector,
    c: &UncertainParams,
    dt: f64,
    vehicle: &VehicleModel,
    planet: &PlanetModel,
) -> Result<StateVector, ModelError> {
    Ok(x + rk4_increment(x, c, dt, vehicle, planet)?)
}

/// `x(t + Δt) − x(t)` for one RK4 step. The Jacobians difference this rather
/// than the full state, whose radius entry would swamp small changes.
fn rk4_increment(
    x: &StateVector,
    c: &UncertainParams,
    dt: f64,
    vehicle: &VehicleModel,
    planet: &PlanetModel,
) -> Result<StateVector, ModelError> {
    let k1 = rhs(x, c, vehicle, planet)?;
    let k2 = rhs(&(x + k1 * (dt / 2.0)), c, vehicle, planet)?;
    let k3 = rhs(&(x + k2 * (dt / 2.0)), c, vehicle, planet)?;
    let k4 = rhs(&(x + k3 * dt), c, vehicle, planet)?;
    Ok((k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0))
}

pub fn rk4_step(
    x: &EntryState,
    c: &UncertainParams,
    dt: f64,
    vehicle: &VehicleModel,
    planet: &PlanetModel,
) -> Result<EntryState, ModelError> {
    if !(dt > 0.0) {
        return Err(ModelError::NonPhysical {
            what: "time step",
            value: dt,
        });
    }
    rk4_step_vector(&x.to_vector(), c, dt, vehicle, planet).map(|v| EntryState::from_vector(&v))
}

/// Central-difference step for state component `value`.
pub fn fd_step(value: f64) -> f64 {
    (1e-7 * value.abs()).max(1e-6)
}

/// `Φ = ∂(rk4_step)/∂x` by central differences of the step increment.
pub fn discrete_state_jacobian(
    x: &EntryState,
    c: &UncertainParams,
    dt: f64,
    vehicle: &VehicleModel,
    planet: &PlanetModel,
) -> Result<Matrix6<f64>, ModelError> {
    let x0 = x.to_vector();
    let mut phi = Matrix6::zeros();
    for j in 0..STATE_DIM {
        let h = fd_step(x0[j]);
        let mut plus = x0;
        let mut minus = x0;
        plus[j] += h;
        minus[j] -= h;
        let fp = rk4_increment(&plus, c, dt, vehicle, planet)?;
        let fm = rk4_increment(&minus, c, dt, vehicle, planet)?;
        phi.set_column(j, &((fp - fm) / (plus[j] - minus[j])));
    }
    Ok(Matrix6::identity() + phi)
}

pub const PARAM_FD_STEP: f64 = 1e-6;

/// `Ψ = ∂(rk4_step)/∂c` at `c_bar` by central differences.
pub fn discrete_param_jacobian(
    x: &EntryState,
    c_bar: &UncertainParams,
    dt: f64,
    vehicle: &VehicleModel,
    planet: &PlanetModel,
) -> Result<Matrix6x2<f64>, ModelError> {
    let x0 = x.to_vector();
    let base = c_bar.to_array();
    let mut psi = Matrix6x2::zeros();
    for j in 0..PARAM_DIM {
        let plus = c_bar.with_component(j, base[j] + PARAM_FD_STEP);
        let minus = c_bar.with_component(j, base[j] - PARAM_FD_STEP);
        let fp = rk4_increment(&x0, &plus, dt, vehicle, planet)?;
        let fm = rk4_increment(&x0, &minus, dt, vehicle, planet)?;
        psi.set_column(j, &((fp - fm) / (2.0 * PARAM_FD_STEP)));
    }
    Ok(psi)
}
