//! Independent oracles shared by the integration tests: hand-derived
//! continuous Jacobians, the exact derivative of one RK4 step built from
//! them, and random problem generators.

#![allow(dead_code)]

use entrynav::dynamics::{dynamics_rhs, EntryState, PlanetModel, UncertainParams, VehicleModel};
use entrynav::measurement::{beacon_position, spherical_to_cartesian, BeaconEphemeris};
use nalgebra::{DMatrix, Matrix3x2, Matrix6, Matrix6x2, Vector6};
use rand::Rng;
use rand_distr::StandardNormal;

pub fn mars_vehicle() -> VehicleModel {
    VehicleModel {
        ballistic_coeff: 0.016,
        lift_to_drag: 0.156,
        bank_angle: 0.0,
    }
}

/// Continuous `F = ∂f/∂x` for zero bank angle.
pub fn analytic_f(x: &Vector6<f64>, c: &UncertainParams, veh: &VehicleModel, planet: &PlanetModel) -> Matrix6<f64> {
    let (r, v, g_ang, _th, lat, psi) = (x[0], x[1], x[2], x[3], x[4], x[5]);
    let rho = planet.surface_density * (1.0 + c.density) * ((planet.reference_radius - r) / planet.scale_height).exp();
    let d = veh.ballistic_coeff * rho * v * v / 2.0;
    let l = d * veh.lift_to_drag * (1.0 + c.lift_to_drag);
    let hs = planet.scale_height;
    let g = planet.mu / (r * r);
    let (sg, cg) = g_ang.sin_cos();
    let (sp, cp) = psi.sin_cos();
    let (sl, cl) = lat.sin_cos();
    let tl = sl / cl;

    let f3 = v * cg * sp / (r * cl);
    let f4 = v * cg * cp / r;
    let f5 = v / r * sp * cg * tl;

    let mut f = Matrix6::zeros();
    f[(0, 1)] = sg;
    f[(0, 2)] = v * cg;

    f[(1, 0)] = d / hs + 2.0 * g / r * sg;
    f[(1, 1)] = -2.0 * d / v;
    f[(1, 2)] = -g * cg;

    f[(2, 0)] = (-v / (r * r) + 2.0 * g / (r * v)) * cg - l / (hs * v);
    f[(2, 1)] = (1.0 / r + g / (v * v)) * cg + l / (v * v);
    f[(2, 2)] = -(v / r - g / v) * sg;

    f[(3, 0)] = -f3 / r;
    f[(3, 1)] = f3 / v;
    f[(3, 2)] = -v * sg * sp / (r * cl);
    f[(3, 4)] = f3 * tl;
    f[(3, 5)] = v * cg * cp / (r * cl);

    f[(4, 0)] = -f4 / r;
    f[(4, 1)] = f4 / v;
    f[(4, 2)] = -v * sg * cp / r;
    f[(4, 5)] = -v * cg * sp / r;

    f[(5, 0)] = -f5 / r;
    f[(5, 1)] = f5 / v;
    f[(5, 2)] = -v / r * sp * sg * tl;
    f[(5, 4)] = v / r * sp * cg / (cl * cl);
    f[(5, 5)] = v / r * cp * cg * tl;
    f
}

/// Continuous `Fᶜ = ∂f/∂c`.
pub fn analytic_fc(x: &Vector6<f64>, c: &UncertainParams, veh: &VehicleModel, planet: &PlanetModel) -> Matrix6x2<f64> {
    let (r, v) = (x[0], x[1]);
    let rho_bar = planet.surface_density * ((planet.reference_radius - r) / planet.scale_height).exp();
    let d_per_c1 = veh.ballistic_coeff * rho_bar * v * v / 2.0;
    let d = d_per_c1 * (1.0 + c.density);
    let mut fc = Matrix6x2::zeros();
    fc[(1, 0)] = -d_per_c1;
    fc[(2, 0)] = d_per_c1 * veh.lift_to_drag * (1.0 + c.lift_to_drag) / v;
    fc[(2, 1)] = d * veh.lift_to_drag / v;
    fc
}

fn rhs(x: &Vector6<f64>, c: &UncertainParams, veh: &VehicleModel, planet: &PlanetModel) -> Vector6<f64> {
    dynamics_rhs(&EntryState::from_vector(x), c, veh, planet).unwrap()
}

/// Exact `∂/∂x` and `∂/∂c` of one classic RK4 step, by the chain rule
/// through the four stages.
pub fn analytic_rk4_jacobians(
    x: &Vector6<f64>,
    c: &UncertainParams,
    dt: f64,
    veh: &VehicleModel,
    planet: &PlanetModel,
) -> (Matrix6<f64>, Matrix6x2<f64>) {
    let i = Matrix6::identity();
    let k1 = rhs(x, c, veh, planet);
    let x2 = x + k1 * (dt / 2.0);
    let k2 = rhs(&x2, c, veh, planet);
    let x3 = x + k2 * (dt / 2.0);
    let k3 = rhs(&x3, c, veh, planet);
    let x4 = x + k3 * dt;

    let d1 = analytic_f(x, c, veh, planet);
    let d2 = analytic_f(&x2, c, veh, planet) * (i + d1 * (dt / 2.0));
    let d3 = analytic_f(&x3, c, veh, planet) * (i + d2 * (dt / 2.0));
    let d4 = analytic_f(&x4, c, veh, planet) * (i + d3 * dt);
    let phi = i + (d1 + d2 * 2.0 + d3 * 2.0 + d4) * (dt / 6.0);

    let e1 = analytic_fc(x, c, veh, planet);
    let e2 = analytic_f(&x2, c, veh, planet) * e1 * (dt / 2.0) + analytic_fc(&x2, c, veh, planet);
    let e3 = analytic_f(&x3, c, veh, planet) * e2 * (dt / 2.0) + analytic_fc(&x3, c, veh, planet);
    let e4 = analytic_f(&x4, c, veh, planet) * e3 * dt + analytic_fc(&x4, c, veh, planet);
    let psi = (e1 + e2 * 2.0 + e3 * 2.0 + e4) * (dt / 6.0);
    (phi, psi)
}

/// Analytic `H` (6×6) and accelerometer rows of `Hᶜ` for zero bank angle.
pub fn analytic_h(
    x: &Vector6<f64>,
    t: f64,
    beacons: &[BeaconEphemeris; 3],
    veh: &VehicleModel,
    planet: &PlanetModel,
) -> (Matrix6<f64>, Matrix3x2<f64>) {
    let (r, v, lon, lat) = (x[0], x[1], x[3], x[4]);
    let rho = planet.surface_density * ((planet.reference_radius - r) / planet.scale_height).exp();
    let d = veh.ballistic_coeff * rho * v * v / 2.0;
    let l = d * veh.lift_to_drag;
    let mut h = Matrix6::zeros();
    h[(0, 0)] = d / planet.scale_height;
    h[(0, 1)] = -2.0 * d / v;
    h[(2, 0)] = -l / planet.scale_height;
    h[(2, 1)] = 2.0 * l / v;

    let p = spherical_to_cartesian(r, lon, lat);
    let (sth, cth) = lon.sin_cos();
    let (sl, cl) = lat.sin_cos();
    let dp_dr = p / r;
    let dp_dlon = nalgebra::Vector3::new(-r * cl * sth, r * cl * cth, 0.0);
    let dp_dlat = nalgebra::Vector3::new(-r * sl * cth, -r * sl * sth, r * cl);
    for (k, b) in beacons.iter().enumerate() {
        let rel = p - beacon_position(b, t);
        let u = rel / rel.norm();
        h[(3 + k, 0)] = u.dot(&dp_dr);
        h[(3 + k, 3)] = u.dot(&dp_dlon);
        h[(3 + k, 4)] = u.dot(&dp_dlat);
    }
    let hc = Matrix3x2::new(-d, 0.0, 0.0, 0.0, l, d * veh.lift_to_drag);
    (h, hc)
}

/// A state inside the entry envelope of the shipped scenario.
pub fn random_entry_state(rng: &mut impl Rng, planet: &PlanetModel) -> EntryState {
    EntryState {
        radius: planet.reference_radius + rng.random_range(5_000.0..120_000.0),
        velocity: rng.random_range(400.0..6_000.0),
        flight_path_angle: rng.random_range(-25f64..-1.0).to_radians(),
        longitude: rng.random_range(-180f64..180.0).to_radians(),
        latitude: rng.random_range(-60f64..60.0).to_radians(),
        azimuth: rng.random_range(-180f64..180.0).to_radians(),
    }
}

pub fn random_matrix(rng: &mut impl Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

pub fn random_spd(rng: &mut impl Rng, n: usize) -> DMatrix<f64> {
    let a = random_matrix(rng, n, n);
    &a * a.transpose() + DMatrix::identity(n, n) * 0.5
}

/// Largest row-wise relative difference, rows compared by Euclidean norm.
pub fn row_relative<const R: usize, const C: usize>(
    approx: &nalgebra::SMatrix<f64, R, C>,
    exact: &nalgebra::SMatrix<f64, R, C>,
) -> f64 {
    (0..R)
        .map(|i| {
            let scale = exact.row(i).norm();
            let diff = (approx.row(i) - exact.row(i)).norm();
            if scale > 0.0 {
                diff / scale
            } else {
                diff
            }
        })
        .fold(0.0, f64::max)
}

/// Column-wise relative difference.
pub fn col_relative<const R: usize, const C: usize>(
    approx: &nalgebra::SMatrix<f64, R, C>,
    exact: &nalgebra::SMatrix<f64, R, C>,
) -> f64 {
    row_relative(&approx.transpose(), &exact.transpose())
}

/// `Tr(P⁺) + Tr(S⁺ W S⁺ᵀ)` written out directly.
pub fn desensitized_cost(
    k: &DMatrix<f64>,
    p: &DMatrix<f64>,
    h: &DMatrix<f64>,
    r: &DMatrix<f64>,
    s: &DMatrix<f64>,
    gamma: &DMatrix<f64>,
    w: &[f64],
) -> f64 {
    let n = p.nrows();
    let a = DMatrix::identity(n, n) - k * h;
    let post = &a * p * a.transpose() + k * r * k.transpose();
    let s_post = s - k * gamma;
    let mut penalty = 0.0;
    for (j, wj) in w.iter().enumerate() {
        penalty += wj * s_post.column(j).norm_squared();
    }
    post.trace() + penalty
}

/// Central-difference gradient of `f` with respect to every entry of `k`.
pub fn fd_gradient(k: &DMatrix<f64>, step: f64, f: impl Fn(&DMatrix<f64>) -> f64) -> DMatrix<f64> {
    DMatrix::from_fn(k.nrows(), k.ncols(), |i, j| {
        let mut plus = k.clone();
        let mut minus = k.clone();
        plus[(i, j)] += step;
        minus[(i, j)] -= step;
        (f(&plus) - f(&minus)) / (2.0 * step)
    })
}
