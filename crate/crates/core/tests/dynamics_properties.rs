mod common;

use common::*;
use entrynav::dynamics::{
    discrete_param_jacobian, discrete_state_jacobian, dynamics_rhs, fd_step, rk4_step, EntryState,
    PlanetModel, UncertainParams,
};
use entrynav::measurement::measurement_jacobians;
use entrynav::ScenarioConfig;
use nalgebra::{Matrix3x2, Matrix6, Vector6};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn state(seed: u64) -> EntryState {
    random_entry_state(&mut ChaCha8Rng::seed_from_u64(seed), &PlanetModel::mars())
}

fn fd_continuous(x: &EntryState, c: &UncertainParams) -> Matrix6<f64> {
    let (veh, planet) = (mars_vehicle(), PlanetModel::mars());
    let xv = x.to_vector();
    let mut f = Matrix6::zeros();
    for j in 0..6 {
        let h = fd_step(xv[j]);
        let (mut p, mut m) = (xv, xv);
        p[j] += h;
        m[j] -= h;
        let fp = dynamics_rhs(&EntryState::from_vector(&p), c, &veh, &planet).unwrap();
        let fm = dynamics_rhs(&EntryState::from_vector(&m), c, &veh, &planet).unwrap();
        f.set_column(j, &((fp - fm) / (p[j] - m[j])));
    }
    f
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn continuous_jacobian_matches_hand_derivation(seed in any::<u64>(), c1 in -0.15f64..0.15, c2 in -0.1f64..0.1) {
        let x = state(seed);
        let c = UncertainParams::new(c1, c2);
        let exact = analytic_f(&x.to_vector(), &c, &mars_vehicle(), &PlanetModel::mars());
        prop_assert!(row_relative(&fd_continuous(&x, &c), &exact) <= 1e-4);
    }

    #[test]
    fn discrete_jacobians_match_the_rk4_chain_rule(seed in any::<u64>()) {
        let x = state(seed);
        let c = UncertainParams::NOMINAL;
        let (veh, planet) = (mars_vehicle(), PlanetModel::mars());
        let (phi, psi) = analytic_rk4_jacobians(&x.to_vector(), &c, 0.1, &veh, &planet);
        let phi_fd = discrete_state_jacobian(&x, &c, 0.1, &veh, &planet).unwrap();
        let eye = Matrix6::identity();
        prop_assert!(row_relative(&(phi_fd - eye), &(phi - eye)) <= 1e-4);
        // Ψ is tiny high in the atmosphere. The radius increment (~100 m per
        // step) differenced over 1e-6 leaves ~1e-8 of round-off.
        let psi_fd = discrete_param_jacobian(&x, &c, 0.1, &veh, &planet).unwrap();
        for j in 0..2 {
            let err = (psi_fd.column(j) - psi.column(j)).norm();
            prop_assert!(err <= 1e-4 * psi.column(j).norm() + 1e-7, "column {} error {}", j, err);
        }
    }

    #[test]
    fn measurement_jacobians_match_geometry(seed in any::<u64>(), t in 0.0f64..400.0) {
        let cfg = ScenarioConfig::mars_entry();
        let x = state(seed);
        let (veh, planet) = (mars_vehicle(), PlanetModel::mars());
        let jac = measurement_jacobians(&x, &UncertainParams::NOMINAL, t, &cfg.beacons, &veh, &planet).unwrap();
        let (h, hc) = analytic_h(&x.to_vector(), t, &cfg.beacons, &veh, &planet);
        prop_assert!(row_relative(&jac.h, &h) <= 1e-4);
        prop_assert!(col_relative(&Matrix3x2::from_fn(|i, j| jac.hc[(i, j)]), &hc) <= 1e-4);
    }
}

#[test]
fn short_step_jacobian_matches_series() {
    let cfg = ScenarioConfig::mars_entry();
    let (veh, planet) = (mars_vehicle(), PlanetModel::mars());
    let x = cfg.truth_initial;
    let c = UncertainParams::NOMINAL;
    let dt = 0.01;
    let xv = x.to_vector();
    let f = analytic_f(&xv, &c, &veh, &planet);
    // F varies along the arc, so the second-order term is (F² + Ḟ)Δt²/2
    // with Ḟ = (∂F/∂x)·f; without Ḟ the ∂r/∂γ entry is off by 1.6e-6.
    let rate = dynamics_rhs(&x, &c, &veh, &planet).unwrap();
    let h = 1e-3;
    let f_dot = (analytic_f(&(xv + rate * h), &c, &veh, &planet) - analytic_f(&(xv - rate * h), &c, &veh, &planet))
        / (2.0 * h);
    let series = Matrix6::identity() + f * dt + (f * f + f_dot) * (dt * dt / 2.0);
    let phi = discrete_state_jacobian(&x, &c, dt, &veh, &planet).unwrap();
    let rel = (phi - series).norm() / series.norm();
    assert!(rel <= 1e-6, "{rel}");
    assert!((phi[(0, 1)] - dt * x.flight_path_angle.sin()).abs() <= 1e-3 * dt);
}

fn propagate(x: EntryState, planet: &PlanetModel, dt: f64, span: f64) -> Vector6<f64> {
    let mut s = x;
    for _ in 0..(span / dt).round() as usize {
        s = rk4_step(&s, &UncertainParams::NOMINAL, dt, &mars_vehicle(), planet).unwrap();
    }
    s.to_vector()
}

#[test]
fn rk4_is_fourth_order() {
    let cfg = ScenarioConfig::mars_entry();
    let planet = PlanetModel::mars();
    let x0 = cfg.truth_initial;
    let reference = propagate(x0, &planet, 1e-3, 10.0);
    let scale = reference.map(|v| v.abs().max(1.0));
    let err = |dt| (propagate(x0, &planet, dt, 10.0) - reference).component_div(&scale).amax();
    let (e1, e2, e3) = (err(5.0), err(2.5), err(1.25));
    for (a, b) in [(e1, e2), (e2, e3)] {
        assert!((a / b).log2() >= 3.8, "order {}", (a / b).log2());
    }
}

#[test]
fn step_halving_agrees_in_altitude() {
    let cfg = ScenarioConfig::mars_entry();
    let planet = PlanetModel::mars();
    let one = propagate(cfg.truth_initial, &planet, 0.1, 0.1);
    let two = propagate(cfg.truth_initial, &planet, 0.05, 0.1);
    assert!((one[0] - two[0]).abs() < 1e-6);
}

#[test]
fn vacuum_arc_conserves_energy() {
    let cfg = ScenarioConfig::mars_entry();
    let vacuum = PlanetModel {
        surface_density: 0.0,
        ..PlanetModel::mars()
    };
    let energy = |x: &Vector6<f64>| x[1] * x[1] / 2.0 - vacuum.mu / x[0];
    let x0 = cfg.truth_initial.to_vector();
    let x1 = propagate(cfg.truth_initial, &vacuum, 0.1, 400.0);
    assert!(((energy(&x1) - energy(&x0)) / energy(&x0)).abs() <= 1e-6);
}

