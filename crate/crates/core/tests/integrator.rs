//! Exactness, flow and convergence properties of the exponential integrator.

use std::f64::consts::TAU;
use std::sync::Arc;

use fkns_core::integrator::Integrator;
use fkns_core::model::{ForcingSpec, NoiseSpec, SimulationParams, TimeSymbol};
use fkns_core::rng::{uniform_at, NoisePath};
use fkns_core::stats::mean_se;
use fkns_core::{SpectralField, TorusSpec, Wavenumber};

fn torus() -> Arc<TorusSpec> {
    TorusSpec::new(4, 16).unwrap()
}

fn stochastic(nu: f64, dt: f64, forcing_amp: f64, sigma: f64) -> Integrator {
    let s = torus();
    Integrator::new(
        SimulationParams::new(&s, nu, dt).unwrap(),
        ForcingSpec::standard(&s, forcing_amp).unwrap(),
        Some(NoiseSpec::standard(&s, sigma).unwrap()),
    )
}

fn deterministic(nu: f64, dt: f64, forcing_amp: f64) -> Integrator {
    let s = torus();
    Integrator::new(
        SimulationParams::new(&s, nu, dt).unwrap(),
        ForcingSpec::standard(&s, forcing_amp).unwrap(),
        None,
    )
}

fn two_mode(s: &Arc<TorusSpec>) -> SpectralField {
    &SpectralField::cos_mode(s, Wavenumber::new(1, 0), 2.0).unwrap()
        + &SpectralField::cos_mode(s, Wavenumber::new(0, 2), 1.5).unwrap()
}

fn bits(w: &SpectralField) -> Vec<u64> {
    w.to_real_coords().iter().map(|x| x.to_bits()).collect()
}

#[test]
fn single_shear_mode_decays_exactly() {
    let integ = deterministic(1.0, 0.01, 0.0);
    let s = torus();
    let w0 = SpectralField::cos_mode(&s, Wavenumber::new(1, 0), 1.0).unwrap();
    let traj = integ.solve(&w0, 0.0, 10.0, TimeSymbol::new(0.3), &NoisePath::new(1, 0), 100).unwrap();
    for (t, w) in traj.times.iter().zip(&traj.states) {
        let expect = (-t).exp() * w0.norm();
        assert!((w.norm() - expect).abs() < 1e-10, "t = {t}");
    }
    assert_eq!(traj.times.last().copied(), Some(10.0));
}

#[test]
fn zero_state_without_drive_stays_zero() {
    let integ = deterministic(0.5, 0.01, 0.0);
    let w0 = SpectralField::zeros(&torus());
    let traj = integ.solve(&w0, 0.0, 1.0, TimeSymbol::new(0.0), &NoisePath::new(3, 0), 1).unwrap();
    assert!(traj.states.iter().all(|w| w.norm() == 0.0));
}

#[test]
fn empty_interval_returns_initial_state() {
    let integ = stochastic(0.5, 0.01, 1.0, 1.0);
    let w0 = two_mode(&torus());
    let traj = integ.solve(&w0, 2.0, 2.0, TimeSymbol::new(1.0), &NoisePath::new(3, 0), 1).unwrap();
    assert_eq!(traj.len(), 1);
    assert_eq!(bits(&traj.states[0]), bits(&w0));
    let (w, h) = integ.homogenized_step(&w0, TimeSymbol::new(1.0), 0.0, &NoisePath::new(3, 0), 0).unwrap();
    assert_eq!(bits(&w), bits(&w0));
    assert_eq!(h, TimeSymbol::new(1.0));
}

#[test]
fn translation_identity_is_bitwise() {
    let integ = stochastic(0.3, 0.01, 1.0, 0.8);
    let w0 = two_mode(&torus());
    for i in 0..20u64 {
        let s = (uniform_at(77, 3 * i) * 500.0).round() * 0.01;
        let t = (uniform_at(77, 3 * i + 1) * 200.0).round().max(1.0) * 0.01;
        let h = TimeSymbol::new(uniform_at(77, 3 * i + 2) * TAU);
        let path = NoisePath::new(9, i);
        let a = integ.solve(&w0, s, s + t, h, &path, usize::MAX).unwrap();
        let b = integ.solve(&w0, 0.0, t, h.shift(s), &path, usize::MAX).unwrap();
        assert_eq!(a.len(), b.len());
        assert_eq!(bits(a.last().unwrap()), bits(b.last().unwrap()), "triple {i}: s = {s}, t = {t}");
    }
}

#[test]
fn identical_inputs_reproduce_bitwise() {
    let integ = stochastic(0.3, 0.01, 1.0, 0.8);
    let w0 = two_mode(&torus());
    let path = NoisePath::new(5, 2);
    let a = integ.solve(&w0, 0.0, 3.0, TimeSymbol::new(2.0), &path, 7).unwrap();
    let b = integ.solve(&w0, 0.0, 3.0, TimeSymbol::new(2.0), &path, 7).unwrap();
    for (x, y) in a.states.iter().zip(&b.states) {
        assert_eq!(bits(x), bits(y));
    }
}

#[test]
fn symbol_returns_after_one_period() {
    let integ = stochastic(0.3, TAU / 1000.0, 1.0, 0.8);
    let h = TimeSymbol::new(1.25);
    let (_, back) = integ.homogenized_step(&two_mode(&torus()), h, TAU, &NoisePath::new(1, 1), 0).unwrap();
    let d = (back.value() - h.value()).abs();
    assert!(d.min(TAU - d) < 1e-12, "{} vs {}", back.value(), h.value());
}

#[test]
fn homogenized_flow_composes_bitwise() {
    let integ = stochastic(0.3, 0.01, 1.0, 0.8);
    let path = NoisePath::new(4, 8);
    let w0 = two_mode(&torus());
    let h = TimeSymbol::new(5.0);
    let (whole, h_whole) = integ.homogenized_step(&w0, h, 2.5, &path, 0).unwrap();
    let (mid, h_mid) = integ.homogenized_step(&w0, h, 1.0, &path, 0).unwrap();
    let first = integ.params().steps_for(1.0) as u64;
    let (end, h_end) = integ.homogenized_step(&mid, h_mid, 1.5, &path, first).unwrap();
    assert_eq!(bits(&whole), bits(&end));
    assert_eq!(h_whole.value().to_bits(), h_end.value().to_bits());
}

#[test]
fn deterministic_runs_converge_at_first_order() {
    let s = torus();
    let w0 = two_mode(&s);
    let run = |dt: f64| {
        deterministic(0.1, dt, 2.0)
            .solve(&w0, 0.0, 1.0, TimeSymbol::new(0.5), &NoisePath::new(0, 0), usize::MAX)
            .unwrap()
            .last()
            .unwrap()
            .clone()
    };
    let reference = run(1.0 / 12800.0);
    let errors: Vec<f64> = [1.0 / 50.0, 1.0 / 100.0, 1.0 / 200.0, 1.0 / 400.0]
        .iter()
        .map(|&dt| (&run(dt) - &reference).norm())
        .collect();
    for pair in errors.windows(2) {
        let order = (pair[0] / pair[1]).log2();
        assert!((0.8..1.2).contains(&order), "observed order {order}, errors {errors:?}");
    }
}

#[test]
fn energy_budget_closes_at_first_order() {
    // d‖w‖²/dt = −2ν‖w‖²_{H¹} + 2⟨f(β_t h), w⟩; advection drops out.
    let s = torus();
    let w0 = two_mode(&s);
    let nu = 0.1;
    let h = TimeSymbol::new(0.5);
    let defect = |dt: f64| {
        let integ = deterministic(nu, dt, 2.0);
        let traj = integ.solve(&w0, 0.0, 1.0, h, &NoisePath::new(0, 0), 1).unwrap();
        let rate: Vec<f64> = traj
            .times
            .iter()
            .zip(&traj.states)
            .map(|(&t, w)| -2.0 * nu * w.sobolev_norm(1.0).powi(2) + 2.0 * integ.forcing().eval(h.shift(t)).inner(w))
            .collect();
        let integral: f64 = rate.windows(2).map(|p| 0.5 * dt * (p[0] + p[1])).sum();
        let change = traj.last().unwrap().norm_sq() - w0.norm_sq();
        (change - integral).abs()
    };
    let coarse = defect(0.02);
    let fine = defect(0.01);
    assert!(coarse < 0.1 * w0.norm_sq(), "{coarse}");
    let order = (coarse / fine).log2();
    assert!((0.8..1.3).contains(&order), "budget defect {coarse} → {fine}, order {order}");
}

#[test]
fn mean_energy_obeys_dissipative_bound() {
    let nu = 0.5;
    let integ = stochastic(nu, 0.01, 1.0, 1.0);
    let s = torus();
    let h = TimeSymbol::new(0.0);

    // C: stationary mean energy, fitted once from a long run past burn-in.
    let long = integ
        .solve(&SpectralField::zeros(&s), 0.0, 400.0, h, &NoisePath::new(21, 0), 10)
        .unwrap();
    let tail: Vec<f64> = long.states[long.len() / 5..].iter().map(|w| w.norm_sq()).collect();
    let c = mean_se(&tail).0;

    let w0 = two_mode(&s).scaled(3.0);
    let e0 = w0.norm_sq();
    for &t in &[0.5, 1.0, 2.0, 5.0] {
        let energies: Vec<f64> = (0..1000u64)
            .map(|i| {
                let (w, _) = integ.homogenized_step(&w0, h, t, &NoisePath::new(22, i), 0).unwrap();
                w.norm_sq()
            })
            .collect();
        let (m, se) = mean_se(&energies);
        let bound = (-nu * t).exp() * e0 + c;
        assert!(m - 3.0 * se <= bound, "t = {t}: mean {m} ± {se}, bound {bound}");
    }
}
