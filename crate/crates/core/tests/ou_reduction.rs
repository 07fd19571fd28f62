//! Linear one-mode reduction against a dense-grid transfer-operator oracle.

mod support;

use fkns_core::eigen::{build_triple, eigenmeasure_at, KbConfig, PullbackConfig, SymbolGrid, TripleConfig};
use fkns_core::feynman_kac::FkEngine;
use fkns_core::integrator::Integrator;
use fkns_core::model::{ForcingSpec, NoiseSpec, SimulationParams, TimeSymbol};
use fkns_core::potential::{Observable, PotentialSpec, PotentialTerm, TrigProfile};
use fkns_core::{SpectralField, TorusSpec, Wavenumber};
use support::ou_grid::OuGrid;

const NU: f64 = 1.0;
const SIGMA: f64 = 1.0;
const DT: f64 = 0.02;
const GAMMA: f64 = 1.0;
const SQUASH: f64 = 20.0;

fn engine(seed: u64) -> FkEngine {
    let spec = TorusSpec::new(1, 4).unwrap();
    let params = SimulationParams::new(&spec, NU, DT).unwrap();
    let noise = NoiseSpec::cosine_modes(&spec, &[Wavenumber::new(1, 0)], SIGMA).unwrap();
    let integ = Integrator::new(params, ForcingSpec::zero(&spec), Some(noise)).linear();
    FkEngine::new(integ, seed)
}

/// `−γ s tanh(‖w‖²/s)`; on the reduced coordinate `x = ŵ(1,0)`, `‖w‖² = 2x²`.
fn potential() -> PotentialSpec {
    PotentialSpec::new(
        0.0,
        vec![PotentialTerm::new(Observable::Energy, SQUASH, TrigProfile::constant(-GAMMA)).unwrap()],
    )
}

fn v_scalar(x: f64) -> f64 {
    -GAMMA * SQUASH * (2.0 * x * x / SQUASH).tanh()
}

fn oracle() -> OuGrid {
    let decay = (-NU * DT).exp();
    let b = 0.5 * SIGMA * DT.sqrt();
    OuGrid::new(decay, b, DT, v_scalar, 400, 6.0)
}

fn units() -> usize {
    (1.0 / DT).round() as usize
}

fn coord(w: &SpectralField) -> f64 {
    w.coeff(Wavenumber::new(1, 0)).re
}

#[test]
fn feynman_kac_semigroup_matches_grid_at_t5() {
    let e = engine(11);
    let grid = oracle();
    let expect = grid.interp(&grid.propagate_one(5 * units()), 0.0);
    let w0 = SpectralField::zeros(e.integrator().torus());
    let est = e
        .fk_apply(&potential(), |_: &SpectralField, _| 1.0, 0.0, 5.0, TimeSymbol::new(0.0), &w0, 20000, 1)
        .unwrap();
    let rel = (est.value - expect).abs() / expect;
    assert!(rel < 0.01, "P1 = {} ± {}, grid {expect}, rel {rel}", est.value, est.std_error);
}

#[test]
fn principal_eigenvalue_matches_grid() {
    let e = engine(12);
    let (lambda, _, _) = oracle().principal(units(), 80);
    let cfg = PullbackConfig {
        n_particles: 4000,
        n_iters: 40,
        ..Default::default()
    };
    let chains = eigenmeasure_at(&e, &potential(), &[TimeSymbol::new(0.0)], &cfg).unwrap();
    let logs = &chains[0].1.log_multipliers[8..];
    let est = logs.iter().sum::<f64>() / logs.len() as f64;
    let rel = (est - lambda).abs() / lambda.abs();
    assert!(rel < 0.01, "λ̂ = {est}, grid {lambda}, rel {rel}");
}

#[test]
fn eigenmeasure_second_moment_matches_grid() {
    let e = engine(13);
    let grid = oracle();
    let (_, left, _) = grid.principal(units(), 80);
    let expect: f64 = left.iter().zip(&grid.x).map(|(p, x)| p * x * x).sum();
    let cfg = PullbackConfig {
        n_particles: 4000,
        n_iters: 12,
        ..Default::default()
    };
    let targets = SymbolGrid::new(16).unwrap().nodes();
    let chains = eigenmeasure_at(&e, &potential(), &targets, &cfg).unwrap();
    let est = chains
        .iter()
        .map(|(g, _)| g.integrate(|w| coord(w).powi(2)))
        .sum::<f64>()
        / chains.len() as f64;
    let rel = (est - expect).abs() / expect;
    assert!(rel < 0.02, "E x² = {est}, grid {expect}, rel {rel}");
}

#[test]
fn eigenfunction_table_matches_grid() {
    let e = engine(14);
    let grid = oracle();
    let (_, _, right) = grid.principal(units(), 80);
    let cfg = TripleConfig {
        pullback: PullbackConfig {
            n_particles: 4000,
            n_iters: 12,
            ..Default::default()
        },
        kb: Some(KbConfig {
            k_terms: 12,
            n_paths: 4000,
            n_eval: 4,
            stream: 5,
        }),
        multiplier_stream: 6,
    };
    let triple = build_triple(&e, &potential(), &SymbolGrid::new(1).unwrap(), &cfg).unwrap();
    let table = &triple.eigf.as_ref().unwrap().nodes[0];
    for (p, f) in table.points.iter().zip(&table.values) {
        let expect = grid.interp(&right, coord(p));
        let rel = (f - expect).abs() / expect;
        assert!(rel < 0.05, "F({}) = {f}, grid {expect}, rel {rel}", coord(p));
    }
}
