//! Acceptance suite at desk scale (K = 8, N = 32, four cosine noise modes,
//! the reference workbench defaults). Prints one PASS/FAIL line per
//! criterion and exits non-zero if any criterion fails.

#[path = "../../core/tests/support/ou_grid.rs"]
mod ou_grid;

use std::f64::consts::TAU;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use anyhow::{ensure, Context, Result};
use fkns_core::eigen::{
    build_triple, eigenmeasure_at, eigenvalue_cocycle_residual, normalization_check, DoobOperator,
    EigenTripleEstimate, KbConfig, PullbackConfig, SymbolGrid, TrigInterpolant, TripleConfig,
};
use fkns_core::feynman_kac::FkEngine;
use fkns_core::hormander::{bracket_closure, DEFAULT_RANK_TOL};
use fkns_core::integrator::Integrator;
use fkns_core::ldp::{
    clt_from_averages, free_coordinates, functional_averages, legendre, measure_features, pressure_direct,
    pressure_direct_symbol_average, pressure_properties, pressure_spectral, InitialMeasure, LegendreConfig,
    PathBankOracle,
};
use fkns_core::model::{ForcingSpec, NoiseSpec, SimulationParams, TimeSymbol};
use fkns_core::potential::{Observable, PotentialSpec, PotentialTerm, TrigProfile};
use fkns_core::rng::{derive_stream, uniform_at, NoisePath};
use fkns_core::{SpectralField, TorusSpec, Wavenumber};
use fkns_workbench::commands::pressure::random_coordinates;
use fkns_workbench::config::Config;
use fkns_workbench::experiment::Experiment;

const SEED: u64 = 20240;

struct Verdict {
    passed: bool,
    detail: String,
}

fn verdict(passed: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        passed,
        detail: detail.into(),
    }
}

fn bits(w: &SpectralField) -> Vec<u64> {
    w.to_real_coords().iter().map(|x| x.to_bits()).collect()
}

/// Desk-scale configuration shared by most criteria, with its eigen-triples
/// built once.
struct Desk {
    exp: Experiment,
    grid: SymbolGrid,
    relaxed: InitialMeasure,
    zero_triple: Option<EigenTripleEstimate>,
    v0_triple: Option<EigenTripleEstimate>,
}

impl Desk {
    fn new() -> Result<Self> {
        let mut config = Config::default();
        config.set_value("seed", SEED)?;
        let exp = Experiment::new(config)?;
        let grid = exp.symbol_grid()?;
        let relaxed = InitialMeasure::Relaxed {
            from: SpectralField::zeros(&exp.torus),
            time: 10.0,
        };
        Ok(Self {
            exp,
            grid,
            relaxed,
            zero_triple: None,
            v0_triple: None,
        })
    }

    fn engine(&self) -> &FkEngine {
        &self.exp.engine
    }

    fn stream(&mut self, name: &str) -> u64 {
        self.exp.ledger.stream(name)
    }

    fn triple_config(&mut self, label: &str, kb: bool) -> Result<TripleConfig> {
        let mut cfg = self.exp.triple_config(label, kb)?;
        if let Some(k) = cfg.kb.as_mut() {
            k.n_eval = 3;
        }
        Ok(cfg)
    }

    fn zero_triple(&mut self) -> Result<&EigenTripleEstimate> {
        if self.zero_triple.is_none() {
            let mut cfg = self.triple_config("zero", true)?;
            cfg.kb = cfg.kb.map(|k| KbConfig { n_paths: 32, ..k });
            self.zero_triple = Some(build_triple(self.engine(), &PotentialSpec::zero(), &self.grid, &cfg)?);
        }
        Ok(self.zero_triple.as_ref().unwrap())
    }

    fn v0_triple(&mut self) -> Result<&EigenTripleEstimate> {
        if self.v0_triple.is_none() {
            let cfg = self.triple_config("v0", true)?;
            let v = self.exp.potential.clone();
            self.v0_triple = Some(build_triple(self.engine(), &v, &self.grid, &cfg)?);
        }
        Ok(self.v0_triple.as_ref().unwrap())
    }
}

// 1. Single shear mode under the deterministic dynamics.
fn shear_decay() -> Result<Verdict> {
    let s = TorusSpec::new(8, 32)?;
    let nu = 0.5;
    let integ = Integrator::new(SimulationParams::new(&s, nu, 0.02)?, ForcingSpec::zero(&s), None);
    let k = Wavenumber::new(1, 0);
    let w0 = SpectralField::cos_mode(&s, k, 1.0)?;
    let traj = integ.solve(&w0, 0.0, 10.0, TimeSymbol::new(0.4), &NoisePath::new(SEED, 0), 10)?;
    let mut worst = 0.0f64;
    for (t, w) in traj.times.iter().zip(&traj.states) {
        let expect = w0.scaled((-nu * k.norm_sq() * t).exp());
        let d = w
            .to_real_coords()
            .iter()
            .zip(expect.to_real_coords())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        worst = worst.max(d);
    }
    let t_end = traj.times.last().copied().unwrap_or(0.0);
    Ok(verdict(
        worst <= 1e-10 && (t_end - 10.0).abs() < 1e-9,
        format!("max coefficient error {worst:.2e} over t ∈ [0, {t_end}] (tol 1e-10)"),
    ))
}

// 2. Translation identity of the solution map.
fn translation_identity(desk: &mut Desk) -> Result<Verdict> {
    let stream = desk.stream("acceptance.translation");
    let integ = desk.engine().integrator();
    let dt = integ.dt();
    let w0 = &SpectralField::cos_mode(&desk.exp.torus, Wavenumber::new(1, 0), 1.0)?
        + &SpectralField::cos_mode(&desk.exp.torus, Wavenumber::new(1, 1), 0.5)?;
    let mut equal = 0;
    for i in 0..20u64 {
        let u = |j: u64| uniform_at(SEED, derive_stream(stream, &[i, j]));
        let s = (u(0) * 5.0 / dt).round() * dt;
        let t = (u(1) * 2.0 / dt).round().max(1.0) * dt;
        let h = TimeSymbol::new(u(2) * TAU);
        let path = desk.engine().path(stream, &[i]);
        let a = integ.solve(&w0, s, s + t, h, &path, usize::MAX)?;
        let b = integ.solve(&w0, 0.0, t, h.shift(s), &path, usize::MAX)?;
        if matches!((a.last(), b.last()), (Some(x), Some(y)) if bits(x) == bits(y)) {
            equal += 1;
        }
    }
    Ok(verdict(equal == 20, format!("{equal} of 20 random (s, t, h) triples bitwise equal")))
}

// 3. Feynman-Kac identities for V = 0, V ≡ c and V + c.
fn fk_identities(desk: &mut Desk) -> Result<Verdict> {
    let stream = desk.stream("acceptance.fk");
    let e = desk.engine();
    let c = 0.37;
    let v = desk.exp.potential.clone();
    let vc = v.shifted(c);
    let (zero, constant) = (PotentialSpec::zero(), PotentialSpec::constant(c));
    let (s, t) = (0.5, 2.5);
    let h = TimeSymbol::new(1.1);
    let w0 = SpectralField::zeros(&desk.exp.torus);
    let samples = e.samples(&[&zero, &constant, &v, &vc], |_: &SpectralField, _| 1.0, s, t, h, &w0, 1000, stream)?;
    let elapsed = e.steps_for(t - s) as f64 * e.dt();
    let unit = samples.iter().all(|p| p.log_weights[0].exp() == 1.0);
    let expect = (c * elapsed).exp();
    let exact = samples.iter().all(|p| p.log_weights[1].exp() == expect);
    let shift = samples
        .iter()
        .map(|p| (p.log_weights[3] - p.log_weights[2] - c * elapsed).abs())
        .fold(0.0, f64::max);
    Ok(verdict(
        unit && exact && shift <= 1e-12,
        format!(
            "1000 paths: P1 = 1 exact {unit}; P1 = e^(c(t−s)) exact {exact}; max per-path shift defect {shift:.1e}"
        ),
    ))
}

// 4. One-mode linear reduction against the dense-grid transfer operator.
fn ou_oracle() -> Result<Verdict> {
    const NU: f64 = 1.0;
    const DT: f64 = 0.02;
    const SQUASH: f64 = 20.0;
    let s = TorusSpec::new(1, 4)?;
    let noise = NoiseSpec::cosine_modes(&s, &[Wavenumber::new(1, 0)], 1.0)?;
    let integ = Integrator::new(SimulationParams::new(&s, NU, DT)?, ForcingSpec::zero(&s), Some(noise)).linear();
    let engine = FkEngine::new(integ, SEED);
    let v = PotentialSpec::new(
        0.0,
        vec![PotentialTerm::new(Observable::Energy, SQUASH, TrigProfile::constant(-1.0))?],
    );
    // ‖w‖² = 2x² on the reduced coordinate x = ŵ(1,0).
    let grid = ou_grid::OuGrid::new((-NU * DT).exp(), 0.5 * DT.sqrt(), DT, |x| -SQUASH * (2.0 * x * x / SQUASH).tanh(), 400, 6.0);
    let units = (1.0 / DT).round() as usize;
    let (oracle, _, _) = grid.principal(units, 80);
    let cfg = PullbackConfig {
        n_particles: 4000,
        n_iters: 40,
        stream: 4,
        ..Default::default()
    };
    let chains = eigenmeasure_at(&engine, &v, &[TimeSymbol::new(0.0)], &cfg)?;
    let logs = &chains[0].1.log_multipliers[8..];
    let est = logs.iter().sum::<f64>() / logs.len() as f64;
    let rel = (est - oracle).abs() / oracle.abs();
    Ok(verdict(
        rel < 0.01,
        format!("λ̂ = {est:.5}, 400-point grid {oracle:.5}, relative error {rel:.2e} (tol 1e-2)"),
    ))
}

// 5. The triple of V = 0.
fn zero_triple(desk: &mut Desk) -> Result<Verdict> {
    let t = desk.zero_triple()?;
    let lambda_ok = (0..t.grid.len()).all(|j| t.lambda(j).abs() <= 3.0 * t.lambda_se[j]);
    let table = t.eigf.as_ref().context("eigenfunction table")?;
    let mut f_ok = true;
    let mut worst = 0.0f64;
    for node in &table.nodes {
        for (f, se) in node.values.iter().zip(&node.std_errors) {
            worst = worst.max((f - 1.0).abs());
            f_ok &= (f - 1.0).abs() <= 3.0 * se;
        }
    }
    let max_lambda = t.lambda_table().iter().map(|l| l.abs()).fold(0.0, f64::max);
    Ok(verdict(
        lambda_ok && f_ok,
        format!("sup |λ̂⁰| = {max_lambda:e}, max |F̂ − 1| = {worst:e} over {} nodes", t.grid.len()),
    ))
}

// 6. Shift equivariance of the triple.
fn shift_equivariance(desk: &mut Desk) -> Result<Verdict> {
    let c = 0.8;
    let v = desk.exp.potential.clone();
    let cfg = desk.exp.triple_config("v0", false)?;
    let base = desk.v0_triple()?.clone();
    // The ledger returns the same streams for the same label.
    let shifted = build_triple(desk.engine(), &v.shifted(c), &desk.grid, &cfg)?;
    let same = base
        .gamma
        .iter()
        .zip(&shifted.gamma)
        .all(|(a, b)| a.particles() == b.particles() && a.weights() == b.weights());
    let dl = base
        .lambda_table()
        .iter()
        .zip(shifted.lambda_table())
        .map(|(a, b)| (b - a - c).abs())
        .fold(0.0, f64::max);
    Ok(verdict(
        same && dl <= 1e-12,
        format!("Γ^(V+c) = Γ^V per particle: {same}; max |λ^(V+c) − λ^V − c| = {dl:e}"),
    ))
}

// 7. Eigenvalue cocycle at m = l = 1.
fn cocycle(desk: &mut Desk) -> Result<Verdict> {
    let extra = desk.exp.triple_config("cocycle", false)?.pullback;
    let stream = desk.stream("acceptance.cocycle");
    let t = desk.v0_triple()?.clone();
    let report = eigenvalue_cocycle_residual(desk.engine(), &t, 1, 1, &extra, stream)?;
    Ok(verdict(
        report.max_z() <= 3.0,
        format!(
            "max z {:.2} over {} nodes (max relative residual {:.2e})",
            report.max_z(),
            report.z.len(),
            report.max_relative()
        ),
    ))
}

// 8. Normalization of F against Γ and conservativity of the Doob transform.
const DOOB_PATHS: usize = 4096;

fn normalization_and_doob(desk: &mut Desk) -> Result<Verdict> {
    let norm_stream = desk.stream("acceptance.normalization");
    let doob_stream = desk.stream("acceptance.doob");
    let t = desk.v0_triple()?.clone();
    let e = desk.engine();
    let norms = normalization_check(e, &t, norm_stream)?;
    let norm_z = norms
        .iter()
        .map(|(r, se)| (r - 1.0).abs() / se)
        .fold(0.0, f64::max);
    let doob = DoobOperator::new(e, &t)?;
    let table = t.eigf.as_ref().context("eigenfunction table")?;
    let mut doob_z = 0.0f64;
    for (j, node) in table.nodes.iter().enumerate() {
        let w = &node.points[0];
        let est = doob.apply(|_: &SpectralField, _| 1.0, 1.0, t.grid.node(j), w, DOOB_PATHS, derive_stream(doob_stream, &[j as u64]))?;
        let d = (est.value - 1.0).abs();
        if d > 0.0 {
            doob_z = doob_z.max(d / est.std_error);
        }
    }
    Ok(verdict(
        norm_z <= 3.0 && doob_z <= 3.0,
        format!("⟨Γ, F⟩ = 1: max z {norm_z:.2}; T^V 1 = 1: max z {doob_z:.2} over {} nodes", t.grid.len()),
    ))
}

// 9. Direct against spectral pressure, constants, Lipschitz and convexity.
fn pressure_cross(desk: &mut Desk) -> Result<Verdict> {
    let dict_stream = desk.stream("acceptance.dictionary");
    let direct_stream = desk.stream("acceptance.direct");
    let const_stream = desk.stream("acceptance.constant");
    let props_stream = desk.stream("acceptance.properties");
    let probe_stream = desk.stream("acceptance.probes");
    let cfg = desk.exp.triple_config("pressure.triple", false)?;
    let v0 = desk.exp.potential.clone();
    let n = v0.n_coords();
    let mut potentials = vec![v0.clone()];
    for r in 0..4 {
        potentials.push(v0.with_coordinates(&random_coordinates(SEED, dict_stream, r, n, 0.25)));
    }
    let refs: Vec<&PotentialSpec> = potentials.iter().collect();
    let starts = SymbolGrid::new(8)?;
    let direct =
        pressure_direct_symbol_average(desk.engine(), &refs, 20.0, &starts, 250, &desk.relaxed, direct_stream)?;
    let mut worst = 0.0f64;
    let mut zs = Vec::new();
    for (k, v) in potentials.iter().enumerate() {
        let spectral = if k == 0 {
            pressure_spectral(desk.v0_triple()?)
        } else {
            pressure_spectral(&build_triple(desk.engine(), v, &desk.grid, &cfg)?)
        };
        let z = (direct[k].value - spectral.value).abs() / direct[k].std_error.hypot(spectral.std_error);
        worst = worst.max(z);
        zs.push(format!("{z:.2}"));
    }

    let h = TimeSymbol::new(0.0);
    let small = TripleConfig {
        pullback: PullbackConfig {
            n_particles: 8,
            n_iters: 2,
            ..cfg.pullback.clone()
        },
        ..cfg.clone()
    };
    let mut constants_exact = true;
    for c in [-1.5, 0.0, 0.25, 3.0] {
        let vc = PotentialSpec::constant(c);
        constants_exact &= pressure_direct(desk.engine(), &vc, 20.0, h, 16, &desk.relaxed, const_stream)?.value == c;
        constants_exact &= pressure_spectral(&build_triple(desk.engine(), &vc, &SymbolGrid::new(2)?, &small)?).value == c;
    }

    let pairs: Vec<(PotentialSpec, PotentialSpec)> = (0..10u64)
        .map(|p| {
            (
                v0.with_coordinates(&random_coordinates(SEED, probe_stream, 2 * p, n, 0.25)),
                v0.with_coordinates(&random_coordinates(SEED, probe_stream, 2 * p + 1, n, 0.25)),
            )
        })
        .collect();
    let props = pressure_properties(desk.engine(), &pairs, 20.0, h, 250, &desk.relaxed, props_stream)?;
    let probes_ok = props.rows.iter().filter(|r| r.lipschitz_ok && r.convexity_ok).count();
    Ok(verdict(
        worst <= 3.0 && constants_exact && probes_ok == pairs.len(),
        format!(
            "|Q_direct(20) − Q_spectral| z = [{}]; Q(C) = C exact {constants_exact}; probes {probes_ok}/10",
            zs.join(", ")
        ),
    ))
}

// 10. Legendre duality over the dictionary on a fixed path bank.
fn legendre_duality(desk: &mut Desk) -> Result<Verdict> {
    let bank_stream = desk.stream("acceptance.bank");
    let mut dict = desk.exp.potential.with_coordinates(&vec![0.0; desk.exp.potential.n_coords()]);
    dict.offset = 0.0;
    let d = dict.n_coords();
    let gamma = {
        let grid = desk.grid;
        let t = desk.zero_triple()?;
        measure_features(&dict, &t.gamma, &grid)
    };
    let starts = SymbolGrid::new(8)?.nodes();
    let mut bank = PathBankOracle::build(desk.engine(), &dict, 5.0, &starts, 1024, &desk.relaxed, bank_stream)?;
    let cfg = LegendreConfig {
        max_iters: 5000,
        grad_tol: 1e-7,
        cap: 50.0,
        ..Default::default()
    };
    let free = free_coordinates(&dict);
    let zero = vec![0.0; d];
    let rate = legendre(&gamma, &mut bank, &free, &zero, &cfg)?;

    let theta0 = desk.exp.potential.coordinates();
    let target = bank.equilibrium_features(&theta0);
    let back = legendre(&target, &mut bank, &free, &zero, &cfg)?;
    let err = back
        .theta
        .iter()
        .zip(&theta0)
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        .sqrt()
        / theta0.iter().map(|x| x * x).sum::<f64>().sqrt();
    Ok(verdict(
        rate.value < 0.02 && !rate.capped && err < 0.05,
        format!(
            "I(γ⁰) = {:.2e} (tol 0.02); round trip recovers V₀ with relative coefficient error {err:.2e} (tol 5%)",
            rate.value
        ),
    ))
}

// 11. Bracket closure.
fn bracket() -> Result<Verdict> {
    let s8 = TorusSpec::new(8, 32)?;
    let empty = bracket_closure(&[], &s8, 5, DEFAULT_RANK_TOL)?.dimensions();
    let shear = bracket_closure(&[SpectralField::cos_mode(&s8, Wavenumber::new(1, 0), 1.0)?], &s8, 5, DEFAULT_RANK_TOL)?
        .dimensions();
    let s4 = TorusSpec::new(4, 16)?;
    let two = vec![
        SpectralField::cos_mode(&s4, Wavenumber::new(1, 0), 1.0)?,
        SpectralField::cos_mode(&s4, Wavenumber::new(1, 1), 1.0)?,
    ];
    let growth = bracket_closure(&two, &s4, 5, DEFAULT_RANK_TOL)?.dimensions();
    let closed = bracket_closure(&two, &s4, 12, DEFAULT_RANK_TOL)?;
    let ok = empty.iter().all(|&d| d == 0)
        && shear.len() == 5
        && shear.iter().all(|&d| d == 1)
        && growth.windows(2).all(|p| p[1] > p[0])
        && growth == [2, 3, 6, 18, 35]
        && closed.final_dimension() == 40
        && closed.stalled;
    Ok(verdict(
        ok,
        format!(
            "empty {empty:?}; single shear {shear:?}; (1,0)+(1,1) at K = 4 {growth:?}, closed at {}",
            closed.final_dimension()
        ),
    ))
}

// 12. LLN and CLT of the centred tested functional.
fn lln_clt(desk: &mut Desk) -> Result<Verdict> {
    let stream = desk.stream("acceptance.clt");
    let phi = |w: &SpectralField, _: TimeSymbol| w.coeff(Wavenumber::new(1, 0)).re.tanh();
    let grid = desk.grid;
    let centres: Vec<f64> = {
        let t = desk.zero_triple()?;
        (0..grid.len()).map(|j| t.gamma[j].integrate(|w| phi(w, grid.node(j)))).collect()
    };
    let profile = TrigInterpolant::from_table(&centres);
    let centering = |h: TimeSymbol| profile.eval(h);
    let times = [10.0, 20.0, 40.0, 80.0];
    let avgs = functional_averages(desk.engine(), &phi, &centering, &times, 2000, TimeSymbol::new(0.0), &desk.relaxed, stream)?;
    let report = clt_from_averages(&times, &avgs);
    let q40 = report.rows[2].quantile_correlation;
    let scaled: Vec<String> = report.rows.iter().map(|r| format!("{:.3}", r.scaled_rms)).collect();
    Ok(verdict(
        report.decay_spread() <= 3.0 && q40 >= 0.99,
        format!(
            "√T·rms = [{}] (spread {:.2}, tol 3); quantile correlation at T = 40: {q40:.4} (tol 0.99)",
            scaled.join(", "),
            report.decay_spread()
        ),
    ))
}

// 13. Reproducibility of the CLI across reruns and worker counts.
fn run_cli(out: &Path, sub: &str, workers: usize, sets: &[&str]) -> Result<Vec<(String, Vec<u8>)>> {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_fkns"));
    cmd.arg(sub).arg("--out").arg(out).arg("--workers").arg(workers.to_string());
    for s in sets {
        cmd.arg("--set").arg(s);
    }
    let status = cmd.output().context("running fkns")?;
    ensure!(status.status.success(), "fkns {sub} failed: {}", String::from_utf8_lossy(&status.stderr));
    let mut files = Vec::new();
    for entry in std::fs::read_dir(out)? {
        let dir = entry?.path();
        for f in std::fs::read_dir(&dir)? {
            let p = f?.path();
            if p.extension().is_some_and(|x| x == "csv" || x == "fkc") {
                files.push((p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p)?));
            }
        }
    }
    files.sort();
    Ok(files)
}

fn reproducibility() -> Result<Verdict> {
    let tmp = tempfile::tempdir()?;
    let pressure_sets = [
        "pressure.times=2 4",
        "pressure.paths=16",
        "pressure.symbols=2",
        "pressure.relax_time=1",
        "pressure.probe_pairs=2",
        "eigen.grid=2",
        "eigen.particles=16",
        "eigen.iterations=2",
    ];
    let mut lines = Vec::new();
    let mut ok = true;
    for (sub, sets) in [("selftest", &[][..]), ("pressure", &pressure_sets[..])] {
        let runs: Vec<_> = [(1, "a"), (1, "b"), (4, "c")]
            .iter()
            .map(|(w, tag)| run_cli(&tmp.path().join(format!("{sub}-{tag}")), sub, *w, sets))
            .collect::<Result<_>>()?;
        let same = !runs[0].is_empty() && runs.iter().all(|r| *r == runs[0]);
        ok &= same;
        lines.push(format!("{sub}: {} files identical {same}", runs[0].len()));
    }
    Ok(verdict(ok, format!("reruns and workers 1/4: {}", lines.join("; "))))
}

fn main() {
    let t0 = Instant::now();
    let mut desk = match Desk::new() {
        Ok(d) => Some(d),
        Err(e) => {
            println!("setup failed: {e:#}");
            None
        }
    };
    let mut on_desk = |f: fn(&mut Desk) -> Result<Verdict>| -> Result<Verdict> {
        match desk.as_mut() {
            Some(d) => f(d),
            None => anyhow::bail!("no desk configuration"),
        }
    };
    let mut results: Vec<(usize, &str, Result<Verdict>, f64)> = Vec::new();
    let mut run = |id: usize, name: &'static str, f: &mut dyn FnMut() -> Result<Verdict>| {
        let start = Instant::now();
        let r = f();
        let secs = start.elapsed().as_secs_f64();
        match &r {
            Ok(v) => println!("{} {id:>2} {name}: {} [{secs:.0} s]", if v.passed { "PASS" } else { "FAIL" }, v.detail),
            Err(e) => println!("FAIL {id:>2} {name}: error: {e:#} [{secs:.0} s]"),
        }
        results.push((id, name, r, secs));
    };
    run(1, "deterministic single-shear decay", &mut shear_decay);
    run(2, "translation identity", &mut || on_desk(translation_identity));
    run(3, "Feynman-Kac trivial identities", &mut || on_desk(fk_identities));
    run(4, "OU oracle principal eigenvalue", &mut ou_oracle);
    run(5, "zero-potential triple", &mut || on_desk(zero_triple));
    run(6, "shift equivariance of the triple", &mut || on_desk(shift_equivariance));
    run(7, "eigenvalue cocycle", &mut || on_desk(cocycle));
    run(8, "normalization and Doob conservativity", &mut || on_desk(normalization_and_doob));
    run(9, "pressure cross-estimator", &mut || on_desk(pressure_cross));
    run(10, "Legendre duality", &mut || on_desk(legendre_duality));
    run(11, "bracket checker", &mut bracket);
    run(12, "LLN/CLT diagnostics", &mut || on_desk(lln_clt));
    run(13, "reproducibility", &mut reproducibility);
    let passed = results.iter().filter(|(_, _, r, _)| matches!(r, Ok(v) if v.passed)).count();
    println!(
        "acceptance: {passed} of {} criteria passed in {:.0} s",
        results.len(),
        t0.elapsed().as_secs_f64()
    );
    if passed != results.len() {
        std::process::exit(1);
    }
}
