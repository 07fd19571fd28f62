use anyhow::Result;
use fkns_core::checkpoint::{Checkpoint, VERSION};
use fkns_core::eigen::{build_triple, PullbackConfig, SymbolGrid, TripleConfig};
use fkns_core::ensemble::WeightedEnsemble;
use fkns_core::hormander::bracket_closure;
use fkns_core::ldp::{
    clt_from_averages, deviation_from_averages, functional_averages, free_coordinates, legendre, occupation, pressure_direct,
    pressure_direct_batch, pressure_spectral, HistogramAxis, InitialMeasure, LegendreConfig, OccupationConfig,
    PathBankOracle,
};
use fkns_core::model::TimeSymbol;
use fkns_core::potential::{Observable, PotentialSpec};
use fkns_core::{SpectralField, Wavenumber};

use super::{zero, Outcome};
use crate::experiment::Experiment;
use crate::output::{num, RunDir};

struct Check {
    name: &'static str,
    passed: bool,
    detail: String,
}

fn check(name: &'static str, passed: bool, detail: impl Into<String>) -> Check {
    Check {
        name,
        passed,
        detail: detail.into(),
    }
}

fn bits(w: &SpectralField) -> Vec<u64> {
    w.to_real_coords().iter().map(|x| x.to_bits()).collect()
}

/// Exact identities that hold for any configuration, each on a handful of
/// short paths. Fails the run if any of them does not hold.
pub fn run(exp: &mut Experiment, out: &mut RunDir) -> Result<Outcome> {
    let n = exp.config.count("selftest.paths")?;
    let t = exp.config.positive("selftest.t")?;
    let e = &exp.engine;
    let h = TimeSymbol::new(0.7);
    let w0 = zero(exp);
    let v = exp.potential.clone();
    let cval = 0.3;
    let vc = v.shifted(cval);
    let one = |_: &SpectralField, _: TimeSymbol| 1.0;
    let mut checks = Vec::new();

    // Feynman-Kac weights.
    let s = exp.ledger.stream("selftest.fk");
    let zero_v = PotentialSpec::zero();
    let constant = PotentialSpec::constant(cval);
    let samples = e.samples(&[&zero_v, &constant, &v, &vc], one, 0.0, t, h, &w0, n, s)?;
    let elapsed = e.steps_for(t) as f64 * e.dt();
    let unit = samples.iter().all(|p| p.log_weights[0] == 0.0);
    checks.push(check("fk_zero_potential_unit", unit, "P1 = 1 on every path"));
    let expect = (cval * elapsed).exp();
    let worst = samples
        .iter()
        .map(|p| (p.log_weights[1].exp() - expect).abs() / expect)
        .fold(0.0, f64::max);
    checks.push(check("fk_constant_potential", worst <= 1e-15, format!("max rel. deviation from e^(ct) {}", num(worst))));
    let worst = samples
        .iter()
        .map(|p| (p.log_weights[3] - p.log_weights[2] - cval * elapsed).abs())
        .fold(0.0, f64::max);
    checks.push(check("fk_shift_covariance", worst <= 1e-12, format!("max per-path log-weight defect {}", num(worst))));

    // Pressure identities.
    let init = InitialMeasure::Point(w0.clone());
    let s = exp.ledger.stream("selftest.pressure");
    let q0 = pressure_direct(e, &zero_v, t, h, n, &init, s)?;
    checks.push(check(
        "pressure_zero",
        q0.value == 0.0 && q0.std_error == 0.0,
        format!("Q(0) = {}", num(q0.value)),
    ));
    let qc = pressure_direct(e, &constant, t, h, n, &init, s)?;
    checks.push(check("pressure_constant", qc.value == cval, format!("Q({cval}) = {}", num(qc.value))));
    let batch = pressure_direct_batch(e, &[&v, &vc], t, h, n, &init, s)?;
    let d = batch.estimates[1].value - batch.estimates[0].value - cval;
    checks.push(check("pressure_shift", d.abs() <= 1e-12, format!("Q(V+c) − Q(V) − c = {}", num(d))));

    // Flow identities.
    let integ = e.integrator();
    let s = exp.ledger.stream("selftest.flow");
    let start = SpectralField::cos_mode(&exp.torus, Wavenumber::new(1, 0), 1.0)?;
    let mut translation = true;
    for (i, shift) in [0.5, 1.25, 3.0].into_iter().enumerate() {
        let path = e.path(s, &[i as u64]);
        let a = integ.solve(&start, shift, shift + t, h, &path, usize::MAX)?;
        let b = integ.solve(&start, 0.0, t, h.shift(shift), &path, usize::MAX)?;
        translation &= matches!((a.last(), b.last()), (Some(x), Some(y)) if bits(x) == bits(y));
    }
    checks.push(check("translation_identity_bitwise", translation, "3 start times"));
    let path = e.path(s, &[9]);
    let (whole, _) = integ.homogenized_step(&start, h, 2.0 * t, &path, 0)?;
    let (mid, h_mid) = integ.homogenized_step(&start, h, t, &path, 0)?;
    let (end, _) = integ.homogenized_step(&mid, h_mid, t, &path, e.steps_for(t) as u64)?;
    checks.push(check("flow_composition_bitwise", bits(&whole) == bits(&end), "two halves against one run"));

    // Occupation and functional averages.
    let ocfg = OccupationConfig {
        axes: vec![HistogramAxis {
            observable: Observable::ModeCos(Wavenumber::new(1, 0)),
            lo: -1.0,
            hi: 1.0,
            bins: 4,
        }],
        symbol_bins: 8,
        radii: vec![],
        record_every: 1,
    };
    let konst = |_: &SpectralField, _: TimeSymbol| 0.4;
    let rec = occupation(integ, &w0, h, t, &ocfg, &[&konst], &e.path(exp.ledger.stream("selftest.occupation"), &[0]))?;
    let mass_err = (rec.mass() - 1.0).abs();
    checks.push(check("occupation_mass", mass_err <= 1e-12, format!("|mass − 1| = {}", num(mass_err))));
    checks.push(check(
        "occupation_constant_functional",
        rec.series[0].iter().all(|&x| x == 0.4),
        "⟨c, ζ_t⟩ = c at every recorded time",
    ));
    let centre = |_: TimeSymbol| 0.4;
    let times = [t / 2.0, t, 2.0 * t];
    let avgs = functional_averages(e, &konst, &centre, &times, n, h, &init, exp.ledger.stream("selftest.averages"))?;
    let clt = clt_from_averages(&times, &avgs);
    checks.push(check(
        "clt_constant_degenerate",
        clt.rows.iter().all(|r| r.degenerate && r.mean == 0.0),
        "φ ≡ c centred by c is exactly 0",
    ));
    let dev = deviation_from_averages((f64::NEG_INFINITY, f64::INFINITY), &times, &avgs);
    checks.push(check(
        "deviation_whole_line",
        dev.rows.iter().all(|r| r.probability == 1.0 && r.log_rate == 0.0),
        "P(ℝ) = 1, rate 0",
    ));

    // Bracket closure.
    let empty = bracket_closure(&[], &exp.torus, 4, 1e-8)?;
    checks.push(check(
        "bracket_empty_noise",
        empty.dimensions().iter().all(|&d| d == 0),
        format!("{:?}", empty.dimensions()),
    ));
    let shear = bracket_closure(
        &[SpectralField::cos_mode(&exp.torus, Wavenumber::new(1, 0), 1.0)?],
        &exp.torus,
        5,
        1e-8,
    )?;
    checks.push(check(
        "bracket_single_shear_mode",
        shear.dimensions().iter().all(|&d| d == 1),
        format!("{:?}", shear.dimensions()),
    ));

    // Eigen-triple identities with a few particles.
    let grid = SymbolGrid::new(2)?;
    let tcfg = TripleConfig {
        pullback: PullbackConfig {
            n_particles: n.max(16),
            n_iters: 2,
            stream: exp.ledger.stream("selftest.triple"),
            ..Default::default()
        },
        kb: None,
        multiplier_stream: exp.ledger.stream("selftest.triple.multiplier"),
    };
    let t0 = build_triple(e, &zero_v, &grid, &tcfg)?;
    checks.push(check(
        "triple_zero_potential",
        t0.lambda_table().iter().all(|&l| l == 0.0) && t0.log_multiplier.iter().all(|&l| l == 0.0),
        "λ⁰ ≡ 0",
    ));
    let ta = build_triple(e, &v, &grid, &tcfg)?;
    let tb = build_triple(e, &vc, &grid, &tcfg)?;
    let same_gamma = ta
        .gamma
        .iter()
        .zip(&tb.gamma)
        .all(|(a, b)| a.weights() == b.weights() && a.particles() == b.particles());
    let dl = ta
        .lambda_table()
        .iter()
        .zip(tb.lambda_table())
        .map(|(a, b)| (b - a - cval).abs())
        .fold(0.0, f64::max);
    checks.push(check("triple_shift_gamma_bitwise", same_gamma, "Γ^(V+c) = Γ^V per particle"));
    checks.push(check("triple_shift_lambda", dl <= 1e-12, format!("max |λ^(V+c) − λ^V − c| = {}", num(dl))));
    let qs = pressure_spectral(&build_triple(e, &constant, &grid, &tcfg)?);
    checks.push(check("spectral_pressure_constant", qs.value == cval, format!("Q_spectral({cval}) = {}", num(qs.value))));

    // Legendre: an unreachable target runs past the cap.
    let mut dict = v.with_coordinates(&vec![0.0; v.n_coords()]);
    dict.offset = 0.0;
    let free = free_coordinates(&dict);
    let mut bank = PathBankOracle::build(e, &dict, t, &[h], n, &init, exp.ledger.stream("selftest.bank"))?;
    let mut target = bank.equilibrium_features(&vec![0.0; dict.n_coords()]);
    let zero_rate = legendre(&target, &mut bank, &free, &vec![0.0; dict.n_coords()], &LegendreConfig::default())?;
    checks.push(check(
        "legendre_own_equilibrium_zero",
        zero_rate.value.abs() <= 1e-12,
        format!("I = {}", num(zero_rate.value)),
    ));
    if let Some(x) = target.first_mut() {
        *x = 2.0 * dict.terms[0].scale;
    }
    let capped = legendre(&target, &mut bank, &free, &vec![0.0; dict.n_coords()], &LegendreConfig::default())?;
    checks.push(check("legendre_unreachable_capped", capped.capped, format!("I ≥ {}", num(capped.value))));

    // Checkpoints.
    let ens = WeightedEnsemble::new(vec![w0.clone(), start.clone()], vec![0.25, 0.75])?;
    let cp = Checkpoint::from_ensemble(integ, &ens, h, t);
    let mut buf = Vec::new();
    cp.write_to(&mut buf)?;
    let back = Checkpoint::read_from(buf.as_slice())?;
    checks.push(check("checkpoint_round_trip", back == cp, "ensemble bitwise"));
    let mut future = buf.clone();
    future[4..6].copy_from_slice(&(VERSION + 1).to_le_bytes());
    let mut swapped = buf.clone();
    swapped[4..6].copy_from_slice(&VERSION.to_be_bytes());
    let rejects = Checkpoint::read_from(future.as_slice()).is_err()
        && Checkpoint::read_from(swapped.as_slice()).is_err()
        && Checkpoint::read_from(&buf[..buf.len() - 1]).is_err();
    checks.push(check("checkpoint_rejects_corruption", rejects, "version, endianness, truncation"));

    out.csv(
        "selftest.csv",
        &["check", "passed", "detail"],
        checks
            .iter()
            .map(|c| vec![c.name.to_string(), c.passed.to_string(), c.detail.clone()]),
    )?;
    let mut o = Outcome::ok();
    o.passed = checks.iter().all(|c| c.passed);
    for c in &checks {
        o.line(format!("{} {}: {}", if c.passed { "ok  " } else { "FAIL" }, c.name, c.detail));
    }
    Ok(o)
}
