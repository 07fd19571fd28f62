use anyhow::Result;
use fkns_core::eigen::{build_triple, SymbolGrid};
use fkns_core::ldp::{
    pressure_direct, pressure_direct_batch, pressure_direct_symbol_average, pressure_properties, pressure_spectral,
    PressureEstimate,
};
use fkns_core::potential::PotentialSpec;
use fkns_core::rng::{derive_stream, uniform_at};

use super::{initial_measure, symbol, Outcome};
use crate::experiment::Experiment;
use crate::output::{num, RunDir};
use crate::plot;

/// Dictionary coordinates uniform in `±scale`, keyed by `(stream, draw)`.
pub fn random_coordinates(seed: u64, stream: u64, draw: u64, n: usize, scale: f64) -> Vec<f64> {
    (0..n)
        .map(|i| scale * (2.0 * uniform_at(seed, derive_stream(stream, &[draw, i as u64])) - 1.0))
        .collect()
}

/// Pressure curves `t ↦ Q_direct(V, t)` with the spectral value, constant
/// potentials, and Lipschitz/convexity probes.
pub fn run(exp: &mut Experiment, out: &mut RunDir) -> Result<Outcome> {
    let c = &exp.config;
    let times = c.positive_list("pressure.times")?;
    let paths = c.count("pressure.paths")?;
    let n_random = c.usize("pressure.random")?;
    let scale = c.f64("pressure.random_scale")?;
    let n_pairs = c.usize("pressure.probe_pairs")?;
    let spectral = c.bool("pressure.spectral")?;
    let h0 = symbol(exp, "pressure.h0")?;
    let n_symbols = c.count("pressure.symbols")?;
    let initial = initial_measure(exp, "pressure")?;
    let seed = exp.engine.seed();

    let dict_stream = exp.ledger.stream("pressure.dictionary");
    let mut potentials: Vec<(String, PotentialSpec)> = vec![("V0".into(), exp.potential.clone())];
    let n = exp.potential.n_coords();
    for r in 0..n_random {
        let theta = random_coordinates(seed, dict_stream, r as u64, n, scale);
        potentials.push((format!("R{}", r + 1), exp.potential.with_coordinates(&theta)));
    }
    out.csv(
        "potentials.csv",
        &["v_id", "coordinate", "value"],
        potentials.iter().flat_map(|(id, v)| {
            let mut rows = vec![vec![id.clone(), "offset".into(), num(v.offset)]];
            rows.extend(
                v.coordinates()
                    .into_iter()
                    .enumerate()
                    .map(|(i, x)| vec![id.clone(), i.to_string(), num(x)]),
            );
            rows
        }),
    )?;

    // Every horizon reuses the same paths, so the curves are prefixes of one
    // another's noise.
    let direct_stream = exp.ledger.stream("pressure.direct");
    let refs: Vec<&PotentialSpec> = potentials.iter().map(|(_, v)| v).collect();
    let mut direct: Vec<Vec<PressureEstimate>> = Vec::new();
    let starts = SymbolGrid::new(n_symbols)?;
    for &t in &times {
        direct.push(if n_symbols == 1 {
            pressure_direct_batch(&exp.engine, &refs, t, h0, paths, &initial, direct_stream)?.estimates
        } else {
            pressure_direct_symbol_average(&exp.engine, &refs, t, &starts, paths, &initial, direct_stream)?
        });
    }
    let mut spec_values: Vec<Option<PressureEstimate>> = vec![None; potentials.len()];
    if spectral {
        let grid = exp.symbol_grid()?;
        // common pullback streams for all potentials
        let cfg = exp.triple_config("pressure.triple", false)?;
        for (slot, (_, v)) in spec_values.iter_mut().zip(&potentials) {
            *slot = Some(pressure_spectral(&build_triple(&exp.engine, v, &grid, &cfg)?));
        }
    }
    let mut rows = Vec::new();
    for (k, (id, _)) in potentials.iter().enumerate() {
        for (ti, &t) in times.iter().enumerate() {
            let d = &direct[ti][k];
            let (qs, ss) = spec_values[k].map_or((f64::NAN, f64::NAN), |e| (e.value, e.std_error));
            rows.push(vec![id.clone(), num(t), num(d.value), num(d.std_error), num(qs), num(ss)]);
        }
    }
    out.csv(
        "pressure_curves.csv",
        &["v_id", "t", "q_direct", "q_direct_se", "q_spectral", "q_spectral_se"],
        rows,
    )?;
    plot::line_chart(
        &out.path("pressure_curves.csv"),
        &out.path("pressure_curves.svg"),
        "Direct pressure against horizon",
        "t",
        &["q_direct"],
        Some("v_id"),
    )?;
    out.record("pressure_curves.svg");

    let t_last = *times.last().unwrap_or(&1.0);
    let const_stream = exp.ledger.stream("pressure.constants");
    let mut const_rows = Vec::new();
    let mut constants_exact = true;
    for cval in [-0.5, 0.0, 0.25, 1.0] {
        let q = pressure_direct(&exp.engine, &PotentialSpec::constant(cval), t_last, h0, paths, &initial, const_stream)?;
        constants_exact &= q.value == cval && q.std_error == 0.0;
        const_rows.push(vec![num(cval), num(t_last), num(q.value), num(q.std_error)]);
    }
    out.csv("pressure_constants.csv", &["c", "t", "q_direct", "q_direct_se"], const_rows)?;

    let probe_stream = exp.ledger.stream("pressure.probes");
    let pairs: Vec<(PotentialSpec, PotentialSpec)> = (0..n_pairs)
        .map(|p| {
            let a = random_coordinates(seed, probe_stream, 2 * p as u64, n, scale);
            let b = random_coordinates(seed, probe_stream, 2 * p as u64 + 1, n, scale);
            (exp.potential.with_coordinates(&a), exp.potential.with_coordinates(&b))
        })
        .collect();
    let props_stream = exp.ledger.stream("pressure.properties");
    let report = pressure_properties(&exp.engine, &pairs, t_last, h0, paths, &initial, props_stream)?;
    out.csv(
        "pressure_properties.csv",
        &[
            "pair",
            "difference",
            "sup_distance",
            "difference_se",
            "lipschitz_ok",
            "convexity_gap",
            "convexity_se",
            "convexity_ok",
        ],
        report.rows.iter().enumerate().map(|(i, r)| {
            vec![
                i.to_string(),
                num(r.difference),
                num(r.sup_distance),
                num(r.difference_se),
                r.lipschitz_ok.to_string(),
                num(r.convexity_gap),
                num(r.convexity_se),
                r.convexity_ok.to_string(),
            ]
        }),
    )?;

    let mut o = Outcome::ok();
    for (k, (id, _)) in potentials.iter().enumerate() {
        let d = direct[times.len() - 1][k];
        match spec_values[k] {
            Some(s) => {
                let z = (d.value - s.value).abs() / d.std_error.hypot(s.std_error);
                o.line(format!(
                    "{id}: Q_direct(t={t_last}) = {:.5} ± {:.5}, Q_spectral = {:.5} ± {:.5}, z = {z:.2}",
                    d.value, d.std_error, s.value, s.std_error
                ));
            }
            None => o.line(format!("{id}: Q_direct(t={t_last}) = {:.5} ± {:.5}", d.value, d.std_error)),
        }
    }
    o.line(format!("constant potentials reproduced exactly: {constants_exact}"));
    o.line(format!(
        "Lipschitz and midpoint-convexity probes pass: {} of {}",
        report.rows.iter().filter(|r| r.lipschitz_ok && r.convexity_ok).count(),
        report.rows.len()
    ));
    Ok(o)
}
