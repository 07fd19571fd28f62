use std::f64::consts::TAU;

use anyhow::Result;
use fkns_core::eigen::{build_triple, SymbolGrid, TrigInterpolant};
use fkns_core::ldp::{
    clt_from_averages, deviation_from_averages, fenchel_violation, free_coordinates, functional_averages, legendre,
    measure_features, occupation, CumulantBank, HistogramAxis, LegendreConfig, OccupationConfig,
    PathBankOracle, PressureOracle,
};
use fkns_core::model::TimeSymbol;
use fkns_core::potential::PotentialSpec;
use fkns_core::SpectralField;

use super::pressure::random_coordinates;
use super::{initial_measure, zero, Outcome};
use crate::experiment::Experiment;
use crate::output::{num, RunDir};
use crate::plot;

fn interval_label((lo, hi): (f64, f64)) -> String {
    format!("({},{})", num(lo), num(hi))
}

/// Occupation statistics, LLN/CLT and deviation tables for the tested
/// functional, and dictionary Legendre transforms of reference measures.
pub fn run(exp: &mut Experiment, out: &mut RunDir) -> Result<Outcome> {
    let c = &exp.config;
    let t_final = c.positive("ldp.t_final")?;
    let axes_obs = c.observables("ldp.axes")?;
    let (lo, hi) = c.range("ldp.axis_range")?;
    let bins = c.count("ldp.axis_bins")?;
    let symbol_bins = c.count("ldp.symbol_bins")?;
    let radii = c.f64_list("ldp.radii")?;
    let obs = c.observable("ldp.observable")?;
    let obs_scale = c.positive("ldp.observable_scale")?;
    let times = c.positive_list("ldp.times")?;
    let paths = c.count("ldp.paths")?;
    let interval = c.range("ldp.interval")?;
    let horizon = c.positive("ldp.bank_horizon")?;
    let bank_paths = c.count("ldp.bank_paths")?;
    let bank_symbols = SymbolGrid::new(c.count("ldp.bank_symbols")?)?;
    let lcfg = LegendreConfig {
        max_iters: c.count("ldp.legendre_iters")?,
        grad_tol: c.positive("ldp.legendre_tol")?,
        cap: c.positive("ldp.cap")?,
        ..Default::default()
    };
    let h0 = TimeSymbol::new(0.0);
    let init = initial_measure(exp, "ldp")?;
    let phi = move |w: &SpectralField, _: TimeSymbol| obs_scale * (obs.eval(w) / obs_scale).tanh();

    // Centering by the V = 0 eigenmeasures: φ_Γ(w, h) = φ(w) − ⟨Γ⁰(h), φ⟩.
    let grid = exp.symbol_grid()?;
    let tcfg = exp.triple_config("ldp.centering", false)?;
    let zero_triple = build_triple(&exp.engine, &PotentialSpec::zero(), &grid, &tcfg)?;
    let centres: Vec<f64> = zero_triple
        .gamma
        .iter()
        .enumerate()
        .map(|(j, g)| g.integrate(|w| phi(w, grid.node(j))))
        .collect();
    let centre_fn = TrigInterpolant::from_table(&centres);
    let centering = move |h: TimeSymbol| centre_fn.eval(h);
    out.csv(
        "centering.csv",
        &["node", "h", "gamma_mean_phi"],
        centres
            .iter()
            .enumerate()
            .map(|(j, m)| vec![j.to_string(), num(grid.node(j).value()), num(*m)]),
    )?;

    // One long occupation run.
    let dict = exp.potential.with_coordinates(&vec![0.0; exp.potential.n_coords()]);
    let n_feat = dict.n_coords();
    let centred = |w: &SpectralField, h: TimeSymbol| phi(w, h) - centering(h);
    let feature_fns: Vec<Box<dyn Fn(&SpectralField, TimeSymbol) -> f64 + Sync>> = (0..n_feat)
        .map(|i| {
            let d = dict.clone();
            Box::new(move |w: &SpectralField, h: TimeSymbol| d.features(w, h)[i]) as Box<_>
        })
        .collect();
    let mut functionals: Vec<&(dyn Fn(&SpectralField, TimeSymbol) -> f64 + Sync)> = vec![&phi, &centred];
    functionals.extend(feature_fns.iter().map(|f| f.as_ref()));
    let ocfg = OccupationConfig {
        axes: axes_obs
            .iter()
            .map(|&o| HistogramAxis {
                observable: o,
                lo,
                hi,
                bins,
            })
            .collect(),
        symbol_bins,
        radii: radii.clone(),
        record_every: exp.engine.steps_for(1.0).max(1),
    };
    let occ_path = exp.engine.path(exp.ledger.stream("ldp.occupation"), &[0]);
    let rec = occupation(exp.integrator(), &zero(exp), h0, t_final, &ocfg, &functionals, &occ_path)?;

    let centre_of = |a: &HistogramAxis, b: usize| a.lo + (b as f64 + 0.5) * (a.hi - a.lo) / a.bins as f64;
    let mut rows = Vec::new();
    let mut marginal = vec![0.0; rec.axes.first().map_or(1, |a| a.bins) * symbol_bins];
    for (cell, m) in rec.histogram.iter().enumerate() {
        let mut rest = cell / symbol_bins;
        let sb = cell % symbol_bins;
        let mut idx = vec![0; rec.axes.len()];
        for (k, a) in rec.axes.iter().enumerate().rev() {
            idx[k] = rest % a.bins;
            rest /= a.bins;
        }
        let first = idx.first().copied().unwrap_or(0);
        marginal[first * symbol_bins + sb] += m;
        let mut row = vec![cell.to_string()];
        row.extend(rec.axes.iter().zip(&idx).map(|(a, &b)| num(centre_of(a, b))));
        row.push(num((sb as f64 + 0.5) * TAU / symbol_bins as f64));
        row.push(num(*m));
        rows.push(row);
    }
    let mut header = vec!["cell".to_string()];
    header.extend(rec.axes.iter().map(|a| format!("{}", a.observable)));
    header.extend(["h".to_string(), "mass".to_string()]);
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
    out.csv("occupation.csv", &header_refs, rows)?;
    if let Some(a) = rec.axes.first() {
        let rows = (0..a.bins).flat_map(|b| {
            (0..symbol_bins).map(move |sb| (b, sb))
        });
        let rows: Vec<Vec<String>> = rows
            .map(|(b, sb)| {
                vec![
                    num(centre_of(a, b)),
                    num((sb as f64 + 0.5) * TAU / symbol_bins as f64),
                    num(marginal[b * symbol_bins + sb]),
                ]
            })
            .collect();
        out.csv("occupation_marginal.csv", &["x", "h", "mass"], rows)?;
        plot::heatmap(
            &out.path("occupation_marginal.csv"),
            &out.path("occupation.svg"),
            &format!("Occupation measure: {} against symbol", a.observable),
            "x",
            "h",
            "mass",
        )?;
        out.record("occupation.svg");
    }
    out.csv(
        "occupation_series.csv",
        &["t", "phi", "phi_centred", "enstrophy_functional"],
        (0..rec.series_times.len()).map(|i| {
            vec![
                num(rec.series_times[i]),
                num(rec.series[0][i]),
                num(rec.series[1][i]),
                num(rec.enstrophy[i]),
            ]
        }),
    )?;
    plot::line_chart(
        &out.path("occupation_series.csv"),
        &out.path("occupation_series.svg"),
        "Time averages along the occupation run",
        "t",
        &["phi", "phi_centred"],
        None,
    )?;
    out.record("occupation_series.svg");
    out.csv(
        "hitting.csv",
        &["radius", "time"],
        radii
            .iter()
            .zip(&rec.hitting_times)
            .map(|(r, t)| vec![num(*r), t.map_or("none".into(), num)]),
    )?;

    // LLN / CLT / deviations from one bank of path averages.
    let avg_stream = exp.ledger.stream("ldp.averages");
    let avgs = functional_averages(&exp.engine, &phi, &centering, &times, paths, h0, &init, avg_stream)?;
    let clt = clt_from_averages(&times, &avgs);
    out.csv(
        "clt.csv",
        &["T", "mean", "mean_se", "rms", "scaled_rms", "scaled_variance", "quantile_correlation"],
        clt.rows.iter().map(|r| {
            vec![
                num(r.t),
                num(r.mean),
                num(r.std_error),
                num(r.rms),
                num(r.scaled_rms),
                num(r.scaled_variance),
                num(r.quantile_correlation),
            ]
        }),
    )?;
    plot::line_chart(
        &out.path("clt.csv"),
        &out.path("clt.svg"),
        "Scaled fluctuations of the centred time average",
        "T",
        &["scaled_rms"],
        None,
    )?;
    out.record("clt.svg");
    let dev = deviation_from_averages(interval, &times, &avgs);
    let e_label = interval_label(interval);
    out.csv(
        "deviation.csv",
        &["E", "T", "hits", "n", "log_rate"],
        dev.rows.iter().map(|r| {
            vec![e_label.clone(), num(r.t), r.hits.to_string(), r.n.to_string(), num(r.log_rate)]
        }),
    )?;
    let t_max = times[times.len() - 1];
    let cumulant = CumulantBank::new(t_max, avgs[avgs.len() - 1].clone()).interval_rate(interval, lcfg.cap);
    out.csv(
        "deviation_fit.csv",
        &["E", "fitted_rate", "fitted_rate_se", "cumulant_rate"],
        vec![vec![
            e_label,
            dev.fit.map_or("NaN".into(), |f| num(f.slope)),
            dev.fit.map_or("NaN".into(), |f| num(f.slope_se)),
            num(cumulant),
        ]],
    )?;

    // Legendre transforms over the dictionary on a fixed path bank.
    let bank_stream = exp.ledger.stream("ldp.bank");
    let mut bank = PathBankOracle::build(&exp.engine, &dict, horizon, &bank_symbols.nodes(), bank_paths, &init, bank_stream)?;
    let free = free_coordinates(&dict);
    let start = vec![0.0; n_feat];
    let occupation_features: Vec<f64> = rec.series[2..].iter().map(|s| s[s.len() - 1]).collect();
    let targets: Vec<(&str, Vec<f64>)> = vec![
        ("gamma", measure_features(&dict, &zero_triple.gamma, &grid)),
        ("gamma_bank", bank.equilibrium_features(&start)),
        ("equilibrium_V0", bank.equilibrium_features(&exp.potential.coordinates())),
        ("occupation", occupation_features),
    ];
    let probe_stream = exp.ledger.stream("ldp.probes");
    let probes: Vec<Vec<f64>> = (0..16)
        .map(|p| random_coordinates(exp.engine.seed(), probe_stream, p, n_feat, 1.0))
        .collect();
    let mut rate_rows = Vec::new();
    let mut theta_rows = Vec::new();
    let mut o = Outcome::ok();
    for (id, target) in &targets {
        let est = legendre(target, &mut bank, &free, &start, &lcfg)?;
        let violation = fenchel_violation(&est, &mut bank as &mut dyn PressureOracle, &probes)?;
        rate_rows.push(vec![id.to_string(), num(est.value), num(est.gradient_norm)]);
        theta_rows.extend(
            est.theta
                .iter()
                .enumerate()
                .map(|(i, x)| vec![id.to_string(), i.to_string(), num(*x)]),
        );
        o.line(format!(
            "I({id}) {} {:.5} (gap {:.2e}, {} iterations, Fenchel violation {:.2e})",
            if est.capped { "≥" } else { "≈" },
            est.value,
            est.gradient_norm,
            est.iterations,
            violation.max(0.0)
        ));
    }
    out.csv("rate.csv", &["mu_id", "I", "gap"], rate_rows)?;
    out.csv("rate_potentials.csv", &["mu_id", "coordinate", "theta"], theta_rows)?;

    o.line(format!("histogram mass {:.15}", rec.mass()));
    if let (Some(first), Some(last)) = (clt.rows.first(), clt.rows.last()) {
        o.line(format!(
            "√T·rms spread {:.3} over T = {}..{}; quantile correlation at T = {}: {:.4}",
            clt.decay_spread(),
            first.t,
            last.t,
            last.t,
            last.quantile_correlation
        ));
    }
    Ok(o)
}
