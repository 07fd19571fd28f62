use anyhow::Result;
use fkns_core::feynman_kac::polynomial_weight;
use fkns_core::ldp::{hitting_time_moments, hitting_times};
use fkns_core::model::TimeSymbol;
use fkns_core::potential::PotentialSpec;
use fkns_core::stats::mean_se;
use fkns_core::{SpectralField, Wavenumber};

use super::{zero, Outcome};
use crate::experiment::Experiment;
use crate::output::{num, RunDir};
use crate::plot;

/// Moment bounds, the growth ratio of the configured potential and
/// exponential moments of hitting times.
pub fn run(exp: &mut Experiment, out: &mut RunDir) -> Result<Outcome> {
    let c = &exp.config;
    let paths = c.count("diagnose.paths")?;
    let times = c.positive_list("diagnose.times")?;
    let q = c.positive("diagnose.moment_q")?;
    let radius = c.positive("diagnose.radius")?;
    let t_max = c.positive("diagnose.t_max")?;
    let gammas = c.f64_list("diagnose.gammas")?;
    let h0 = TimeSymbol::new(0.0);
    let m = polynomial_weight(q);
    let mut rows: Vec<Vec<String>> = Vec::new();

    // E 𝔪_q(w_t) from the zero field and from a large initial state.
    let big = SpectralField::cos_mode(&exp.torus, Wavenumber::new(1, 0), 4.0)?;
    for (label, w0) in [("moment_from_zero", zero(exp)), ("moment_from_large", big.clone())] {
        let stream = exp.ledger.stream(&format!("diagnose.{label}"));
        for &t in &times {
            let samples =
                exp.engine
                    .samples(&[&PotentialSpec::zero()], |w: &SpectralField, _| m(w), 0.0, t, h0, &w0, paths, stream)?;
            let xs: Vec<f64> = samples.iter().map(|s| s.phi).collect();
            let (mean, se) = mean_se(&xs);
            rows.push(vec![label.into(), num(t), num(mean), num(se)]);
        }
    }

    let probes = vec![zero(exp), big.scaled(0.25), big.scaled(0.5), big];
    let growth_stream = exp.ledger.stream("diagnose.growth");
    let ratio = exp
        .engine
        .growth_ratio(&exp.potential, m, 1.0, h0, &probes, radius, paths, growth_stream)?;
    rows.push(vec!["growth_ratio".into(), num(1.0), num(ratio), "NaN".into()]);

    let hit_stream = exp.ledger.stream("diagnose.hitting");
    let start = SpectralField::cos_mode(&exp.torus, Wavenumber::new(1, 1), 2.0)?;
    let taus = hitting_times(&exp.engine, &start, h0, radius, t_max, paths, hit_stream)?;
    let moments = hitting_time_moments(&taus, t_max, &gammas);
    for mo in &moments {
        rows.push(vec!["hitting_exp_moment".into(), num(mo.gamma), num(mo.mean), num(mo.std_error)]);
    }
    let censored = moments.first().map_or(0, |mo| mo.censored);
    rows.push(vec!["hitting_censored".into(), num(t_max), num(censored as f64), "NaN".into()]);
    out.csv("diagnose.csv", &["quantity", "parameter", "value", "std_error"], rows)?;
    plot::line_chart(
        &out.path("diagnose.csv"),
        &out.path("moments.svg"),
        "Polynomial moments against time",
        "parameter",
        &["value"],
        Some("quantity"),
    )?;
    out.record("moments.svg");

    let mut o = Outcome::ok();
    o.line(format!("growth ratio {ratio:.4}"));
    o.line(format!("{censored} of {paths} hitting times censored at {t_max}"));
    Ok(o)
}
