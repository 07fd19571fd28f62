use anyhow::Result;
use fkns_core::checkpoint::Checkpoint;
use rayon::prelude::*;

use super::{symbol, zero, Outcome};
use crate::experiment::Experiment;
use crate::output::{num, RunDir};
use crate::plot;

/// Independent trajectories from the zero field; energy and enstrophy series
/// and a checkpoint of the first path.
pub fn run(exp: &mut Experiment, out: &mut RunDir) -> Result<Outcome> {
    let c = &exp.config;
    let t_final = c.positive("simulate.t_final")?;
    let paths = c.count("simulate.paths")?;
    let every = c.count("simulate.record_every")?;
    let h0 = symbol(exp, "simulate.h0")?;
    let stream = exp.ledger.stream("simulate");
    let w0 = zero(exp);
    let integ = exp.integrator();
    let trajs = (0..paths)
        .into_par_iter()
        .map(|i| integ.solve(&w0, 0.0, t_final, h0, &exp.engine.path(stream, &[i as u64]), every))
        .collect::<fkns_core::Result<Vec<_>>>()?;

    let nu = integ.params().viscosity();
    let mut rows = Vec::new();
    for (p, tr) in trajs.iter().enumerate() {
        for ((t, h), w) in tr.times.iter().zip(&tr.symbols).zip(&tr.states) {
            let ens = w.sobolev_norm(1.0).powi(2);
            rows.push(vec![p.to_string(), num(*t), num(h.value()), num(w.norm_sq()), num(ens), num(nu * ens)]);
        }
    }
    out.csv(
        "trajectory.csv",
        &["path", "t", "h", "energy", "enstrophy", "dissipation_rate"],
        rows,
    )?;
    Checkpoint::from_trajectory(integ, &trajs[0]).save(out.path("trajectory.fkc"))?;
    out.record("trajectory.fkc");
    plot::line_chart(
        &out.path("trajectory.csv"),
        &out.path("energy.svg"),
        "Energy along trajectories",
        "t",
        &["energy"],
        Some("path"),
    )?;
    out.record("energy.svg");

    let mut o = Outcome::ok();
    let finals: Vec<f64> = trajs.iter().filter_map(|t| t.last()).map(|w| w.norm_sq()).collect();
    o.line(format!(
        "{paths} paths to t = {t_final}; final energy mean {:.4}",
        finals.iter().sum::<f64>() / finals.len() as f64
    ));
    Ok(o)
}
