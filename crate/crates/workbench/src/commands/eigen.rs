use anyhow::Result;
use fkns_core::checkpoint::Checkpoint;
use fkns_core::eigen::build_triple;
use fkns_core::ldp::pressure_spectral;

use super::Outcome;
use crate::experiment::Experiment;
use crate::output::{num, RunDir};
use crate::plot;

/// Eigen-triple of the configured potential on the symbol grid.
pub fn run(exp: &mut Experiment, out: &mut RunDir) -> Result<Outcome> {
    let grid = exp.symbol_grid()?;
    let cfg = exp.triple_config("eigen", true)?;
    let triple = build_triple(&exp.engine, &exp.potential, &grid, &cfg)?;

    let rows = (0..grid.len()).map(|j| {
        vec![
            j.to_string(),
            num(grid.node(j).value()),
            num(triple.lambda(j)),
            num(triple.lambda_se[j]),
            num(triple.log_multiplier[j]),
            num(triple.log_multiplier_se[j]),
        ]
    });
    out.csv(
        "eigenvalues.csv",
        &["node", "h", "lambda", "lambda_se", "log_multiplier", "log_multiplier_se"],
        rows,
    )?;

    let mut rows = Vec::new();
    if let Some(t) = &triple.eigf {
        for (j, node) in t.nodes.iter().enumerate() {
            for (p, (f, se)) in node.values.iter().zip(&node.std_errors).enumerate() {
                rows.push(vec![
                    j.to_string(),
                    num(grid.node(j).value()),
                    p.to_string(),
                    num(node.points[p].norm()),
                    num(*f),
                    num(*se),
                ]);
            }
        }
    }
    out.csv("eigenfunction.csv", &["node", "h", "point", "point_norm", "F", "F_se"], rows)?;

    let mut rows = Vec::new();
    for (j, d) in triple.diagnostics.iter().enumerate() {
        for (i, (bl, lm)) in d.bl_trace.iter().zip(&d.log_multipliers).enumerate() {
            rows.push(vec![j.to_string(), (i + 1).to_string(), num(*bl), num(*lm)]);
        }
    }
    out.csv("chains.csv", &["node", "iteration", "bl_distance", "log_multiplier"], rows)?;

    Checkpoint::from_triple(exp.integrator(), &triple).save(out.path("triple.fkc"))?;
    out.record("triple.fkc");
    plot::line_chart(
        &out.path("eigenvalues.csv"),
        &out.path("eigenvalues.svg"),
        "Eigenvalue density over the symbol circle",
        "h",
        &["lambda"],
        None,
    )?;
    plot::line_chart(
        &out.path("chains.csv"),
        &out.path("chains.svg"),
        "Pullback convergence (BL distance between halves)",
        "iteration",
        &["bl_distance"],
        Some("node"),
    )?;
    out.record("eigenvalues.svg");
    out.record("chains.svg");

    let q = pressure_spectral(&triple);
    let mut o = Outcome::ok();
    o.line(format!("spectral pressure {:.6} ± {:.6}", q.value, q.std_error));
    let unconverged = triple.diagnostics.iter().filter(|d| !d.converged).count();
    o.line(format!("{unconverged} of {} chains above their noise floor", grid.len()));
    Ok(o)
}
