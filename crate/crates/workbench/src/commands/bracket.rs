use anyhow::Result;
use fkns_core::hormander::bracket_closure;

use super::Outcome;
use crate::experiment::{noise_directions, Experiment};
use crate::output::RunDir;
use crate::plot;

/// Dimension of the bracket filtration per level.
pub fn run(exp: &mut Experiment, out: &mut RunDir) -> Result<Outcome> {
    let c = &exp.config;
    let levels = c.count("bracket.levels")?;
    let tol = c.positive("bracket.rank_tol")?;
    let noise = noise_directions(c, &exp.torus)?;
    let closure = bracket_closure(&noise, &exp.torus, levels, tol)?;
    let rows = closure.levels.iter().map(|l| {
        vec![
            l.level.to_string(),
            l.dimension.to_string(),
            closure.target_dimension.to_string(),
            l.new_modes_added.to_string(),
        ]
    });
    out.csv("bracket.csv", &["level", "dimension", "target_dimension", "new_modes"], rows)?;
    plot::line_chart(
        &out.path("bracket.csv"),
        &out.path("bracket.svg"),
        "Bracket closure dimension",
        "level",
        &["dimension", "target_dimension"],
        None,
    )?;
    out.record("bracket.svg");

    let mut o = Outcome::ok();
    o.line(format!("dimensions {:?} of {}", closure.dimensions(), closure.target_dimension));
    o.line(if closure.saturated {
        "saturated: the closure spans the truncated space".to_string()
    } else if closure.stalled {
        "stalled below the full dimension".to_string()
    } else {
        "still growing at the last level".to_string()
    });
    Ok(o)
}
