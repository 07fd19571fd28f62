//! Subcommand pipelines. Each writes its tables into the run folder and
//! returns a short summary.

mod bracket;
mod diagnose;
mod eigen;
mod ldp;
pub mod pressure;
mod selftest;
mod simulate;

use anyhow::Result;
use clap::ValueEnum;
use fkns_core::ldp::InitialMeasure;
use fkns_core::model::TimeSymbol;
use fkns_core::SpectralField;

use crate::experiment::Experiment;
use crate::output::RunDir;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Command {
    Simulate,
    BracketCheck,
    Eigen,
    Pressure,
    Ldp,
    Diagnose,
    Selftest,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::BracketCheck => "bracket-check",
            Command::Eigen => "eigen",
            Command::Pressure => "pressure",
            Command::Ldp => "ldp",
            Command::Diagnose => "diagnose",
            Command::Selftest => "selftest",
        }
    }
}

/// What a pipeline reports back: `passed` is false only when an identity
/// checked by the pipeline failed.
#[derive(Clone, Debug, Default)]
pub struct Outcome {
    pub passed: bool,
    pub lines: Vec<String>,
}

impl Outcome {
    fn ok() -> Self {
        Self {
            passed: true,
            lines: Vec::new(),
        }
    }

    fn line(&mut self, s: impl Into<String>) {
        self.lines.push(s.into());
    }
}

pub fn run(cmd: Command, exp: &mut Experiment, out: &mut RunDir) -> Result<Outcome> {
    match cmd {
        Command::Simulate => simulate::run(exp, out),
        Command::BracketCheck => bracket::run(exp, out),
        Command::Eigen => eigen::run(exp, out),
        Command::Pressure => pressure::run(exp, out),
        Command::Ldp => ldp::run(exp, out),
        Command::Diagnose => diagnose::run(exp, out),
        Command::Selftest => selftest::run(exp, out),
    }
}

fn symbol(exp: &Experiment, key: &str) -> Result<TimeSymbol> {
    Ok(TimeSymbol::new(exp.config.f64(key)?))
}

fn zero(exp: &Experiment) -> SpectralField {
    SpectralField::zeros(&exp.torus)
}

/// `<section>.initial`: `point` (the zero field), `dispersed` with spread
/// `<section>.dispersion`, or `relaxed` from the zero field over
/// `<section>.relax_time`.
fn initial_measure(exp: &Experiment, section: &str) -> Result<InitialMeasure> {
    let key = format!("{section}.initial");
    match exp.config.str(&key)? {
        "point" => Ok(InitialMeasure::Point(zero(exp))),
        "dispersed" => Ok(InitialMeasure::Dispersed {
            scale: exp.config.positive(&format!("{section}.dispersion"))?,
        }),
        "relaxed" => Ok(InitialMeasure::Relaxed {
            from: zero(exp),
            time: exp.config.positive(&format!("{section}.relax_time"))?,
        }),
        other => Err(exp
            .config
            .error(&key, format!("expected `point`, `dispersed` or `relaxed`, found `{other}`"))
            .into()),
    }
}
