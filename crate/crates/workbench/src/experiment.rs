//! Model objects resolved from a [`Config`], and the seed ledger.

use std::sync::Arc;

use fkns_core::eigen::{KbConfig, PullbackConfig, SymbolGrid, TripleConfig};
use fkns_core::feynman_kac::FkEngine;
use fkns_core::integrator::Integrator;
use fkns_core::model::{ForcingSpec, NoiseSpec, SimulationParams};
use fkns_core::potential::{PotentialSpec, PotentialTerm, TrigProfile};
use fkns_core::{SpectralField, TorusSpec};
use serde::Serialize;

use crate::config::{Config, ConfigError};

/// Named stream keys handed to the pipeline stages. Each stage gets its own
/// block `index << 32`, and the core derives per-path child streams from it.
#[derive(Clone, Debug, Default, Serialize)]
pub struct SeedLedger {
    pub seed: u64,
    pub streams: Vec<(String, u64)>,
}

impl SeedLedger {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            streams: Vec::new(),
        }
    }

    pub fn stream(&mut self, name: &str) -> u64 {
        if let Some((_, s)) = self.streams.iter().find(|(n, _)| n == name) {
            return *s;
        }
        let s = (self.streams.len() as u64 + 1) << 32;
        self.streams.push((name.to_string(), s));
        s
    }
}

pub struct Experiment {
    pub config: Config,
    pub torus: Arc<TorusSpec>,
    pub engine: FkEngine,
    pub potential: PotentialSpec,
    pub ledger: SeedLedger,
}

fn core_err(key: &str) -> impl Fn(fkns_core::Error) -> ConfigError + '_ {
    move |e| ConfigError::Value {
        key: key.to_string(),
        message: e.to_string(),
    }
}

/// Noise directions from the config, possibly empty.
pub fn noise_directions(config: &Config, torus: &Arc<TorusSpec>) -> Result<Vec<SpectralField>, ConfigError> {
    let amp = config.f64("noise.amplitude")?;
    let modes = config.modes("noise.modes")?;
    let sine = config.bool("noise.include_sine")?;
    if amp == 0.0 || !amp.is_finite() {
        if modes.is_empty() {
            return Ok(Vec::new());
        }
        return Err(config.error("noise.amplitude", "must be nonzero and finite when noise modes are listed"));
    }
    let mut out = Vec::new();
    for &k in &modes {
        out.push(SpectralField::cos_mode(torus, k, amp).map_err(core_err("noise.modes"))?);
    }
    if sine {
        for &k in &modes {
            out.push(SpectralField::sin_mode(torus, k, amp).map_err(core_err("noise.modes"))?);
        }
    }
    Ok(out)
}

/// Dictionary potential with the configured coordinates.
pub fn dictionary(config: &Config) -> Result<PotentialSpec, ConfigError> {
    let observables = config.observables("potential.observables")?;
    let scales = config.f64_list("potential.scales")?;
    if scales.len() != observables.len() {
        return Err(config.error(
            "potential.scales",
            format!("{} scales for {} observables", scales.len(), observables.len()),
        ));
    }
    let harmonics = config.usize("potential.harmonics")?;
    let terms = observables
        .iter()
        .zip(&scales)
        .map(|(&o, &s)| {
            let profile = TrigProfile {
                mean: 0.0,
                cos: vec![0.0; harmonics],
                sin: vec![0.0; harmonics],
            };
            PotentialTerm::new(o, s, profile).map_err(core_err("potential.scales"))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let base = PotentialSpec::new(config.f64("potential.offset")?, terms);
    let theta = config.f64_list("potential.theta")?;
    if theta.is_empty() {
        return Ok(base);
    }
    if theta.len() != base.n_coords() {
        return Err(config.error(
            "potential.theta",
            format!("{} coefficients given, the dictionary has {}", theta.len(), base.n_coords()),
        ));
    }
    if theta.iter().any(|x| !x.is_finite()) {
        return Err(config.error("potential.theta", "coefficients must be finite"));
    }
    Ok(base.with_coordinates(&theta))
}

impl Experiment {
    pub fn new(config: Config) -> Result<Self, ConfigError> {
        let k = config.usize("torus.truncation")?;
        let n = config.usize("torus.grid")?;
        let k = u32::try_from(k).map_err(|_| config.error("torus.truncation", "too large"))?;
        let torus = TorusSpec::new(k, n).map_err(core_err("torus"))?;
        let params =
            SimulationParams::new(&torus, config.positive("params.viscosity")?, config.positive("params.dt")?)
                .map_err(core_err("params"))?;
        let amp = config.f64("forcing.amplitude")?;
        let forcing = if amp == 0.0 {
            ForcingSpec::zero(&torus)
        } else {
            ForcingSpec::standard(&torus, amp).map_err(core_err("forcing.amplitude"))?
        };
        let directions = noise_directions(&config, &torus)?;
        let noise = if directions.is_empty() {
            None
        } else {
            Some(NoiseSpec::new(directions).map_err(core_err("noise.modes"))?)
        };
        let seed = config.u64("seed")?;
        let engine = FkEngine::new(Integrator::new(params, forcing, noise), seed);
        let potential = dictionary(&config)?;
        Ok(Self {
            config,
            torus,
            engine,
            potential,
            ledger: SeedLedger::new(seed),
        })
    }

    pub fn integrator(&self) -> &Integrator {
        self.engine.integrator()
    }

    pub fn symbol_grid(&self) -> Result<SymbolGrid, ConfigError> {
        SymbolGrid::new(self.config.count("eigen.grid")?).map_err(core_err("eigen.grid"))
    }

    /// Triple settings from the `eigen.*` keys; `with_eigenfunction` adds the
    /// Krylov-Bogolyubov tables.
    pub fn triple_config(&mut self, label: &str, with_eigenfunction: bool) -> Result<TripleConfig, ConfigError> {
        let c = &self.config;
        let pullback = PullbackConfig {
            n_particles: c.count("eigen.particles")?,
            n_iters: c.count("eigen.iterations")?,
            dispersion: c.positive("eigen.dispersion")?,
            ..Default::default()
        };
        let kb = if with_eigenfunction {
            Some(KbConfig {
                k_terms: c.count("eigen.kb_terms")?,
                n_paths: c.count("eigen.kb_paths")?,
                n_eval: c.count("eigen.kb_eval")?,
                stream: 0,
            })
        } else {
            None
        };
        let mut cfg = TripleConfig {
            pullback,
            kb,
            multiplier_stream: 0,
        };
        cfg.pullback.stream = self.ledger.stream(&format!("{label}.pullback"));
        cfg.multiplier_stream = self.ledger.stream(&format!("{label}.multiplier"));
        if let Some(kb) = cfg.kb.as_mut() {
            kb.stream = self.ledger.stream(&format!("{label}.eigenfunction"));
        }
        Ok(cfg)
    }
}
