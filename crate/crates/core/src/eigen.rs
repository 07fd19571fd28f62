//! Eigen-triple estimation `(Γ^V, λ^V, F^V)` on a uniform symbol grid.
//!
//! * `Γ^V(h)` by sequential Monte Carlo pullback: a chain started at
//!   `β_{−n}h` is pushed forward one unit of time per iteration with
//!   Feynman-Kac weights, renormalized and resampled when the effective
//!   sample size drops below a threshold. After `n` iterations it realizes
//!   `(S₁^V)ⁿ μ (h)`.
//! * `λ^V(h) = ⟨V(·,h), Γ^V(h)⟩`, with the one-step multiplier
//!   `λ̂_{1,h} = (P^{V*}_{0,1,h} Γ^V(h))(H)` as a cross-check.
//! * `F^V(w, h)` by Krylov-Bogolyubov averaging of
//!   `P^V_{0,ℓ,h} 1(w) / λ_{ℓ,h}`, then rescaled so `⟨Γ^V(h), F^V(·,h)⟩ = 1`.
//!
//! Everything is computed for the variable part `V − offset`: the constant
//! offset shifts `λ^V` and cancels from `Γ^V` and `F^V`, so the triples of
//! `V` and `V + c` share particles and tables exactly.

use std::f64::consts::TAU;

use rayon::prelude::*;

use crate::ensemble::{bl_distance, TestObservable, WeightedEnsemble};
use crate::error::{invalid, Error, Result};
use crate::feynman_kac::{par_map, run_weighted, FkEngine, FkEstimate};
use crate::model::TimeSymbol;
use crate::potential::{Observable, PotentialSpec};
use crate::rng::{derive_stream, uniform_at, NoisePath};
use crate::spectral::{SpectralField, TorusSpec, Wavenumber};
use crate::stats;

/// Uniform grid `h_j = 2πj/n` carrying the normalized Lebesgue measure.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SymbolGrid {
    n: usize,
}

impl SymbolGrid {
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(invalid("grid.n_h", "must be at least 1"));
        }
        Ok(Self { n })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn node(&self, j: usize) -> TimeSymbol {
        TimeSymbol::new(TAU * j as f64 / self.n as f64)
    }

    pub fn nodes(&self) -> Vec<TimeSymbol> {
        (0..self.n).map(|j| self.node(j)).collect()
    }

    pub fn weight(&self) -> f64 {
        1.0 / self.n as f64
    }

    /// Grid average `Σ_j f(h_j) / n`.
    pub fn average(&self, values: &[f64]) -> f64 {
        values.iter().sum::<f64>() / self.n as f64
    }
}

/// Trigonometric interpolant of a table on a [`SymbolGrid`], with its
/// integral along the rotation `r ↦ β_r h`.
#[derive(Clone, Debug, PartialEq)]
pub struct TrigInterpolant {
    mean: f64,
    cos: Vec<f64>,
    sin: Vec<f64>,
}

impl TrigInterpolant {
    /// Exact interpolant through `values[j]` at `h_j = 2πj/n`. For even `n`
    /// the Nyquist term is a pure cosine.
    pub fn from_table(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Self {
                mean: 0.0,
                cos: vec![],
                sin: vec![],
            };
        }
        let nf = n as f64;
        let mean = values.iter().sum::<f64>() / nf;
        let top = n / 2;
        let mut cos = Vec::with_capacity(top);
        let mut sin = Vec::with_capacity(top);
        for m in 1..=top {
            let (mut a, mut b) = (0.0, 0.0);
            for (j, v) in values.iter().enumerate() {
                let x = TAU * (m * j) as f64 / nf;
                a += v * x.cos();
                b += v * x.sin();
            }
            if 2 * m == n {
                cos.push(a / nf);
                sin.push(0.0);
            } else {
                cos.push(2.0 * a / nf);
                sin.push(2.0 * b / nf);
            }
        }
        if values.iter().all(|v| *v == 0.0) {
            cos.fill(0.0);
            sin.fill(0.0);
        }
        Self { mean, cos, sin }
    }

    pub fn eval(&self, h: TimeSymbol) -> f64 {
        let h = h.value();
        let mut v = self.mean;
        for (i, (a, b)) in self.cos.iter().zip(&self.sin).enumerate() {
            let m = (i + 1) as f64;
            v += a * (m * h).cos() + b * (m * h).sin();
        }
        v
    }

    /// `∫₀ᵗ p(β_r h) dr`, in closed form.
    pub fn integral(&self, h: TimeSymbol, t: f64) -> f64 {
        let h = h.value();
        let mut v = self.mean * t;
        for (i, (a, b)) in self.cos.iter().zip(&self.sin).enumerate() {
            if *a == 0.0 && *b == 0.0 {
                continue;
            }
            let m = (i + 1) as f64;
            let (s1, c1) = (m * (h + t)).sin_cos();
            let (s0, c0) = (m * h).sin_cos();
            v += a * (s1 - s0) / m - b * (c1 - c0) / m;
        }
        v
    }
}

/// Pullback chain settings.
#[derive(Clone, Debug, PartialEq)]
pub struct PullbackConfig {
    /// Particles per symbol, split into two halves with different initial
    /// measures.
    pub n_particles: usize,
    pub n_iters: usize,
    /// Resample a half when its ESS falls below this fraction of its size.
    pub resample_fraction: f64,
    /// Spread of the dispersed initial half; the other half starts at 0.
    pub dispersion: f64,
    pub stream: u64,
}

impl Default for PullbackConfig {
    fn default() -> Self {
        Self {
            n_particles: 256,
            n_iters: 64,
            resample_fraction: 0.5,
            dispersion: 1.0,
            stream: 0x6569_6765,
        }
    }
}

/// Convergence record of one pullback chain.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ChainDiagnostics {
    /// BL distance between the two halves after each iteration.
    pub bl_trace: Vec<f64>,
    /// BL distance between even and odd particles of one half at the end.
    pub noise_floor: f64,
    pub converged: bool,
    /// `log λ̂₁` of each iteration (variable part).
    pub log_multipliers: Vec<f64>,
    pub resamples: usize,
    pub min_ess: f64,
}

/// Test family used for BL distances: the potential's own observables plus
/// the lowest modes and the energy.
pub fn bl_family(v: &PotentialSpec) -> Vec<TestObservable> {
    let mut fam: Vec<TestObservable> = v
        .terms
        .iter()
        .filter(|t| !t.observable.is_bounded())
        .map(|t| TestObservable {
            observable: t.observable,
            scale: t.scale,
        })
        .collect();
    for k in [Wavenumber::new(1, 0), Wavenumber::new(0, 1)] {
        for o in [Observable::ModeCos(k), Observable::ModeSin(k)] {
            fam.push(TestObservable {
                observable: o,
                scale: 1.0,
            });
        }
    }
    fam.push(TestObservable {
        observable: Observable::Energy,
        scale: 1.0,
    });
    fam
}

/// Smooth random field with `ŵ(k) = s (ξ + iη) / (√2 |k|²)`, drawn from `path`.
pub fn dispersed_field(spec: &std::sync::Arc<TorusSpec>, scale: f64, path: &NoisePath) -> SpectralField {
    let n = spec.n_modes();
    let draws = path.increment(2 * n, 1.0, 0);
    let mut w = SpectralField::zeros(spec);
    for (i, (c, k)) in w.coeffs_mut().iter_mut().zip(spec.modes()).enumerate() {
        let f = scale / (std::f64::consts::SQRT_2 * k.norm_sq());
        *c = num_complex::Complex64::new(draws[2 * i] * f, draws[2 * i + 1] * f);
    }
    w
}

const TAG_PATH: u64 = 1;
const TAG_RESAMPLE: u64 = 2;
const TAG_INIT: u64 = 3;

struct Half {
    particles: Vec<SpectralField>,
    weights: Vec<f64>,
}

impl Half {
    fn ensemble(&self) -> Result<WeightedEnsemble> {
        WeightedEnsemble::new(self.particles.clone(), self.weights.clone())
    }
}

/// Pullback eigenmeasure chains ending at each target symbol. Each chain
/// applies `n_iters` unit pushes starting from `β_{−n_iters} h` and returns
/// the normalized ensemble. Its first half of particles is the chain that
/// started from `δ₀`, the second half the one from a dispersed measure.
pub fn eigenmeasure_at(
    engine: &FkEngine,
    v: &PotentialSpec,
    targets: &[TimeSymbol],
    cfg: &PullbackConfig,
) -> Result<Vec<(WeightedEnsemble, ChainDiagnostics)>> {
    if cfg.n_iters == 0 {
        return Err(invalid("pullback.n_iters", "must be at least 1"));
    }
    let half = cfg.n_particles / 2;
    if half < 2 {
        return Err(invalid("pullback.n_particles", "need at least 4 particles"));
    }
    let spec = engine.integrator().torus().clone();
    let n_unit = engine.steps_for(1.0);
    let family = bl_family(v);
    let n_chains = targets.len() * 2;

    let mut halves: Vec<Half> = (0..n_chains)
        .map(|c| {
            let particles = (0..half)
                .map(|p| {
                    if c % 2 == 0 {
                        SpectralField::zeros(&spec)
                    } else {
                        let path = engine.path(cfg.stream, &[TAG_INIT, c as u64, p as u64]);
                        dispersed_field(&spec, cfg.dispersion, &path)
                    }
                })
                .collect();
            Half {
                particles,
                weights: vec![1.0 / half as f64; half],
            }
        })
        .collect();
    let mut diags = vec![
        ChainDiagnostics {
            min_ess: f64::INFINITY,
            ..Default::default()
        };
        targets.len()
    ];

    for it in 0..cfg.n_iters {
        let back = (cfg.n_iters - it) as f64;
        let pushed = par_map(engine.integrator(), n_chains * half, |st, idx| {
            let (c, p) = (idx / half, idx % half);
            let node = c / 2;
            let start = targets[node].shift(-back);
            let path = engine.path(cfg.stream, &[TAG_PATH, node as u64, it as u64, (c % 2) as u64, p as u64]);
            let r = run_weighted(st, &halves[c].particles[p], start, n_unit, &path, 0, &[v], 0)?;
            Ok((r.state, r.variable[0]))
        })?;
        let mut pushed = pushed.into_iter();
        let mut log_mass = vec![0.0; n_chains];
        for (c, hf) in halves.iter_mut().enumerate() {
            let node = c / 2;
            let (states, logs): (Vec<_>, Vec<_>) = pushed.by_ref().take(half).unzip();
            let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let raw: Vec<f64> = hf.weights.iter().zip(&logs).map(|(w, a)| w * (a - max).exp()).collect();
            let total: f64 = raw.iter().sum();
            if !(total.is_finite() && total > 0.0) {
                return Err(Error::NonFiniteWeight { time: it as f64 + 1.0 });
            }
            log_mass[c] = max + (total / hf.weights.iter().sum::<f64>()).ln();
            hf.particles = states;
            hf.weights = raw.iter().map(|w| w / total).collect();
            let ess = 1.0 / hf.weights.iter().map(|w| w * w).sum::<f64>();
            diags[node].min_ess = diags[node].min_ess.min(ess);
            if ess < 2.0 {
                return Err(Error::EnsembleCollapse {
                    symbol: targets[node].value(),
                    ess,
                });
            }
            if ess < cfg.resample_fraction * half as f64 {
                let key = derive_stream(cfg.stream, &[TAG_RESAMPLE, node as u64, it as u64, (c % 2) as u64]);
                let u = uniform_at(engine.seed(), key);
                let r = hf.ensemble()?.systematic_resample(half, u);
                let (p, _) = r.into_parts();
                hf.particles = p;
                hf.weights = vec![1.0 / half as f64; half];
                diags[node].resamples += 1;
            }
        }
        for (node, d) in diags.iter_mut().enumerate() {
            let a = halves[2 * node].ensemble()?;
            let b = halves[2 * node + 1].ensemble()?;
            d.bl_trace.push(bl_distance(&a, &b, &family));
            let (la, lb) = (log_mass[2 * node], log_mass[2 * node + 1]);
            let m = la.max(lb);
            d.log_multipliers.push(m + (0.5 * ((la - m).exp() + (lb - m).exp())).ln());
        }
    }

    let mut out = Vec::with_capacity(targets.len());
    for (node, mut d) in diags.into_iter().enumerate() {
        let a = halves[2 * node].ensemble()?;
        let b = halves[2 * node + 1].ensemble()?;
        d.noise_floor = bl_distance(&a.strided(0, 2)?, &a.strided(1, 2)?, &family);
        d.converged = d.bl_trace.last().is_some_and(|x| *x <= 2.0 * d.noise_floor);
        let merged = a.scaled(0.5)?.merge(&b.scaled(0.5)?);
        out.push((merged.normalized(), d));
    }
    Ok(out)
}

/// [`eigenmeasure_at`] on every node of the grid.
pub fn eigenmeasure_pullback(
    engine: &FkEngine,
    v: &PotentialSpec,
    grid: &SymbolGrid,
    cfg: &PullbackConfig,
) -> Result<Vec<(WeightedEnsemble, ChainDiagnostics)>> {
    eigenmeasure_at(engine, v, &grid.nodes(), cfg)
}

/// `λ^V(h) = ⟨V(·,h), Γ^V(h)⟩` split as `(variable part, std error)`; the
/// full value is `offset + variable`.
pub fn eigenvalue_variable(v: &PotentialSpec, gamma: &WeightedEnsemble, h: TimeSymbol) -> (f64, f64) {
    if v.is_constant() {
        return (0.0, 0.0);
    }
    gamma.mean_se(|w| v.eval_variable(w, h))
}

/// `λ^V(h) = ⟨V(·,h), Γ^V(h)⟩`.
pub fn eigenvalue(v: &PotentialSpec, gamma: &WeightedEnsemble, h: TimeSymbol) -> f64 {
    v.offset + eigenvalue_variable(v, gamma, h).0
}

/// `log` of the mass of `P^{V*}_{0,t,h} μ / μ(H)` for the variable part of
/// `V`, with the relative standard error of the mass.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LogMass {
    pub variable: f64,
    pub rel_se: f64,
    pub steps: usize,
}

impl LogMass {
    pub fn full(&self, v: &PotentialSpec, dt: f64) -> f64 {
        v.offset * (self.steps as f64 * dt) + self.variable
    }
}

/// Pushes `mu` forward from `h`, one fresh path per particle, and reports the
/// log mass growth after each of `units` (increasing, in whole time units),
/// all read off the same paths.
pub fn push_log_mass(
    engine: &FkEngine,
    v: &PotentialSpec,
    mu: &WeightedEnsemble,
    h: TimeSymbol,
    units: &[usize],
    stream: u64,
) -> Result<Vec<LogMass>> {
    let n_unit = engine.steps_for(1.0);
    let last = units.iter().copied().max().unwrap_or(0);
    let marks = par_map(engine.integrator(), mu.len(), |st, i| {
        let path = engine.path(stream, &[i as u64]);
        let r = run_weighted(st, &mu.particles()[i], h, last * n_unit, &path, 0, &[v], n_unit.max(1))?;
        Ok(r.marks)
    })?;
    Ok(units
        .iter()
        .map(|&u| {
            let xs: Vec<f64> = marks.iter().map(|m| m.get(u).copied().unwrap_or(0.0)).collect();
            let shift = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = xs.iter().map(|x| (x - shift).exp()).collect();
            let (mean, se) = stats::weighted_mean_se(mu.weights(), &e);
            LogMass {
                variable: shift + mean.ln(),
                rel_se: se / mean,
                steps: u * n_unit,
            }
        })
        .collect())
}

/// Krylov-Bogolyubov settings for the eigenfunction.
#[derive(Clone, Debug, PartialEq)]
pub struct KbConfig {
    pub k_terms: usize,
    /// Paths per evaluation point.
    pub n_paths: usize,
    /// Evaluation points per node: the zero field plus particles of `Γ(h_j)`.
    pub n_eval: usize,
    pub stream: u64,
}

impl Default for KbConfig {
    fn default() -> Self {
        Self {
            k_terms: 10,
            n_paths: 128,
            n_eval: 3,
            stream: 0x6b62,
        }
    }
}

/// Per-node eigenfunction table.
#[derive(Clone, Debug, PartialEq)]
pub struct EigenfunctionNode {
    pub points: Vec<SpectralField>,
    /// Normalized values `F^V(w, h_j)`.
    pub values: Vec<f64>,
    pub std_errors: Vec<f64>,
    /// `⟨Γ(h_j), F_k(·, h_j)⟩` before normalization.
    pub norm_const: f64,
    pub norm_const_se: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EigenfunctionTable {
    pub k_terms: usize,
    pub n_paths: usize,
    pub nodes: Vec<EigenfunctionNode>,
}

/// Full triple settings.
#[derive(Clone, Debug, PartialEq)]
pub struct TripleConfig {
    pub pullback: PullbackConfig,
    /// Eigenfunction tables; `None` skips them.
    pub kb: Option<KbConfig>,
    pub multiplier_stream: u64,
}

impl Default for TripleConfig {
    fn default() -> Self {
        Self {
            pullback: PullbackConfig::default(),
            kb: Some(KbConfig::default()),
            multiplier_stream: 0x6d75_6c74,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EigenTripleEstimate {
    pub potential: PotentialSpec,
    pub grid: SymbolGrid,
    /// `Γ^V(h_j)`, mass 1.
    pub gamma: Vec<WeightedEnsemble>,
    /// `λ^V(h_j) − offset`.
    pub lambda_variable: Vec<f64>,
    pub lambda_se: Vec<f64>,
    /// `log λ̂_{1,h_j}` (full, including the offset) and its standard error.
    pub log_multiplier: Vec<f64>,
    pub log_multiplier_se: Vec<f64>,
    pub diagnostics: Vec<ChainDiagnostics>,
    pub eigf: Option<EigenfunctionTable>,
}

impl EigenTripleEstimate {
    pub fn lambda(&self, j: usize) -> f64 {
        self.potential.offset + self.lambda_variable[j]
    }

    pub fn lambda_table(&self) -> Vec<f64> {
        (0..self.grid.len()).map(|j| self.lambda(j)).collect()
    }

    /// Interpolated `λ^V − offset` along the circle.
    pub fn lambda_profile(&self) -> TrigInterpolant {
        TrigInterpolant::from_table(&self.lambda_variable)
    }

    /// `∫₀¹ λ^V(β_r h_j) dr` from the interpolated table.
    pub fn integrated_lambda(&self, j: usize) -> f64 {
        self.potential.offset + self.lambda_profile().integral(self.grid.node(j), 1.0)
    }

    /// `λ^V(h_j) − offset` from each of the two independent half chains.
    pub fn half_lambdas(&self, j: usize) -> Result<(f64, f64)> {
        let g = &self.gamma[j];
        let half = g.len() / 2;
        let (p, w) = (g.particles(), g.weights());
        let h = self.grid.node(j);
        let a = WeightedEnsemble::new(p[..half].to_vec(), w[..half].to_vec())?.normalized();
        let b = WeightedEnsemble::new(p[half..].to_vec(), w[half..].to_vec())?.normalized();
        Ok((
            eigenvalue_variable(&self.potential, &a, h).0,
            eigenvalue_variable(&self.potential, &b, h).0,
        ))
    }

    /// Interpolated normalization constant (through its logarithm).
    pub fn norm_const_profile(&self) -> Option<TrigInterpolant> {
        let t = self.eigf.as_ref()?;
        let logs: Vec<f64> = t.nodes.iter().map(|n| n.norm_const.ln()).collect();
        Some(TrigInterpolant::from_table(&logs))
    }
}

/// Builds the triple for `v` on `grid`.
pub fn build_triple(
    engine: &FkEngine,
    v: &PotentialSpec,
    grid: &SymbolGrid,
    cfg: &TripleConfig,
) -> Result<EigenTripleEstimate> {
    let chains = eigenmeasure_pullback(engine, v, grid, &cfg.pullback)?;
    let (gamma, diagnostics): (Vec<_>, Vec<_>) = chains.into_iter().unzip();
    let mut lambda_variable = Vec::with_capacity(grid.len());
    let mut lambda_se = Vec::with_capacity(grid.len());
    let mut log_multiplier = Vec::with_capacity(grid.len());
    let mut log_multiplier_se = Vec::with_capacity(grid.len());
    for (j, g) in gamma.iter().enumerate() {
        let h = grid.node(j);
        let (l, se) = eigenvalue_variable(v, g, h);
        lambda_variable.push(l);
        lambda_se.push(se);
        let m = push_log_mass(engine, v, g, h, &[1], derive_stream(cfg.multiplier_stream, &[j as u64]))?[0];
        log_multiplier.push(m.full(v, engine.dt()));
        log_multiplier_se.push(m.rel_se);
    }
    let mut triple = EigenTripleEstimate {
        potential: v.clone(),
        grid: *grid,
        gamma,
        lambda_variable,
        lambda_se,
        log_multiplier,
        log_multiplier_se,
        diagnostics,
        eigf: None,
    };
    if let Some(kb) = &cfg.kb {
        triple.eigf = Some(eigenfunction_tables(engine, &triple, kb)?);
    }
    Ok(triple)
}

/// Single-path Krylov-Bogolyubov sample
/// `(1/k) Σ_{ℓ<k} exp(A_ℓ − ∫₀^ℓ λ(β_r h) dr)` from the unit marks of a path.
fn kb_from_marks(marks: &[f64], profile: &TrigInterpolant, h: TimeSymbol, k: usize) -> f64 {
    let sum: f64 = (0..k)
        .map(|l| (marks[l] - profile.integral(h, l as f64)).exp())
        .sum();
    sum / k as f64
}

/// Runs `k − 1` units from `(w, h)` on `path` from step `first_step` and
/// returns the single-path Krylov-Bogolyubov sample.
#[allow(clippy::too_many_arguments)]
fn kb_sample(
    st: &mut crate::integrator::Stepper<'_>,
    v: &PotentialSpec,
    profile: &TrigInterpolant,
    w: &SpectralField,
    h: TimeSymbol,
    k: usize,
    n_unit: usize,
    path: &NoisePath,
    first_step: u64,
) -> Result<f64> {
    let r = run_weighted(st, w, h, (k - 1) * n_unit, path, first_step, &[v], n_unit.max(1))?;
    Ok(kb_from_marks(&r.marks, profile, h, k))
}

/// Unnormalized `F_k(w, h)` at each point.
#[allow(clippy::too_many_arguments)]
pub fn eigenfunction_kb(
    engine: &FkEngine,
    v: &PotentialSpec,
    profile: &TrigInterpolant,
    h: TimeSymbol,
    points: &[SpectralField],
    k_terms: usize,
    n_paths: usize,
    stream: u64,
) -> Result<Vec<FkEstimate>> {
    if k_terms == 0 {
        return Err(invalid("kb.k_terms", "must be at least 1"));
    }
    let n_unit = engine.steps_for(1.0);
    let ys = par_map(engine.integrator(), points.len() * n_paths, |st, idx| {
        let (a, p) = (idx / n_paths, idx % n_paths);
        let path = engine.path(stream, &[a as u64, p as u64]);
        kb_sample(st, v, profile, &points[a], h, k_terms, n_unit, &path, 0)
    })?;
    Ok(ys.chunks(n_paths).map(FkEstimate::from_samples).collect())
}

/// `⟨μ, F_k(·, h)⟩ / μ(H)` with one path per particle.
pub fn kb_normalization(
    engine: &FkEngine,
    v: &PotentialSpec,
    profile: &TrigInterpolant,
    h: TimeSymbol,
    mu: &WeightedEnsemble,
    k_terms: usize,
    stream: u64,
) -> Result<(f64, f64)> {
    let n_unit = engine.steps_for(1.0);
    let ys = par_map(engine.integrator(), mu.len(), |st, i| {
        let path = engine.path(stream, &[i as u64]);
        kb_sample(st, v, profile, &mu.particles()[i], h, k_terms, n_unit, &path, 0)
    })?;
    Ok(stats::weighted_mean_se(mu.weights(), &ys))
}

fn eval_points(gamma: &WeightedEnsemble, n_eval: usize) -> Vec<SpectralField> {
    let spec = gamma.particles()[0].spec().clone();
    let mut pts = vec![SpectralField::zeros(&spec)];
    let extra = n_eval.saturating_sub(1);
    for i in 0..extra {
        let idx = (2 * i + 1) * gamma.len() / (2 * extra);
        pts.push(gamma.particles()[idx.min(gamma.len() - 1)].clone());
    }
    pts
}

fn eigenfunction_tables(engine: &FkEngine, triple: &EigenTripleEstimate, kb: &KbConfig) -> Result<EigenfunctionTable> {
    let v = &triple.potential;
    let profile = triple.lambda_profile();
    let mut nodes = Vec::with_capacity(triple.grid.len());
    for j in 0..triple.grid.len() {
        let h = triple.grid.node(j);
        let points = eval_points(&triple.gamma[j], kb.n_eval);
        let raw = eigenfunction_kb(engine, v, &profile, h, &points, kb.k_terms, kb.n_paths, derive_stream(kb.stream, &[j as u64, 0]))?;
        let (c, c_se) = kb_normalization(engine, v, &profile, h, &triple.gamma[j], kb.k_terms, derive_stream(kb.stream, &[j as u64, 1]))?;
        let values: Vec<f64> = raw.iter().map(|e| e.value / c).collect();
        if let Some(bad) = values.iter().find(|x| !(**x > 0.0 && x.is_finite())) {
            return Err(Error::NonPositiveEigenfunction {
                value: *bad,
                symbol: h.value(),
            });
        }
        nodes.push(EigenfunctionNode {
            points,
            values,
            std_errors: raw.iter().map(|e| e.std_error / c).collect(),
            norm_const: c,
            norm_const_se: c_se,
        });
    }
    Ok(EigenfunctionTable {
        k_terms: kb.k_terms,
        n_paths: kb.n_paths,
        nodes,
    })
}

/// Re-estimates `⟨Γ^V(h_j), F^V(·,h_j)⟩` with fresh paths, per node.
pub fn normalization_check(engine: &FkEngine, triple: &EigenTripleEstimate, stream: u64) -> Result<Vec<(f64, f64)>> {
    let t = triple
        .eigf
        .as_ref()
        .ok_or_else(|| invalid("triple", "eigenfunction tables were not built"))?;
    let profile = triple.lambda_profile();
    (0..triple.grid.len())
        .map(|j| {
            let node = &t.nodes[j];
            let (c, se) = kb_normalization(
                engine,
                &triple.potential,
                &profile,
                triple.grid.node(j),
                &triple.gamma[j],
                t.k_terms,
                derive_stream(stream, &[j as u64]),
            )?;
            Ok((c / node.norm_const, se / node.norm_const))
        })
        .collect()
}

/// Result of [`eigenvalue_cocycle_residual`].
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EigenCocycleReport {
    /// Per node `|λ̂_{m+l,h} − λ̂_{m,β_l h} λ̂_{l,h}| / λ̂_{m+l,h}`.
    pub relative: Vec<f64>,
    /// The same discrepancy in units of its joint standard error.
    pub z: Vec<f64>,
}

impl EigenCocycleReport {
    pub fn max_relative(&self) -> f64 {
        self.relative.iter().copied().fold(0.0, f64::max)
    }

    pub fn max_z(&self) -> f64 {
        self.z.iter().copied().fold(0.0, f64::max)
    }
}

/// Cocycle residual of the eigenvalue multipliers
/// `λ_{m+l,h} = λ_{m,β_l h} λ_{l,h}` at every node. `λ̂_{l,h}` and
/// `λ̂_{m+l,h}` are read off the same paths from `Γ(h_j)`; `λ̂_{m,β_l h}` uses
/// an eigenmeasure chain ending at `β_l h_j` and independent paths.
pub fn eigenvalue_cocycle_residual(
    engine: &FkEngine,
    triple: &EigenTripleEstimate,
    m: usize,
    l: usize,
    extra: &PullbackConfig,
    stream: u64,
) -> Result<EigenCocycleReport> {
    let v = &triple.potential;
    let grid = &triple.grid;
    let shifted: Vec<TimeSymbol> = grid.nodes().iter().map(|h| h.shift(l as f64)).collect();
    let chains = eigenmeasure_at(engine, v, &shifted, extra)?;
    let mut report = EigenCocycleReport::default();
    for j in 0..grid.len() {
        let h = grid.node(j);
        let own = push_log_mass(engine, v, &triple.gamma[j], h, &[l, m + l], derive_stream(stream, &[j as u64, 0]))?;
        let other = push_log_mass(engine, v, &chains[j].0, shifted[j], &[m], derive_stream(stream, &[j as u64, 1]))?[0];
        let (ll, lml) = (own[0], own[1]);
        // The offset enters as offset·dt·(steps difference), an exact zero.
        let offset_gap = v.offset * engine.dt() * (lml.steps as f64 - ll.steps as f64 - other.steps as f64);
        let diff = other.variable + ll.variable - lml.variable - offset_gap;
        let rel = diff.exp_m1().abs();
        let sigma = (lml.rel_se.powi(2) + ll.rel_se.powi(2) + other.rel_se.powi(2)).sqrt();
        report.relative.push(rel);
        report.z.push(if rel == 0.0 { 0.0 } else { rel / sigma });
    }
    Ok(report)
}

/// Doob transform `T^V_{0,t,h} φ(w) = λ_{t,h}^{-1} F^V(w,h)^{-1} P^V_{0,t,h}(φ F^V(·, β_t h))(w)`.
///
/// `F^V` at the terminal pair of each path is a single-path
/// Krylov-Bogolyubov estimate (the path continued for `k − 1` more units)
/// divided by the interpolated normalization constant, which keeps the
/// per-path estimator unbiased for the tabulated eigenfunction.
///
/// Standard errors include the error of `∫λ` over the lag, which does not
/// cancel against `F`: per unit time it is the larger of the largest node
/// error of λ and the pooled half-chain disagreement.
pub struct DoobOperator<'a> {
    engine: &'a FkEngine,
    triple: &'a EigenTripleEstimate,
    table: &'a EigenfunctionTable,
    profile: TrigInterpolant,
    norm: TrigInterpolant,
    norm_rel_se: f64,
    lambda_se: f64,
}

impl<'a> DoobOperator<'a> {
    pub fn new(engine: &'a FkEngine, triple: &'a EigenTripleEstimate) -> Result<Self> {
        let table = triple
            .eigf
            .as_ref()
            .ok_or_else(|| invalid("triple", "eigenfunction tables were not built"))?;
        let norm_rel_se = table
            .nodes
            .iter()
            .map(|n| n.norm_const_se / n.norm_const)
            .fold(0.0, f64::max);
        let n = triple.grid.len();
        let mut spread = 0.0;
        for j in 0..n {
            let (a, b) = triple.half_lambdas(j)?;
            spread += (a - b).powi(2) / 4.0;
        }
        let lambda_se = triple.lambda_se.iter().copied().fold((spread / n as f64).sqrt(), f64::max);
        Ok(Self {
            engine,
            triple,
            table,
            profile: triple.lambda_profile(),
            norm: triple.norm_const_profile().unwrap_or_else(|| TrigInterpolant::from_table(&[0.0])),
            norm_rel_se,
            lambda_se,
        })
    }

    /// Interpolated normalization constant at `h`.
    pub fn norm_const(&self, h: TimeSymbol) -> f64 {
        self.norm.eval(h).exp()
    }

    /// `F^V(w, h)`: the table entry when `(w, h)` is tabulated, otherwise a
    /// fresh Krylov-Bogolyubov estimate normalized by the interpolated
    /// constant.
    pub fn eigenfunction(&self, w: &SpectralField, h: TimeSymbol, n_paths: usize, stream: u64) -> Result<FkEstimate> {
        for (j, node) in self.table.nodes.iter().enumerate() {
            if self.triple.grid.node(j) == h {
                if let Some(a) = node.points.iter().position(|p| p == w) {
                    return Ok(FkEstimate {
                        value: node.values[a],
                        std_error: node.std_errors[a],
                        n_paths: self.table.n_paths,
                    });
                }
            }
        }
        let raw = eigenfunction_kb(
            self.engine,
            &self.triple.potential,
            &self.profile,
            h,
            std::slice::from_ref(w),
            self.table.k_terms,
            n_paths,
            stream,
        )?[0];
        let c = self.norm_const(h);
        let value = raw.value / c;
        if !(value > 0.0) {
            return Err(Error::NonPositiveEigenfunction { value, symbol: h.value() });
        }
        Ok(FkEstimate {
            value,
            std_error: raw.std_error / c,
            n_paths,
        })
    }

    /// Per-path samples `exp(A_t − ∫λ) φ(w_t, β_t h) F̂(w_t, β_t h)` from
    /// `(w, h)`, with the `F̂` continuation on the same noise path.
    fn numerator_samples<P>(&self, phi: &P, t: f64, h: TimeSymbol, starts: &[&SpectralField], stream: u64) -> Result<Vec<f64>>
    where
        P: Fn(&SpectralField, TimeSymbol) -> f64 + Sync,
    {
        let engine = self.engine;
        let v = &self.triple.potential;
        let k = self.table.k_terms;
        let n_unit = engine.steps_for(1.0);
        let nt = engine.steps_for(t);
        let lam_t = self.profile.integral(h, t);
        par_map(engine.integrator(), starts.len(), |st, i| {
            let path = engine.path(stream, &[i as u64]);
            let first = run_weighted(st, starts[i], h, nt, &path, 0, &[v], 0)?;
            let y = kb_sample(st, v, &self.profile, &first.state, first.symbol, k, n_unit, &path, nt as u64)?;
            let f_end = y / self.norm_const(first.symbol);
            Ok((first.variable[0] - lam_t).exp() * phi(&first.state, first.symbol) * f_end)
        })
    }

    /// `T^V_{0,t,h} φ(w)` with `n_paths` paths; the standard error combines
    /// the path noise, the error of `F^V(w,h)` and the normalization spread.
    #[allow(clippy::too_many_arguments)]
    pub fn apply<P>(&self, phi: P, t: f64, h: TimeSymbol, w: &SpectralField, n_paths: usize, stream: u64) -> Result<FkEstimate>
    where
        P: Fn(&SpectralField, TimeSymbol) -> f64 + Sync,
    {
        let f0 = self.eigenfunction(w, h, n_paths, derive_stream(stream, &[0]))?;
        let starts = vec![w; n_paths];
        let z = self.numerator_samples(&phi, t, h, &starts, derive_stream(stream, &[1]))?;
        let num = FkEstimate::from_samples(&z);
        let value = num.value / f0.value;
        let rel = if num.value == 0.0 {
            0.0
        } else {
            (num.std_error / num.value).powi(2)
        };
        let rel = rel + (f0.std_error / f0.value).powi(2) + 2.0 * self.norm_rel_se.powi(2) + (t * self.lambda_se).powi(2);
        Ok(FkEstimate {
            value,
            std_error: value.abs() * rel.sqrt(),
            n_paths,
        })
    }

    /// Invariance of `γ_V(h) = F^V(·,h) Γ^V(h)` under the Doob cocycle:
    /// returns `(⟨γ_V(h_j), T^V_{0,1,h_j} φ⟩, ⟨γ_V(β₁h_j), φ⟩)` as estimates.
    /// `next` is an eigenmeasure ensemble at `β₁h_j`.
    pub fn invariance<P>(&self, phi: P, j: usize, next: &WeightedEnsemble, stream: u64) -> Result<(FkEstimate, FkEstimate)>
    where
        P: Fn(&SpectralField, TimeSymbol) -> f64 + Sync,
    {
        let h = self.triple.grid.node(j);
        let gamma = &self.triple.gamma[j];
        let starts: Vec<&SpectralField> = gamma.particles().iter().collect();
        // F(x, h) cancels against the Doob normalization in ⟨γ, T φ⟩.
        let z = self.numerator_samples(&phi, 1.0, h, &starts, derive_stream(stream, &[0]))?;
        let (lhs, lhs_se) = stats::weighted_mean_se(gamma.weights(), &z);
        let h1 = h.shift(1.0);
        let engine = self.engine;
        let v = &self.triple.potential;
        let k = self.table.k_terms;
        let n_unit = engine.steps_for(1.0);
        let c1 = self.norm_const(h1);
        let ys = par_map(engine.integrator(), next.len(), |st, i| {
            let path = engine.path(derive_stream(stream, &[1]), &[i as u64]);
            let x = &next.particles()[i];
            Ok(phi(x, h1) * kb_sample(st, v, &self.profile, x, h1, k, n_unit, &path, 0)? / c1)
        })?;
        let (rhs, rhs_se) = stats::weighted_mean_se(next.weights(), &ys);
        let extra = self.norm_rel_se * std::f64::consts::SQRT_2;
        Ok((
            FkEstimate {
                value: lhs,
                std_error: lhs_se.hypot(lhs.abs() * extra.hypot(self.lambda_se)),
                n_paths: gamma.len(),
            },
            FkEstimate {
                value: rhs,
                std_error: rhs_se.hypot(rhs.abs() * extra),
                n_paths: next.len(),
            },
        ))
    }
}

/// Residuals of the eigen-properties at lag `t`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EigenResiduals {
    /// Max over nodes of the BL distance between normalized
    /// `P^{V*}_{0,t,h}Γ(h)` and `Γ(β_t h)`.
    pub eigenmeasure: f64,
    /// Max over nodes and evaluation points of
    /// `|λ_{t,h}^{-1} P_{0,t,h} F(·,β_t h)(w) − F(w,h)| / F(w,h)`.
    pub eigenfunction: f64,
    /// The same in units of its standard error.
    pub eigenfunction_z: f64,
    /// Max over nodes and points of
    /// `|λ_{t,h}^{-1} P_{0,t,h} φ(w) − ⟨Γ(β_t h), φ⟩ F(w,h)|`.
    pub forward: f64,
}

/// Eigen-property residuals at lag `t` (whole units). `extra` configures
/// the eigenmeasure chains at `β_t h_j`.
#[allow(clippy::too_many_arguments)]
pub fn eigen_residuals<P>(
    engine: &FkEngine,
    triple: &EigenTripleEstimate,
    t: usize,
    phi: P,
    extra: &PullbackConfig,
    n_paths: usize,
    stream: u64,
) -> Result<EigenResiduals>
where
    P: Fn(&SpectralField, TimeSymbol) -> f64 + Sync,
{
    let v = &triple.potential;
    let doob = DoobOperator::new(engine, triple)?;
    let table = doob.table;
    let grid = &triple.grid;
    let family = bl_family(v);
    let shifted: Vec<TimeSymbol> = grid.nodes().iter().map(|h| h.shift(t as f64)).collect();
    let chains = eigenmeasure_at(engine, v, &shifted, extra)?;
    let profile = triple.lambda_profile();
    let nt = engine.steps_for(t as f64);
    let mut out = EigenResiduals::default();
    for j in 0..grid.len() {
        let h = grid.node(j);
        let key = derive_stream(stream, &[j as u64]);
        let pushed = engine.fk_measure_apply(&v.shifted(-v.offset), &triple.gamma[j], t as f64, h, derive_stream(key, &[0]))?;
        out.eigenmeasure = out.eigenmeasure.max(bl_distance(&pushed, &chains[j].0, &family));
        let target = chains[j].0.integrate(|w| phi(w, shifted[j]));
        let lam = profile.integral(h, t as f64);
        for (a, w) in table.nodes[j].points.iter().enumerate() {
            let pkey = derive_stream(key, &[1, a as u64]);
            let one = doob.apply(|_: &SpectralField, _| 1.0, t as f64, h, w, n_paths, pkey)?;
            let r = (one.value - 1.0).abs();
            out.eigenfunction = out.eigenfunction.max(r);
            if r > 0.0 {
                out.eigenfunction_z = out.eigenfunction_z.max(r / one.std_error);
            }
            let xs = par_map(engine.integrator(), n_paths, |st, p| {
                let path = engine.path(derive_stream(key, &[2, a as u64]), &[p as u64]);
                let r = run_weighted(st, w, h, nt, &path, 0, &[v], 0)?;
                Ok((r.variable[0] - lam).exp() * phi(&r.state, r.symbol))
            })?;
            let lhs = stats::mean_se(&xs).0;
            out.forward = out.forward.max((lhs - target * table.nodes[j].values[a]).abs());
        }
    }
    Ok(out)
}

/// Continuity check between a coarse grid and its refinement: max over
/// shared nodes of `|λ_n − λ_{2n}| / σ_joint`.
pub fn refinement_z(coarse: &EigenTripleEstimate, fine: &EigenTripleEstimate) -> f64 {
    (0..coarse.grid.len())
        .into_par_iter()
        .map(|j| {
            let k = 2 * j;
            let d = (coarse.lambda(j) - fine.lambda(k)).abs();
            if d == 0.0 {
                0.0
            } else {
                d / coarse.lambda_se[j].hypot(fine.lambda_se[k])
            }
        })
        .reduce(|| 0.0, f64::max)
}
