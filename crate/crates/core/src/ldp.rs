//! Occupation measures, the pressure function by path averages and by the
//! eigenvalue table, dictionary-relative Legendre transforms, and
//! deviation, CLT and hitting-time diagnostics.
//!
//! Time averages are trapezoid averages over the step grid, the same rule
//! that integrates Feynman-Kac weights, so `t⟨V, ζ_t⟩` is exactly the
//! log-weight of a path.

use std::collections::HashMap;
use std::f64::consts::TAU;

use crate::eigen::{build_triple, dispersed_field, eigenfunction_kb, EigenTripleEstimate, SymbolGrid, TripleConfig};
use crate::ensemble::WeightedEnsemble;
use crate::error::{invalid, Result};
use crate::feynman_kac::{par_map, run_weighted, FkEngine};
use crate::integrator::{Integrator, Stepper};
use crate::model::TimeSymbol;
use crate::potential::{Observable, PotentialSpec};
use crate::rng::{derive_stream, uniform_at, NoisePath};
use crate::spectral::SpectralField;
use crate::stats::{self, LineFit};

pub const MAX_HISTOGRAM_AXES: usize = 4;
pub const MAX_SYMBOL_BINS: usize = 16;
/// Largest normalized path weight tolerated before an ensemble is flagged.
pub const DEGENERATE_WEIGHT: f64 = 0.99;
/// Hits below this count make a deviation probability unreliable.
pub const HIT_FLOOR: usize = 10;

/// Test functional `φ(w, h)`.
pub type Functional<'a> = &'a (dyn Fn(&SpectralField, TimeSymbol) -> f64 + Sync);
/// Centering `h ↦ ⟨Γ(h), φ⟩`.
pub type Centering<'a> = &'a (dyn Fn(TimeSymbol) -> f64 + Sync);

/// Running trapezoid average of a scalar along the step grid. Values are
/// accumulated relative to the first one, so a constant averages to itself
/// exactly.
#[derive(Clone, Debug, Default)]
struct RunningAverage {
    first: f64,
    prev: f64,
    acc: f64,
    steps: usize,
}

impl RunningAverage {
    fn push(&mut self, x: f64) {
        self.acc += 0.5 * ((self.prev - self.first) + (x - self.first));
        self.steps += 1;
        self.prev = x;
    }

    fn start(x: f64) -> Self {
        Self {
            first: x,
            prev: x,
            acc: 0.0,
            steps: 0,
        }
    }

    fn value(&self) -> f64 {
        if self.steps == 0 {
            self.first
        } else {
            self.first + self.acc / self.steps as f64
        }
    }
}

// ---------------------------------------------------------------------------
// Occupation measure

/// One histogram axis: an observable binned uniformly on `[lo, hi]`, values
/// outside clamped to the edge bins.
#[derive(Clone, Debug, PartialEq)]
pub struct HistogramAxis {
    pub observable: Observable,
    pub lo: f64,
    pub hi: f64,
    pub bins: usize,
}

impl HistogramAxis {
    fn bin(&self, x: f64) -> usize {
        let u = (x - self.lo) / (self.hi - self.lo) * self.bins as f64;
        if u.is_nan() || u < 0.0 {
            0
        } else {
            (u as usize).min(self.bins - 1)
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OccupationConfig {
    pub axes: Vec<HistogramAxis>,
    pub symbol_bins: usize,
    /// Radii `R` of the `H²` balls whose hitting times are recorded.
    pub radii: Vec<f64>,
    /// Steps between recorded points of the functional series.
    pub record_every: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OccupationRecord {
    pub t_final: f64,
    pub h0: TimeSymbol,
    pub axes: Vec<HistogramAxis>,
    pub symbol_bins: usize,
    /// Row-major over the axes, symbol bin last.
    pub histogram: Vec<f64>,
    pub series_times: Vec<f64>,
    /// `⟨φ_k, ζ_t⟩` at the series times, one row per functional.
    pub series: Vec<Vec<f64>>,
    /// `ν‖w‖₁²` at the series times.
    pub enstrophy: Vec<f64>,
    /// First time `‖w‖_{H²} ≤ R`, per radius.
    pub hitting_times: Vec<Option<f64>>,
}

impl OccupationRecord {
    pub fn mass(&self) -> f64 {
        self.histogram.iter().sum()
    }

    /// Marginal over the symbol bins.
    pub fn symbol_marginal(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.symbol_bins];
        for (i, m) in self.histogram.iter().enumerate() {
            out[i % self.symbol_bins] += m;
        }
        out
    }
}

/// Single long trajectory from `(w0, h0)` over `[0, t_final]`.
pub fn occupation(
    integ: &Integrator,
    w0: &SpectralField,
    h0: TimeSymbol,
    t_final: f64,
    cfg: &OccupationConfig,
    functionals: &[Functional<'_>],
    path: &NoisePath,
) -> Result<OccupationRecord> {
    if !(t_final > 0.0) {
        return Err(invalid("t_final", "must be positive"));
    }
    if cfg.axes.len() > MAX_HISTOGRAM_AXES {
        return Err(invalid("axes", format!("at most {MAX_HISTOGRAM_AXES} histogram axes")));
    }
    if cfg.symbol_bins == 0 || cfg.symbol_bins > MAX_SYMBOL_BINS {
        return Err(invalid("symbol_bins", format!("must lie in 1..={MAX_SYMBOL_BINS}")));
    }
    if cfg.axes.iter().any(|a| a.bins == 0 || !(a.hi > a.lo)) {
        return Err(invalid("axes", "each axis needs bins > 0 and hi > lo"));
    }
    let n = integ.params().steps_for(t_final);
    if n == 0 {
        return Err(invalid("t_final", "shorter than one step"));
    }
    let dt = integ.dt();
    let nu = integ.params().viscosity();
    let every = cfg.record_every.max(1);
    let cells = cfg.axes.iter().map(|a| a.bins).product::<usize>() * cfg.symbol_bins;
    let mut hist = vec![0.0; cells];
    let mut avgs: Vec<RunningAverage> = vec![RunningAverage::default(); functionals.len()];
    let mut series = vec![Vec::new(); functionals.len()];
    let mut series_times = Vec::new();
    let mut enstrophy = Vec::new();
    let mut hitting: Vec<Option<f64>> = vec![None; cfg.radii.len()];
    let mut w = w0.clone();
    let mut sym = h0;
    let weight = 1.0 / n as f64;
    integ.stepper().run(&mut w, &mut sym, 0.0, n, path, 0, |i, state, h| {
        let mut cell = 0;
        for a in &cfg.axes {
            cell = cell * a.bins + a.bin(a.observable.eval(state));
        }
        let sb = ((h.value() / TAU * cfg.symbol_bins as f64) as usize).min(cfg.symbol_bins - 1);
        cell = cell * cfg.symbol_bins + sb;
        hist[cell] += if i == 0 || i == n { 0.5 * weight } else { weight };
        for (avg, f) in avgs.iter_mut().zip(functionals) {
            let x = f(state, h);
            if i == 0 {
                *avg = RunningAverage::start(x);
            } else {
                avg.push(x);
            }
        }
        if !cfg.radii.is_empty() {
            let r = state.sobolev_norm(2.0);
            for (slot, &radius) in hitting.iter_mut().zip(&cfg.radii) {
                if slot.is_none() && r <= radius {
                    *slot = Some(i as f64 * dt);
                }
            }
        }
        if i % every == 0 || i == n {
            series_times.push(i as f64 * dt);
            for (row, avg) in series.iter_mut().zip(&avgs) {
                row.push(avg.value());
            }
            enstrophy.push(nu * state.sobolev_norm(1.0).powi(2));
        }
    })?;
    Ok(OccupationRecord {
        t_final: n as f64 * dt,
        h0,
        axes: cfg.axes.clone(),
        symbol_bins: cfg.symbol_bins,
        histogram: hist,
        series_times,
        series,
        enstrophy,
        hitting_times: hitting,
    })
}

// ---------------------------------------------------------------------------
// Initial measures

/// Law of the starting state of each path.
#[derive(Clone, Debug)]
pub enum InitialMeasure {
    Point(SpectralField),
    /// Gaussian field with the given spread, one draw per path.
    Dispersed { scale: f64 },
    /// Weighted draw from an ensemble, one per path.
    Ensemble(WeightedEnsemble),
    /// State reached from `from` by running the unweighted dynamics for
    /// `time`, ending at the path's starting symbol. Each path relaxes on
    /// its own noise.
    Relaxed { from: SpectralField, time: f64 },
}

const TAG_INIT: u64 = 0x696e_6974;

impl InitialMeasure {
    fn draw(&self, st: &mut Stepper<'_>, engine: &FkEngine, stream: u64, i: usize, h: TimeSymbol) -> Result<SpectralField> {
        Ok(match self {
            Self::Point(w) => w.clone(),
            Self::Dispersed { scale } => {
                let p = engine.path(derive_stream(stream, &[TAG_INIT]), &[i as u64]);
                dispersed_field(engine.integrator().torus(), *scale, &p)
            }
            Self::Ensemble(e) => {
                let u = uniform_at(engine.seed(), derive_stream(stream, &[TAG_INIT, i as u64]));
                let total: f64 = e.weights().iter().sum();
                let mut acc = 0.0;
                for (x, w) in e.particles().iter().zip(e.weights()) {
                    acc += w / total;
                    if u < acc {
                        return Ok(x.clone());
                    }
                }
                e.particles().last().cloned().unwrap_or_else(|| SpectralField::zeros(engine.integrator().torus()))
            }
            Self::Relaxed { from, time } => {
                let n = engine.steps_for(*time);
                let p = engine.path(derive_stream(stream, &[TAG_INIT]), &[i as u64]);
                run_weighted(st, from, h.shift(-(n as f64) * engine.dt()), n, &p, 0, &[], 0)?.state
            }
        })
    }
}

// ---------------------------------------------------------------------------
// Pressure

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PressureEstimate {
    pub value: f64,
    pub std_error: f64,
    pub n_paths: usize,
    /// Largest normalized path weight (1/n for equal weights).
    pub max_weight: f64,
    pub degenerate: bool,
}

impl PressureEstimate {
    fn exact(value: f64, n_paths: usize) -> Self {
        Self {
            value,
            std_error: 0.0,
            n_paths,
            max_weight: if n_paths == 0 { 1.0 } else { 1.0 / n_paths as f64 },
            degenerate: false,
        }
    }
}

/// Direct pressure estimates of several potentials on common paths, with
/// leave-one-out values for jackknife errors of contrasts.
#[derive(Clone, Debug)]
pub struct PressureBatch {
    pub t: f64,
    pub estimates: Vec<PressureEstimate>,
    /// `loo[j][i]`: variable part of `Q_j` without path `i`, divided by `t`.
    loo: Vec<Vec<f64>>,
}

impl PressureBatch {
    /// `Σ c_j Q_j` and its jackknife standard error under the shared paths.
    pub fn contrast(&self, coefs: &[f64]) -> (f64, f64) {
        let value: f64 = coefs.iter().zip(&self.estimates).map(|(c, e)| c * e.value).sum();
        let n = self.loo.first().map_or(0, Vec::len);
        if n < 2 {
            return (value, 0.0);
        }
        let combo: Vec<f64> = (0..n)
            .map(|i| coefs.iter().zip(&self.loo).map(|(c, l)| c * l[i]).sum())
            .collect();
        let mean = combo.iter().sum::<f64>() / n as f64;
        let var = combo.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() * (n - 1) as f64 / n as f64;
        (value, var.sqrt())
    }
}

fn loo_log_mean_exp(xs: &[f64]) -> Vec<f64> {
    let n = xs.len();
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = xs.iter().map(|x| (x - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|ei| m + ((s - ei).max(0.0) / (n - 1) as f64).ln()).collect()
}

/// `Q_t(V) = (1/t) log E exp(t⟨V, ζ_{t,h}⟩)` for each potential, all on the
/// same `n_paths` paths started from `initial`.
#[allow(clippy::too_many_arguments)]
pub fn pressure_direct_batch(
    engine: &FkEngine,
    potentials: &[&PotentialSpec],
    t: f64,
    h: TimeSymbol,
    n_paths: usize,
    initial: &InitialMeasure,
    stream: u64,
) -> Result<PressureBatch> {
    if !(t > 0.0) {
        return Err(invalid("t", "must be positive"));
    }
    if n_paths == 0 {
        return Err(invalid("n_paths", "must be positive"));
    }
    let n_steps = engine.steps_for(t);
    if n_steps == 0 {
        return Err(invalid("t", "shorter than one step"));
    }
    let elapsed = n_steps as f64 * engine.dt();
    if potentials.iter().all(|v| v.is_constant()) {
        return Ok(PressureBatch {
            t: elapsed,
            estimates: potentials.iter().map(|v| PressureEstimate::exact(v.offset, n_paths)).collect(),
            loo: vec![vec![0.0; n_paths]; potentials.len()],
        });
    }
    let per_path = par_map(engine.integrator(), n_paths, |st, i| {
        let w0 = initial.draw(st, engine, stream, i, h)?;
        let p = run_weighted(st, &w0, h, n_steps, &engine.path(stream, &[i as u64]), 0, potentials, 0)?;
        Ok(p.variable)
    })?;
    let mut estimates = Vec::with_capacity(potentials.len());
    let mut loo = Vec::with_capacity(potentials.len());
    for (j, v) in potentials.iter().enumerate() {
        let xs: Vec<f64> = per_path.iter().map(|p| p[j]).collect();
        let (lme, se) = stats::jackknife_log_mean_exp(&xs);
        let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let s: f64 = xs.iter().map(|x| (x - m).exp()).sum();
        let max_weight = 1.0 / s;
        estimates.push(PressureEstimate {
            value: v.offset + lme / elapsed,
            std_error: se / elapsed,
            n_paths,
            max_weight,
            degenerate: max_weight > DEGENERATE_WEIGHT,
        });
        loo.push(if n_paths > 1 {
            loo_log_mean_exp(&xs).iter().map(|x| x / elapsed).collect()
        } else {
            vec![0.0]
        });
    }
    Ok(PressureBatch {
        t: elapsed,
        estimates,
        loo,
    })
}

/// Direct pressure of a single potential.
pub fn pressure_direct(
    engine: &FkEngine,
    v: &PotentialSpec,
    t: f64,
    h: TimeSymbol,
    n_paths: usize,
    initial: &InitialMeasure,
    stream: u64,
) -> Result<PressureEstimate> {
    Ok(pressure_direct_batch(engine, &[v], t, h, n_paths, initial, stream)?.estimates[0])
}

/// Direct pressure averaged over initial symbols: one batch of `n_paths`
/// from every node of `grid`, each on its own sub-stream. At a horizon that
/// is not a whole number of forcing periods, `Q_t` started at a single
/// symbol carries a periodic term of order `1/t`; averaging the start
/// uniformly over the circle removes it.
#[allow(clippy::too_many_arguments)]
pub fn pressure_direct_symbol_average(
    engine: &FkEngine,
    potentials: &[&PotentialSpec],
    t: f64,
    grid: &SymbolGrid,
    n_paths: usize,
    initial: &InitialMeasure,
    stream: u64,
) -> Result<Vec<PressureEstimate>> {
    let batches = grid
        .nodes()
        .into_iter()
        .enumerate()
        .map(|(j, h)| pressure_direct_batch(engine, potentials, t, h, n_paths, initial, derive_stream(stream, &[j as u64])))
        .collect::<Result<Vec<_>>>()?;
    let m = grid.len() as f64;
    Ok((0..potentials.len())
        .map(|k| {
            let ests: Vec<&PressureEstimate> = batches.iter().map(|b| &b.estimates[k]).collect();
            if potentials[k].is_constant() {
                return PressureEstimate::exact(potentials[k].offset, n_paths * grid.len());
            }
            let max_weight = ests.iter().map(|e| e.max_weight).fold(0.0, f64::max);
            PressureEstimate {
                value: ests.iter().map(|e| e.value).sum::<f64>() / m,
                std_error: ests.iter().map(|e| e.std_error * e.std_error).sum::<f64>().sqrt() / m,
                n_paths: n_paths * grid.len(),
                max_weight,
                degenerate: ests.iter().any(|e| e.degenerate),
            }
        })
        .collect())
}

/// `Q(V) = ∫ λ^V(h) m(dh)` as the symbol-grid average of the eigenvalue
/// table. Resampling correlates particles, so the per-node errors alone
/// understate the spread; the reported error is the larger of those
/// combined as independent and the pooled disagreement between the two
/// independent half chains of every node.
pub fn pressure_spectral(triple: &EigenTripleEstimate) -> PressureEstimate {
    let n = triple.grid.len() as f64;
    let variable = triple.grid.average(&triple.lambda_variable);
    let propagated = triple.lambda_se.iter().map(|s| s * s).sum::<f64>().sqrt() / n;
    let halves = if triple.potential.is_constant() {
        0.0
    } else {
        (0..triple.grid.len())
            .filter_map(|j| triple.half_lambdas(j).ok())
            .map(|(a, b)| 0.25 * (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
            / n
    };
    let n_paths = triple.gamma.first().map_or(0, WeightedEnsemble::len);
    PressureEstimate {
        value: triple.potential.offset + variable,
        std_error: propagated.max(halves),
        n_paths,
        max_weight: 0.0,
        degenerate: false,
    }
}

/// One probe pair of [`pressure_properties`].
#[derive(Clone, Debug, PartialEq)]
pub struct PropertyRow {
    /// `|Q(V₁) − Q(V₂)|`.
    pub difference: f64,
    /// `‖V₁ − V₂‖_∞` bound from the dictionary coefficients.
    pub sup_distance: f64,
    pub difference_se: f64,
    pub lipschitz_ok: bool,
    /// `Q((V₁+V₂)/2) − (Q(V₁) + Q(V₂))/2`, nonpositive for a convex `Q`.
    pub convexity_gap: f64,
    pub convexity_se: f64,
    pub convexity_ok: bool,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct PropertiesReport {
    pub rows: Vec<PropertyRow>,
}

impl PropertiesReport {
    pub fn all_ok(&self) -> bool {
        self.rows.iter().all(|r| r.lipschitz_ok && r.convexity_ok)
    }
}

/// Lipschitz and midpoint-convexity checks of the direct pressure over
/// pairs sharing a dictionary, each pair and its midpoint on common paths.
#[allow(clippy::too_many_arguments)]
pub fn pressure_properties(
    engine: &FkEngine,
    pairs: &[(PotentialSpec, PotentialSpec)],
    t: f64,
    h: TimeSymbol,
    n_paths: usize,
    initial: &InitialMeasure,
    stream: u64,
) -> Result<PropertiesReport> {
    let mut rows = Vec::with_capacity(pairs.len());
    for (k, (a, b)) in pairs.iter().enumerate() {
        let sup = a
            .difference_bound(b)
            .ok_or_else(|| invalid("pairs", "pair members must share a dictionary"))?;
        let mid = a.midpoint(b).ok_or_else(|| invalid("pairs", "pair members must share a dictionary"))?;
        let batch = pressure_direct_batch(engine, &[a, b, &mid], t, h, n_paths, initial, derive_stream(stream, &[k as u64]))?;
        let (d, d_se) = batch.contrast(&[1.0, -1.0, 0.0]);
        let (g, g_se) = batch.contrast(&[-0.5, -0.5, 1.0]);
        rows.push(PropertyRow {
            difference: d.abs(),
            sup_distance: sup,
            difference_se: d_se,
            lipschitz_ok: d.abs() <= sup + 3.0 * d_se,
            convexity_gap: g,
            convexity_se: g_se,
            convexity_ok: g <= 3.0 * g_se,
        });
    }
    Ok(PropertiesReport { rows })
}

// ---------------------------------------------------------------------------
// Legendre transform over a dictionary

/// Pressure as a function of dictionary coordinates, with its gradient
/// (the features of the equilibrium state).
pub trait PressureOracle {
    fn dim(&self) -> usize;
    fn evaluate(&mut self, theta: &[f64]) -> Result<(f64, Vec<f64>)>;
}

/// Direct pressure on a fixed bank of paths: each path stores its
/// time-integrated dictionary features `Φ_i = ∫₀ᵗ ψ(w_s, β_s h) ds`, so that
/// `Q_t(θ) = offset + (1/t) log mean exp(θ·Φ_i)` for every `θ` on the same
/// paths, with the exact gradient `Σ softmax_i(θ·Φ) Φ_i / t`. Path `i`
/// starts at symbol `starts[i mod starts.len()]`; spreading the starts over
/// the circle makes the untilted bank average the features over symbols.
#[derive(Clone, Debug)]
pub struct PathBankOracle {
    dictionary: PotentialSpec,
    t: f64,
    features: Vec<Vec<f64>>,
}

impl PathBankOracle {
    #[allow(clippy::too_many_arguments)]
    pub fn build(
        engine: &FkEngine,
        dictionary: &PotentialSpec,
        t: f64,
        starts: &[TimeSymbol],
        n_paths: usize,
        initial: &InitialMeasure,
        stream: u64,
    ) -> Result<Self> {
        let n_steps = engine.steps_for(t);
        if n_steps == 0 || n_paths == 0 || starts.is_empty() {
            return Err(invalid("t", "path bank needs at least one step, one path and one start symbol"));
        }
        let dt = engine.dt();
        let d = dictionary.n_coords();
        let features = par_map(engine.integrator(), n_paths, |st, i| {
            let h = starts[i % starts.len()];
            let w0 = initial.draw(st, engine, stream, i, h)?;
            let mut acc = vec![0.0; d];
            let mut prev = vec![0.0; d];
            let mut w = w0;
            let mut sym = h;
            st.run(&mut w, &mut sym, 0.0, n_steps, &engine.path(stream, &[i as u64]), 0, |k, state, s| {
                let f = dictionary.features(state, s);
                if k > 0 {
                    for ((a, p), c) in acc.iter_mut().zip(&prev).zip(&f) {
                        *a += 0.5 * dt * (p + c);
                    }
                }
                prev = f;
            })?;
            Ok(acc)
        })?;
        Ok(Self {
            dictionary: dictionary.clone(),
            t: n_steps as f64 * dt,
            features,
        })
    }

    pub fn horizon(&self) -> f64 {
        self.t
    }

    pub fn n_paths(&self) -> usize {
        self.features.len()
    }

    pub fn dictionary(&self) -> &PotentialSpec {
        &self.dictionary
    }

    fn log_weights(&self, theta: &[f64]) -> Vec<f64> {
        self.features
            .iter()
            .map(|f| f.iter().zip(theta).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// Effective sample size of the reweighted bank at `θ`.
    pub fn ess(&self, theta: &[f64]) -> f64 {
        let lw = self.log_weights(theta);
        let m = lw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = lw.iter().map(|x| (x - m).exp()).collect();
        let s: f64 = w.iter().sum();
        s * s / w.iter().map(|x| x * x).sum::<f64>()
    }

    pub fn pressure(&self, theta: &[f64]) -> f64 {
        self.dictionary.offset + stats::log_mean_exp(&self.log_weights(theta)) / self.t
    }

    /// Time-averaged features under the tilted path measure at `θ`, the
    /// equilibrium-state features of the dictionary potential.
    pub fn equilibrium_features(&self, theta: &[f64]) -> Vec<f64> {
        let lw = self.log_weights(theta);
        let m = lw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = lw.iter().map(|x| (x - m).exp()).collect();
        let s: f64 = w.iter().sum();
        let mut out = vec![0.0; self.dictionary.n_coords()];
        for (wi, f) in w.iter().zip(&self.features) {
            for (o, x) in out.iter_mut().zip(f) {
                *o += wi / s * x / self.t;
            }
        }
        out
    }
}

impl PressureOracle for PathBankOracle {
    fn dim(&self) -> usize {
        self.dictionary.n_coords()
    }

    fn evaluate(&mut self, theta: &[f64]) -> Result<(f64, Vec<f64>)> {
        Ok((self.pressure(theta), self.equilibrium_features(theta)))
    }
}

/// Pressure from eigen-triples built per coordinate vector (cached), with
/// central finite-difference gradients. All triples share the streams of
/// `cfg`, so differences use common random numbers.
pub struct SpectralOracle<'a> {
    engine: &'a FkEngine,
    dictionary: PotentialSpec,
    grid: SymbolGrid,
    cfg: TripleConfig,
    step: f64,
    cache: HashMap<Vec<u64>, f64>,
}

impl<'a> SpectralOracle<'a> {
    pub fn new(engine: &'a FkEngine, dictionary: &PotentialSpec, grid: SymbolGrid, cfg: TripleConfig, step: f64) -> Self {
        let mut cfg = cfg;
        cfg.kb = None;
        Self {
            engine,
            dictionary: dictionary.clone(),
            grid,
            cfg,
            step,
            cache: HashMap::new(),
        }
    }

    pub fn pressure(&mut self, theta: &[f64]) -> Result<f64> {
        let key: Vec<u64> = theta.iter().map(|x| x.to_bits()).collect();
        if let Some(&q) = self.cache.get(&key) {
            return Ok(q);
        }
        let v = self.dictionary.with_coordinates(theta);
        let triple = build_triple(self.engine, &v, &self.grid, &self.cfg)?;
        let q = pressure_spectral(&triple).value;
        self.cache.insert(key, q);
        Ok(q)
    }
}

impl PressureOracle for SpectralOracle<'_> {
    fn dim(&self) -> usize {
        self.dictionary.n_coords()
    }

    fn evaluate(&mut self, theta: &[f64]) -> Result<(f64, Vec<f64>)> {
        let q = self.pressure(theta)?;
        let mut grad = Vec::with_capacity(theta.len());
        for i in 0..theta.len() {
            let mut up = theta.to_vec();
            let mut down = theta.to_vec();
            up[i] += self.step;
            down[i] -= self.step;
            grad.push((self.pressure(&up)? - self.pressure(&down)?) / (2.0 * self.step));
        }
        Ok((q, grad))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LegendreConfig {
    pub max_iters: usize,
    /// Convergence threshold on the gradient norm.
    pub grad_tol: f64,
    /// Values beyond this are reported as "≥ cap".
    pub cap: f64,
    pub initial_step: f64,
}

impl Default for LegendreConfig {
    fn default() -> Self {
        Self {
            max_iters: 500,
            grad_tol: 1e-3,
            cap: 50.0,
            initial_step: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RateFunctionEstimate {
    /// Target features `⟨ψ_i, μ⟩`.
    pub target: Vec<f64>,
    /// Maximizing dictionary coordinates.
    pub theta: Vec<f64>,
    /// `⟨V*, μ⟩ − Q(V*)`, a lower bound on the rate function.
    pub value: f64,
    pub pressure: f64,
    /// Norm of the objective gradient at the end (the optimality gap).
    pub gradient_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    /// The objective passed the cap; `value` is then a lower bound.
    pub capped: bool,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Dictionary-relative Legendre transform
/// `I(μ) ≥ sup_θ ⟨V_θ, μ⟩ − Q(V_θ)` by gradient ascent with backtracking,
/// moving only the coordinates flagged in `free`.
pub fn legendre(
    target: &[f64],
    oracle: &mut dyn PressureOracle,
    free: &[bool],
    start: &[f64],
    cfg: &LegendreConfig,
) -> Result<RateFunctionEstimate> {
    let d = oracle.dim();
    if target.len() != d || free.len() != d || start.len() != d {
        return Err(invalid("target", "target, mask and start must match the dictionary"));
    }
    let masked = |g: &[f64], q: &[f64]| -> Vec<f64> {
        g.iter()
            .zip(q)
            .zip(free)
            .map(|((m, dq), &f)| if f { m - dq } else { 0.0 })
            .collect()
    };
    let mut theta = start.to_vec();
    let (mut q, grad_q) = oracle.evaluate(&theta)?;
    let mut g = masked(target, &grad_q);
    let mut obj = dot(&theta, target) - q;
    let mut step = cfg.initial_step;
    let mut iterations = 0;
    let mut capped = false;
    while iterations < cfg.max_iters {
        let gn = dot(&g, &g).sqrt();
        if gn < cfg.grad_tol {
            break;
        }
        if obj > cfg.cap {
            capped = true;
            break;
        }
        iterations += 1;
        let mut accepted = false;
        for _ in 0..60 {
            let trial: Vec<f64> = theta.iter().zip(&g).map(|(x, gi)| x + step * gi).collect();
            let (tq, tgrad) = oracle.evaluate(&trial)?;
            let tobj = dot(&trial, target) - tq;
            if tobj >= obj + 1e-4 * step * gn * gn {
                theta = trial;
                q = tq;
                obj = tobj;
                g = masked(target, &tgrad);
                step = (step * 2.0).min(1e6);
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    let gradient_norm = dot(&g, &g).sqrt();
    Ok(RateFunctionEstimate {
        target: target.to_vec(),
        theta,
        value: obj,
        pressure: q,
        gradient_norm,
        iterations,
        converged: gradient_norm < cfg.grad_tol,
        capped: capped || obj > cfg.cap,
    })
}

/// Coordinates along which the objective can move: the mean coordinate of
/// a constant observable duplicates the offset and is held fixed.
pub fn free_coordinates(dictionary: &PotentialSpec) -> Vec<bool> {
    let mut out = Vec::with_capacity(dictionary.n_coords());
    for t in &dictionary.terms {
        out.push(t.observable != Observable::Constant);
        out.extend(std::iter::repeat_n(true, t.profile.cos.len() + t.profile.sin.len()));
    }
    out
}

/// Largest violation of `⟨V_θ, μ⟩ − Q(V_θ) ≤ I` over probe coordinates.
pub fn fenchel_violation(estimate: &RateFunctionEstimate, oracle: &mut dyn PressureOracle, probes: &[Vec<f64>]) -> Result<f64> {
    let mut worst = f64::NEG_INFINITY;
    for p in probes {
        let (q, _) = oracle.evaluate(p)?;
        worst = worst.max(dot(p, &estimate.target) - q - estimate.value);
    }
    Ok(worst)
}

/// Features `⟨ψ_i, Γ(h_j)⟩` averaged over the grid: the dictionary features
/// of `Γ(h) m(dh)`.
pub fn measure_features(dictionary: &PotentialSpec, gammas: &[WeightedEnsemble], grid: &SymbolGrid) -> Vec<f64> {
    let d = dictionary.n_coords();
    let mut out = vec![0.0; d];
    for (j, g) in gammas.iter().enumerate() {
        let h = grid.node(j);
        let feats: Vec<Vec<f64>> = g.particles().iter().map(|x| dictionary.features(x, h)).collect();
        for (i, o) in out.iter_mut().enumerate() {
            let col: Vec<f64> = feats.iter().map(|f| f[i]).collect();
            *o += stats::weighted_mean_se(g.weights(), &col).0 / grid.len() as f64;
        }
    }
    out
}

/// Dictionary features of the equilibrium state `F^V Γ^V(h) m(dh)`, with
/// `F^V` at each particle a single-path Krylov-Bogolyubov sample. For a
/// constant potential `F^V ≡ 1` and this reduces to [`measure_features`].
pub fn equilibrium_features(
    engine: &FkEngine,
    dictionary: &PotentialSpec,
    triple: &EigenTripleEstimate,
    k_terms: usize,
    stream: u64,
) -> Result<Vec<f64>> {
    let v = &triple.potential;
    if v.is_constant() {
        return Ok(measure_features(dictionary, &triple.gamma, &triple.grid));
    }
    let profile = triple.lambda_profile();
    let d = dictionary.n_coords();
    let mut out = vec![0.0; d];
    for (j, g) in triple.gamma.iter().enumerate() {
        let h = triple.grid.node(j);
        let f = eigenfunction_kb(engine, v, &profile, h, g.particles(), k_terms, 1, derive_stream(stream, &[j as u64]))?;
        let weights: Vec<f64> = g.weights().iter().zip(&f).map(|(w, e)| w * e.value).collect();
        let feats: Vec<Vec<f64>> = g.particles().iter().map(|x| dictionary.features(x, h)).collect();
        for (i, o) in out.iter_mut().enumerate() {
            let col: Vec<f64> = feats.iter().map(|f| f[i]).collect();
            *o += stats::weighted_mean_se(&weights, &col).0 / triple.grid.len() as f64;
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Functional averages: LLN, CLT, deviations

/// `⟨φ_Γ, ζ_{T,h0}⟩` per horizon (rows) and path (columns), where
/// `φ_Γ(w, h) = φ(w, h) − centering(h)`. Every path is run once to the
/// largest horizon.
#[allow(clippy::too_many_arguments)]
pub fn functional_averages(
    engine: &FkEngine,
    phi: Functional<'_>,
    centering: Centering<'_>,
    times: &[f64],
    n_paths: usize,
    h0: TimeSymbol,
    initial: &InitialMeasure,
    stream: u64,
) -> Result<Vec<Vec<f64>>> {
    if times.is_empty() || times.iter().any(|&t| !(t > 0.0)) {
        return Err(invalid("times", "need positive horizons"));
    }
    let marks: Vec<usize> = times.iter().map(|&t| engine.steps_for(t).max(1)).collect();
    let n_max = *marks.iter().max().unwrap_or(&1);
    let per_path = par_map(engine.integrator(), n_paths, |st: &mut Stepper<'_>, i| {
        let mut w = initial.draw(st, engine, stream, i, h0)?;
        let mut sym = h0;
        let mut avg = RunningAverage::default();
        let mut out = vec![0.0; marks.len()];
        st.run(&mut w, &mut sym, 0.0, n_max, &engine.path(stream, &[i as u64]), 0, |k, state, h| {
            let x = phi(state, h) - centering(h);
            if k == 0 {
                avg = RunningAverage::start(x);
            } else {
                avg.push(x);
            }
            for (o, &m) in out.iter_mut().zip(&marks) {
                if m == k {
                    *o = avg.value();
                }
            }
        })?;
        Ok(out)
    })?;
    Ok((0..times.len()).map(|r| per_path.iter().map(|p| p[r]).collect()).collect())
}

#[derive(Clone, Debug, PartialEq)]
pub struct CltRow {
    pub t: f64,
    pub mean: f64,
    pub std_error: f64,
    /// Root mean square of `⟨φ_Γ, ζ_T⟩` over paths.
    pub rms: f64,
    /// `√T · rms`, constant under `T^{−1/2}` decay.
    pub scaled_rms: f64,
    /// Sample variance of `√T ⟨φ_Γ, ζ_T⟩`.
    pub scaled_variance: f64,
    /// Correlation of sorted samples with normal quantiles; NaN when all
    /// samples coincide.
    pub quantile_correlation: f64,
    pub degenerate: bool,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct CltReport {
    pub rows: Vec<CltRow>,
}

impl CltReport {
    /// `max/min` of `√T · rms` over the horizons.
    pub fn decay_spread(&self) -> f64 {
        let v: Vec<f64> = self.rows.iter().map(|r| r.scaled_rms).collect();
        let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = v.iter().copied().fold(f64::INFINITY, f64::min);
        max / min
    }
}

/// Law-of-large-numbers and CLT diagnostics for `φ_Γ` over the horizons.
#[allow(clippy::too_many_arguments)]
pub fn clt_diagnostic(
    engine: &FkEngine,
    phi: Functional<'_>,
    centering: Centering<'_>,
    times: &[f64],
    n_paths: usize,
    h0: TimeSymbol,
    initial: &InitialMeasure,
    stream: u64,
) -> Result<CltReport> {
    let avgs = functional_averages(engine, phi, centering, times, n_paths, h0, initial, stream)?;
    Ok(clt_from_averages(times, &avgs))
}

/// [`CltReport`] from precomputed [`functional_averages`].
pub fn clt_from_averages(times: &[f64], avgs: &[Vec<f64>]) -> CltReport {
    let rows = times
        .iter()
        .zip(avgs)
        .map(|(&t, xs)| {
            let (mean, se) = stats::mean_se(xs);
            let rms = (xs.iter().map(|x| x * x).sum::<f64>() / xs.len() as f64).sqrt();
            let scaled: Vec<f64> = xs.iter().map(|x| x * t.sqrt()).collect();
            let degenerate = xs.iter().all(|x| *x == xs[0]);
            CltRow {
                t,
                mean,
                std_error: se,
                rms,
                scaled_rms: rms * t.sqrt(),
                scaled_variance: stats::variance(&scaled),
                quantile_correlation: if degenerate {
                    f64::NAN
                } else {
                    stats::normal_quantile_correlation(&scaled)
                },
                degenerate,
            }
        })
        .collect();
    CltReport { rows }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DeviationRow {
    pub t: f64,
    pub hits: usize,
    pub n: usize,
    pub probability: f64,
    /// `−(1/T) log P`; with no hits, the one-sided bound `log(n)/T`.
    pub log_rate: f64,
    pub one_sided: bool,
    /// Fewer than [`HIT_FLOOR`] hits.
    pub unreliable: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DeviationReport {
    pub interval: (f64, f64),
    pub rows: Vec<DeviationRow>,
    /// Fit of `−log P` against `T` over reliable rows; the slope is the
    /// empirical rate.
    pub fit: Option<LineFit>,
}

/// `P{⟨φ_Γ, ζ_{T,h0}⟩ ∈ (lo, hi)}` by plain Monte Carlo for each horizon.
#[allow(clippy::too_many_arguments)]
pub fn deviation_probability(
    engine: &FkEngine,
    phi: Functional<'_>,
    centering: Centering<'_>,
    interval: (f64, f64),
    times: &[f64],
    n_paths: usize,
    h0: TimeSymbol,
    initial: &InitialMeasure,
    stream: u64,
) -> Result<DeviationReport> {
    if times.len() < 3 {
        return Err(invalid("times", "need at least three horizons"));
    }
    let avgs = functional_averages(engine, phi, centering, times, n_paths, h0, initial, stream)?;
    Ok(deviation_from_averages(interval, times, &avgs))
}

/// [`DeviationReport`] from precomputed [`functional_averages`].
pub fn deviation_from_averages(interval: (f64, f64), times: &[f64], avgs: &[Vec<f64>]) -> DeviationReport {
    let (lo, hi) = interval;
    let rows: Vec<DeviationRow> = times
        .iter()
        .zip(avgs)
        .map(|(&t, xs)| {
            let n = xs.len();
            let hits = xs.iter().filter(|&&x| x > lo && x < hi).count();
            let probability = hits as f64 / n as f64;
            let (log_rate, one_sided) = if hits == 0 {
                ((n as f64).ln() / t, true)
            } else {
                (-probability.ln() / t, false)
            };
            DeviationRow {
                t,
                hits,
                n,
                probability,
                log_rate,
                one_sided,
                unreliable: hits < HIT_FLOOR,
            }
        })
        .collect();
    let good: Vec<&DeviationRow> = rows.iter().filter(|r| !r.unreliable).collect();
    let fit = (good.len() >= 2).then(|| {
        let ts: Vec<f64> = good.iter().map(|r| r.t).collect();
        let ys: Vec<f64> = good.iter().map(|r| -r.probability.ln()).collect();
        stats::linear_fit(&ts, &ys)
    });
    DeviationReport {
        interval,
        rows,
        fit,
    }
}

/// Scalar cumulant bank `Λ_T(s) = (1/T) log mean exp(s T ⟨φ_Γ, ζ_T⟩)` on
/// fixed path averages.
#[derive(Clone, Debug)]
pub struct CumulantBank {
    t: f64,
    averages: Vec<f64>,
}

impl CumulantBank {
    pub fn new(t: f64, averages: Vec<f64>) -> Self {
        Self { t, averages }
    }

    /// `(Λ(s), Λ'(s))`.
    pub fn cumulant(&self, s: f64) -> (f64, f64) {
        let lw: Vec<f64> = self.averages.iter().map(|a| s * self.t * a).collect();
        let m = lw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = lw.iter().map(|x| (x - m).exp()).collect();
        let z: f64 = w.iter().sum();
        let deriv = w.iter().zip(&self.averages).map(|(wi, a)| wi * a).sum::<f64>() / z;
        (stats::log_mean_exp(&lw) / self.t, deriv)
    }

    /// `sup_s (s x − Λ(s))` by bisection on `Λ'(s) = x`, clipped to `|s| ≤ s_max`.
    pub fn rate(&self, x: f64, s_max: f64) -> f64 {
        let (mut lo, mut hi) = (-s_max, s_max);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.cumulant(mid).1 < x {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let s = 0.5 * (lo + hi);
        (s * x - self.cumulant(s).0).max(0.0)
    }

    /// `inf_{x ∈ (lo, hi)} rate(x)`: zero when the interval holds the mean,
    /// otherwise the rate at the nearer endpoint.
    pub fn interval_rate(&self, interval: (f64, f64), s_max: f64) -> f64 {
        let mean = self.cumulant(0.0).1;
        let (lo, hi) = interval;
        if mean > lo && mean < hi {
            0.0
        } else if mean <= lo {
            self.rate(lo, s_max)
        } else {
            self.rate(hi, s_max)
        }
    }
}

// ---------------------------------------------------------------------------
// Hitting times

/// First time `‖w_t‖_{H²} ≤ radius` per path from `w0`, censored at `t_max`.
#[allow(clippy::too_many_arguments)]
pub fn hitting_times(
    engine: &FkEngine,
    w0: &SpectralField,
    h0: TimeSymbol,
    radius: f64,
    t_max: f64,
    n_paths: usize,
    stream: u64,
) -> Result<Vec<Option<f64>>> {
    let n = engine.steps_for(t_max);
    let dt = engine.dt();
    par_map(engine.integrator(), n_paths, |st, i| {
        let mut w = w0.clone();
        let mut sym = h0;
        let mut hit = None;
        st.run(&mut w, &mut sym, 0.0, n, &engine.path(stream, &[i as u64]), 0, |k, state, _| {
            if hit.is_none() && state.sobolev_norm(2.0) <= radius {
                hit = Some(k as f64 * dt);
            }
        })?;
        Ok(hit)
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HittingMoment {
    pub gamma: f64,
    /// Sample mean of `exp(γ τ)`, censored samples counted at `t_max`.
    pub mean: f64,
    pub std_error: f64,
    pub censored: usize,
}

/// Empirical exponential moments `E exp(γ τ)`.
pub fn hitting_time_moments(samples: &[Option<f64>], t_max: f64, gammas: &[f64]) -> Vec<HittingMoment> {
    let censored = samples.iter().filter(|s| s.is_none()).count();
    gammas
        .iter()
        .map(|&gamma| {
            let xs: Vec<f64> = samples.iter().map(|s| (gamma * s.unwrap_or(t_max)).exp()).collect();
            let (mean, std_error) = stats::mean_se(&xs);
            HittingMoment {
                gamma,
                mean,
                std_error,
                censored,
            }
        })
        .collect()
}
