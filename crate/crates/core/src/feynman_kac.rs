//! Monte Carlo Feynman-Kac evolution operators
//!
//! `P^V_{s,t,h} φ(w) = E[exp(∫_s^t V(Φ_{s,r,h}(w), β_r h) dr) φ(Φ_{s,t,h}(w))]`
//!
//! and their dual action on weighted ensembles. The time integral uses the
//! trapezoid rule on the step grid. The constant offset of a potential is
//! accounted for as `offset · elapsed`, separately from the variable part, so
//! adding a constant to `V` changes every path weight by an exact scalar
//! factor and leaves normalized quantities untouched.

use std::sync::Arc;

use rayon::prelude::*;

use crate::ensemble::WeightedEnsemble;
use crate::error::{invalid, Error, Result};
use crate::integrator::{Integrator, Stepper};
use crate::model::TimeSymbol;
use crate::potential::PotentialSpec;
use crate::rng::{derive_stream, NoisePath};
use crate::spectral::SpectralField;
use crate::stats;

/// Monte Carlo estimate with its standard error.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FkEstimate {
    pub value: f64,
    pub std_error: f64,
    pub n_paths: usize,
}

impl FkEstimate {
    pub fn from_samples(xs: &[f64]) -> Self {
        let (value, std_error) = stats::mean_se(xs);
        Self {
            value,
            std_error,
            n_paths: xs.len(),
        }
    }

    /// `|self − other| / √(σ₁² + σ₂²)`; zero when both agree exactly.
    pub fn z_score(&self, other: &FkEstimate) -> f64 {
        let d = (self.value - other.value).abs();
        if d == 0.0 {
            return 0.0;
        }
        d / self.std_error.hypot(other.std_error)
    }
}

/// A single weighted path: terminal pair, elapsed time and the variable part
/// `∫(V − offset)` of the log-weight for each potential.
#[derive(Clone, Debug)]
pub struct WeightedPath {
    pub state: SpectralField,
    pub symbol: TimeSymbol,
    pub elapsed: f64,
    pub variable: Vec<f64>,
    /// Cumulative variable log-weights at every `mark_every`-th step, mark
    /// `m` holding potential `j` at `marks[m * n_potentials + j]`. Mark 0 is
    /// the start.
    pub marks: Vec<f64>,
}

impl WeightedPath {
    /// Full log-weight `offset · elapsed + ∫(V − offset)` for potential `j`.
    pub fn log_weight(&self, potential: &PotentialSpec, j: usize) -> f64 {
        potential.offset * self.elapsed + self.variable[j]
    }
}

/// Runs one path of `n_steps` from `(w0, symbol0)`, integrating every
/// potential along it by the trapezoid rule. `mark_every = 0` records no
/// marks.
#[allow(clippy::too_many_arguments)]
pub fn run_weighted(
    stepper: &mut Stepper<'_>,
    w0: &SpectralField,
    symbol0: TimeSymbol,
    n_steps: usize,
    path: &NoisePath,
    first_step: u64,
    potentials: &[&PotentialSpec],
    mark_every: usize,
) -> Result<WeightedPath> {
    let dt = stepper.integrator().dt();
    let np = potentials.len();
    let mut state = w0.clone();
    let mut symbol = symbol0;
    let mut prev = vec![0.0; np];
    let mut acc = vec![0.0; np];
    let mut marks = Vec::new();
    stepper.run(&mut state, &mut symbol, 0.0, n_steps, path, first_step, |i, w, sym| {
        for (j, v) in potentials.iter().enumerate() {
            if v.is_constant() {
                continue;
            }
            let cur = v.eval_variable(w, sym);
            if i > 0 {
                acc[j] += 0.5 * dt * (prev[j] + cur);
            }
            prev[j] = cur;
        }
        if mark_every > 0 && i % mark_every == 0 {
            marks.extend_from_slice(&acc);
        }
    })?;
    if acc.iter().any(|a| !a.is_finite()) {
        return Err(Error::NonFiniteWeight {
            time: n_steps as f64 * dt,
        });
    }
    Ok(WeightedPath {
        state,
        symbol,
        elapsed: n_steps as f64 * dt,
        variable: acc,
        marks,
    })
}

/// Ordered parallel map over `0..n` with one [`Stepper`] per worker. The
/// output order, and hence every downstream reduction, does not depend on
/// the number of workers.
pub fn par_map<T, F>(integ: &Integrator, n: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(&mut Stepper<'_>, usize) -> Result<T> + Sync + Send,
{
    (0..n)
        .into_par_iter()
        .map_init(|| integ.stepper(), |st, i| f(st, i))
        .collect()
}

/// Per-path outcome of [`FkEngine::samples`]: full log-weight per potential
/// and the test function at the terminal pair.
#[derive(Clone, Debug, PartialEq)]
pub struct PathSample {
    pub log_weights: Vec<f64>,
    pub phi: f64,
}

/// Result of [`FkEngine::cocycle_residual`].
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CocycleReport {
    /// Largest `|L − R| / |L|` over the test set.
    pub max_relative: f64,
    /// Largest `|L − R| / σ_joint`.
    pub max_z: f64,
    pub direct: Vec<FkEstimate>,
    pub nested: Vec<FkEstimate>,
}

/// Feynman-Kac engine: an integrator plus the seed keying all noise paths.
/// Every operation takes a `stream` key; paths of one operation use child
/// streams of it, so calls with distinct keys draw independent noise and
/// calls with equal keys share it.
#[derive(Clone, Debug)]
pub struct FkEngine {
    integ: Arc<Integrator>,
    seed: u64,
}

impl FkEngine {
    pub fn new(integ: Integrator, seed: u64) -> Self {
        Self {
            integ: Arc::new(integ),
            seed,
        }
    }

    pub fn integrator(&self) -> &Integrator {
        &self.integ
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn dt(&self) -> f64 {
        self.integ.dt()
    }

    pub fn steps_for(&self, span: f64) -> usize {
        self.integ.params().steps_for(span)
    }

    pub fn path(&self, stream: u64, tags: &[u64]) -> NoisePath {
        NoisePath::new(self.seed, derive_stream(stream, tags))
    }

    /// Per-path samples of `exp(∫V)` for each potential and `φ` at the end,
    /// all potentials evaluated on the same paths.
    #[allow(clippy::too_many_arguments)]
    pub fn samples<F>(
        &self,
        potentials: &[&PotentialSpec],
        phi: F,
        s: f64,
        t: f64,
        h: TimeSymbol,
        w: &SpectralField,
        n_paths: usize,
        stream: u64,
    ) -> Result<Vec<PathSample>>
    where
        F: Fn(&SpectralField, TimeSymbol) -> f64 + Sync + Send,
    {
        if t < s {
            return Err(invalid("t", "end time precedes start time"));
        }
        let n = self.steps_for(t - s);
        let start = h.shift(s);
        par_map(&self.integ, n_paths, |st, i| {
            let p = run_weighted(st, w, start, n, &self.path(stream, &[i as u64]), 0, potentials, 0)?;
            let log_weights = potentials
                .iter()
                .enumerate()
                .map(|(j, v)| p.log_weight(v, j))
                .collect();
            Ok(PathSample {
                log_weights,
                phi: phi(&p.state, p.symbol),
            })
        })
    }

    /// `P^V_{s,t,h} φ(w)` by `n_paths` independent paths.
    #[allow(clippy::too_many_arguments)]
    pub fn fk_apply<F>(
        &self,
        v: &PotentialSpec,
        phi: F,
        s: f64,
        t: f64,
        h: TimeSymbol,
        w: &SpectralField,
        n_paths: usize,
        stream: u64,
    ) -> Result<FkEstimate>
    where
        F: Fn(&SpectralField, TimeSymbol) -> f64 + Sync + Send,
    {
        let samples = self.samples(&[v], phi, s, t, h, w, n_paths, stream)?;
        let xs = weighted_values(&samples, 0)?;
        Ok(FkEstimate::from_samples(&xs))
    }

    /// `P^{V*}_{0,t,h} μ`: each particle follows its own path and its weight
    /// is multiplied by the path's Feynman-Kac factor.
    pub fn fk_measure_apply(
        &self,
        v: &PotentialSpec,
        mu: &WeightedEnsemble,
        t: f64,
        h: TimeSymbol,
        stream: u64,
    ) -> Result<WeightedEnsemble> {
        let n = self.steps_for(t);
        let out = par_map(&self.integ, mu.len(), |st, i| {
            let p = run_weighted(st, &mu.particles()[i], h, n, &self.path(stream, &[i as u64]), 0, &[v], 0)?;
            let factor = p.log_weight(v, 0).exp();
            let weight = mu.weights()[i] * factor;
            if !(weight.is_finite() && weight > 0.0) {
                return Err(Error::NonFiniteWeight { time: p.elapsed });
            }
            Ok((p.state, weight))
        })?;
        let (particles, weights) = out.into_iter().unzip();
        WeightedEnsemble::new(particles, weights)
    }

    /// Discrepancy of the cocycle identity
    /// `P_{0,s+t,h} φ = P_{0,s,h}(P_{0,t,β_s h} φ)`
    /// over every pair of test state and test function. The right side is a
    /// nested estimate: `inner_paths` fresh paths from each outer endpoint.
    #[allow(clippy::too_many_arguments)]
    pub fn cocycle_residual(
        &self,
        v: &PotentialSpec,
        s: f64,
        t: f64,
        h: TimeSymbol,
        states: &[SpectralField],
        phis: &[&(dyn Fn(&SpectralField, TimeSymbol) -> f64 + Sync)],
        n_paths: usize,
        inner_paths: usize,
        stream: u64,
    ) -> Result<CocycleReport> {
        let mut report = CocycleReport::default();
        let ns = self.steps_for(s);
        let nt = self.steps_for(t);
        let inner_paths = inner_paths.max(1);
        for (a, w) in states.iter().enumerate() {
            for (b, phi) in phis.iter().enumerate() {
                let key = derive_stream(stream, &[a as u64, b as u64]);
                let direct = self.fk_apply(v, *phi, 0.0, s + t, h, w, n_paths, derive_stream(key, &[0]))?;
                let outer_key = derive_stream(key, &[1]);
                let inner_key = derive_stream(key, &[2]);
                let nested_samples = par_map(&self.integ, n_paths, |st, p| {
                    let outer = run_weighted(st, w, h, ns, &self.path(outer_key, &[p as u64]), 0, &[v], 0)?;
                    let mut inner = 0.0;
                    for q in 0..inner_paths {
                        let path = self.path(inner_key, &[p as u64, q as u64]);
                        let r = run_weighted(st, &outer.state, outer.symbol, nt, &path, 0, &[v], 0)?;
                        inner += r.log_weight(v, 0).exp() * phi(&r.state, r.symbol);
                    }
                    Ok(outer.log_weight(v, 0).exp() * (inner / inner_paths as f64))
                })?;
                let nested = FkEstimate::from_samples(&nested_samples);
                let diff = (direct.value - nested.value).abs();
                let rel = if diff == 0.0 { 0.0 } else { diff / direct.value.abs() };
                report.max_relative = report.max_relative.max(rel);
                report.max_z = report.max_z.max(direct.z_score(&nested));
                report.direct.push(direct);
                report.nested.push(nested);
            }
        }
        Ok(report)
    }

    /// Growth-ratio diagnostic `sup_w P^V 𝔪(w)/𝔪(w)` over `probes` divided by
    /// `sup_{‖w‖ ≤ R₀} P^V 1(w)` over the probes inside the ball.
    #[allow(clippy::too_many_arguments)]
    pub fn growth_ratio<M>(
        &self,
        v: &PotentialSpec,
        weight_fn: M,
        t: f64,
        h: TimeSymbol,
        probes: &[SpectralField],
        radius: f64,
        n_paths: usize,
        stream: u64,
    ) -> Result<f64>
    where
        M: Fn(&SpectralField) -> f64 + Sync + Send,
    {
        let mut num = 0.0f64;
        let mut den = 0.0f64;
        for (i, w) in probes.iter().enumerate() {
            let samples = self.samples(&[v], |x: &SpectralField, _| weight_fn(x), 0.0, t, h, w, n_paths, derive_stream(stream, &[i as u64]))?;
            let weighted = weighted_values(&samples, 0)?;
            let pm = stats::mean_se(&weighted).0;
            num = num.max(pm / weight_fn(w));
            if w.norm() <= radius {
                let ones: Vec<f64> = samples.iter().map(|s| s.log_weights[0].exp()).collect();
                den = den.max(stats::mean_se(&ones).0);
            }
        }
        if den == 0.0 {
            return Err(invalid("growth_ratio", "no probe state inside the ball"));
        }
        Ok(num / den)
    }
}

/// `exp(log_weight) · φ` per sample, rejecting non-finite weights.
pub fn weighted_values(samples: &[PathSample], j: usize) -> Result<Vec<f64>> {
    samples
        .iter()
        .map(|s| {
            let wt = s.log_weights[j].exp();
            if !wt.is_finite() {
                Err(Error::NonFiniteWeight { time: f64::NAN })
            } else {
                Ok(wt * s.phi)
            }
        })
        .collect()
}

/// Polynomial Lyapunov weight `𝔪_q(w) = 1 + ‖w‖^{2q}`.
pub fn polynomial_weight(q: f64) -> impl Fn(&SpectralField) -> f64 + Sync + Send + Copy {
    move |w| 1.0 + w.norm_sq().powf(q)
}

/// Exponential Lyapunov weight `𝔪_η(w) = exp(η‖w‖²)`.
pub fn exponential_weight(eta: f64) -> impl Fn(&SpectralField) -> f64 + Sync + Send + Copy {
    move |w| (eta * w.norm_sq()).exp()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ForcingSpec, NoiseSpec, SimulationParams};
    use crate::potential::{Observable, PotentialTerm, TrigProfile};
    use crate::spectral::{TorusSpec, Wavenumber};

    fn engine() -> FkEngine {
        let s = TorusSpec::new(4, 16).unwrap();
        let p = SimulationParams::new(&s, 0.5, 0.01).unwrap();
        let f = ForcingSpec::standard(&s, 0.5).unwrap();
        let n = NoiseSpec::standard(&s, 0.5).unwrap();
        FkEngine::new(Integrator::new(p, f, Some(n)), 7)
    }

    fn potential() -> PotentialSpec {
        PotentialSpec::new(
            0.0,
            vec![PotentialTerm::new(
                Observable::ModeCos(Wavenumber::new(1, 0)),
                0.5,
                TrigProfile {
                    mean: 0.4,
                    cos: vec![0.2],
                    sin: vec![],
                },
            )
            .unwrap()],
        )
    }

    #[test]
    fn zero_potential_preserves_constants_exactly() {
        let e = engine();
        let w = SpectralField::zeros(e.integrator().torus());
        let est = e
            .fk_apply(&PotentialSpec::zero(), |_: &SpectralField, _| 1.0, 0.3, 1.3, TimeSymbol::new(1.0), &w, 16, 1)
            .unwrap();
        assert_eq!(est.value, 1.0);
        assert_eq!(est.std_error, 0.0);
    }

    #[test]
    fn constant_potential_gives_deterministic_weight() {
        let e = engine();
        let w = SpectralField::zeros(e.integrator().torus());
        let est = e
            .fk_apply(&PotentialSpec::constant(-0.7), |_: &SpectralField, _| 1.0, 0.0, 2.0, TimeSymbol::new(0.0), &w, 8, 2)
            .unwrap();
        assert!((est.value - (-1.4f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn measure_action_with_zero_potential_preserves_mass() {
        let e = engine();
        let w = SpectralField::zeros(e.integrator().torus());
        let mu = WeightedEnsemble::point_mass(&w, 8).unwrap();
        let out = e.fk_measure_apply(&PotentialSpec::zero(), &mu, 1.0, TimeSymbol::new(0.0), 3).unwrap();
        assert_eq!(out.total_mass(), mu.total_mass());
        assert_eq!(out.weights(), mu.weights());
    }

    #[test]
    fn shift_covariance_per_path() {
        let e = engine();
        let w = SpectralField::zeros(e.integrator().torus());
        let v = potential();
        let vc = v.shifted(0.3);
        let samples = e
            .samples(&[&v, &vc], |_: &SpectralField, _| 1.0, 0.0, 1.5, TimeSymbol::new(2.0), &w, 8, 4)
            .unwrap();
        for s in &samples {
            assert!((s.log_weights[1] - s.log_weights[0] - 0.3 * 1.5).abs() < 1e-12);
        }
    }

    #[test]
    fn cocycle_identity_with_zero_potential_is_exact() {
        let e = engine();
        let w = SpectralField::zeros(e.integrator().torus());
        let one = |_: &SpectralField, _: TimeSymbol| 1.0;
        let r = e
            .cocycle_residual(&PotentialSpec::zero(), 0.5, 0.5, TimeSymbol::new(0.0), &[w], &[&one], 4, 2, 5)
            .unwrap();
        assert_eq!(r.max_relative, 0.0);
        assert_eq!(r.max_z, 0.0);
    }
}
