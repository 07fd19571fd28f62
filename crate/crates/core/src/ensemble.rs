//! Weighted particle ensembles approximating finite non-negative measures.

use crate::error::{invalid, Result};
use crate::potential::Observable;
use crate::spectral::SpectralField;
use crate::stats;

#[derive(Clone, Debug, PartialEq)]
pub struct WeightedEnsemble {
    particles: Vec<SpectralField>,
    weights: Vec<f64>,
    total_mass: f64,
}

impl WeightedEnsemble {
    pub fn new(particles: Vec<SpectralField>, weights: Vec<f64>) -> Result<Self> {
        if particles.is_empty() {
            return Err(invalid("ensemble", "no particles"));
        }
        if particles.len() != weights.len() {
            return Err(invalid("ensemble", "particle and weight counts differ"));
        }
        if let Some(i) = weights.iter().position(|w| !(*w > 0.0 && w.is_finite())) {
            return Err(invalid("ensemble", format!("weight {i} is not positive and finite")));
        }
        let total_mass = weights.iter().sum();
        Ok(Self {
            particles,
            weights,
            total_mass,
        })
    }

    /// Equal weights summing to 1.
    pub fn uniform(particles: Vec<SpectralField>) -> Result<Self> {
        let n = particles.len().max(1);
        Self::new(particles, vec![1.0 / n as f64; n])
    }

    /// `n` copies of `w` with weight `1/n` each.
    pub fn point_mass(w: &SpectralField, n: usize) -> Result<Self> {
        Self::uniform(vec![w.clone(); n])
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn particles(&self) -> &[SpectralField] {
        &self.particles
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn total_mass(&self) -> f64 {
        self.total_mass
    }

    pub fn into_parts(self) -> (Vec<SpectralField>, Vec<f64>) {
        (self.particles, self.weights)
    }

    /// Rescaled to total mass 1.
    pub fn normalized(&self) -> Self {
        let m = self.total_mass;
        let weights: Vec<f64> = self.weights.iter().map(|w| w / m).collect();
        let total_mass = weights.iter().sum();
        Self {
            particles: self.particles.clone(),
            weights,
            total_mass,
        }
    }

    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(
            self.particles.clone(),
            self.weights.iter().map(|w| w * factor).collect(),
        )
    }

    /// Effective sample size `(Σw)² / Σw²`.
    pub fn ess(&self) -> f64 {
        let s2: f64 = self.weights.iter().map(|w| w * w).sum();
        self.total_mass * self.total_mass / s2
    }

    /// `⟨μ, f⟩ = Σ w_i f(w_i)`.
    pub fn integrate(&self, f: impl Fn(&SpectralField) -> f64) -> f64 {
        self.particles.iter().zip(&self.weights).map(|(p, w)| w * f(p)).sum()
    }

    /// Normalized expectation with its weighted standard error.
    pub fn mean_se(&self, f: impl Fn(&SpectralField) -> f64) -> (f64, f64) {
        let xs: Vec<f64> = self.particles.iter().map(f).collect();
        stats::weighted_mean_se(&self.weights, &xs)
    }

    /// Systematic resampling to `n_out` equal-weight particles, preserving the
    /// total mass. `u ∈ [0, 1)` is the single uniform offset.
    pub fn systematic_resample(&self, n_out: usize, u: f64) -> Self {
        let n_out = n_out.max(1);
        let step = self.total_mass / n_out as f64;
        let mut out = Vec::with_capacity(n_out);
        let mut cum = self.weights[0];
        let mut i = 0;
        for j in 0..n_out {
            let target = (u + j as f64) * step;
            while cum < target && i + 1 < self.weights.len() {
                i += 1;
                cum += self.weights[i];
            }
            out.push(self.particles[i].clone());
        }
        Self {
            particles: out,
            weights: vec![step; n_out],
            total_mass: step * n_out as f64,
        }
    }

    /// Concatenation (sum of measures).
    pub fn merge(&self, other: &Self) -> Self {
        let mut particles = self.particles.clone();
        particles.extend_from_slice(&other.particles);
        let mut weights = self.weights.clone();
        weights.extend_from_slice(&other.weights);
        let total_mass = weights.iter().sum();
        Self {
            particles,
            weights,
            total_mass,
        }
    }

    /// Sub-ensemble of particles `offset, offset + stride, …`.
    pub fn strided(&self, offset: usize, stride: usize) -> Result<Self> {
        let idx: Vec<usize> = (offset..self.len()).step_by(stride.max(1)).collect();
        Self::new(
            idx.iter().map(|&i| self.particles[i].clone()).collect(),
            idx.iter().map(|&i| self.weights[i]).collect(),
        )
    }
}

/// Bounded test observable `tanh(o(w)/s)` used by [`bl_distance`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TestObservable {
    pub observable: Observable,
    pub scale: f64,
}

impl TestObservable {
    pub fn eval(&self, w: &SpectralField) -> f64 {
        (self.observable.eval(w) / self.scale).tanh()
    }
}

/// Bounded-Lipschitz surrogate distance between the normalized versions of
/// two ensembles: the largest difference of means over a fixed family of
/// bounded test observables.
pub fn bl_distance(a: &WeightedEnsemble, b: &WeightedEnsemble, family: &[TestObservable]) -> f64 {
    family
        .iter()
        .map(|t| {
            let ma = a.integrate(|w| t.eval(w)) / a.total_mass();
            let mb = b.integrate(|w| t.eval(w)) / b.total_mass();
            (ma - mb).abs()
        })
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::{TorusSpec, Wavenumber};

    fn fields(n: usize) -> Vec<SpectralField> {
        let s = TorusSpec::new(2, 8).unwrap();
        (0..n)
            .map(|i| SpectralField::cos_mode(&s, Wavenumber::new(1, 0), i as f64).unwrap())
            .collect()
    }

    #[test]
    fn rejects_bad_weights() {
        assert!(WeightedEnsemble::new(fields(2), vec![1.0, 0.0]).is_err());
        assert!(WeightedEnsemble::new(fields(2), vec![1.0]).is_err());
        assert!(WeightedEnsemble::new(vec![], vec![]).is_err());
    }

    #[test]
    fn ess_and_normalization() {
        let e = WeightedEnsemble::new(fields(4), vec![1.0, 1.0, 1.0, 1.0]).unwrap();
        assert_eq!(e.ess(), 4.0);
        assert!((e.normalized().total_mass() - 1.0).abs() < 1e-15);
        let skew = WeightedEnsemble::new(fields(2), vec![1.0, 1e-9]).unwrap();
        assert!(skew.ess() < 1.01);
    }

    #[test]
    fn systematic_resampling_follows_weights() {
        let e = WeightedEnsemble::new(fields(3), vec![0.5, 0.25, 0.25]).unwrap();
        let r = e.systematic_resample(8, 0.3);
        assert_eq!(r.len(), 8);
        assert!((r.total_mass() - 1.0).abs() < 1e-15);
        let count = |i: usize| r.particles().iter().filter(|p| **p == e.particles()[i]).count();
        assert_eq!((count(0), count(1), count(2)), (4, 2, 2));
    }

    #[test]
    fn bl_distance_of_identical_ensembles_is_zero() {
        let e = WeightedEnsemble::uniform(fields(5)).unwrap();
        let fam = [TestObservable {
            observable: Observable::ModeCos(Wavenumber::new(1, 0)),
            scale: 1.0,
        }];
        assert!(bl_distance(&e, &e.scaled(3.0).unwrap(), &fam) < 1e-15);
        let other = WeightedEnsemble::uniform(fields(2)).unwrap();
        assert!(bl_distance(&e, &other, &fam) > 0.1);
    }
}
