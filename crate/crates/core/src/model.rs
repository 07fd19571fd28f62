//! Forcing, noise, time symbols and integration parameters.

use std::f64::consts::TAU;
use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{invalid, Error, Result};
use crate::spectral::{SpectralField, TorusSpec, Wavenumber};

/// Point `h` on the symbol circle `ℝ / 2πℤ`.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd)]
pub struct TimeSymbol(f64);

impl TimeSymbol {
    pub fn new(h: f64) -> Self {
        Self(reduce(h))
    }

    pub fn value(self) -> f64 {
        self.0
    }

    /// Circle rotation `β_t h = h + t mod 2π`.
    pub fn shift(self, t: f64) -> Self {
        Self(reduce(self.0 + t))
    }
}

fn reduce(h: f64) -> f64 {
    let r = h.rem_euclid(TAU);
    if r >= TAU {
        0.0
    } else {
        r
    }
}

/// One time harmonic of the forcing: `cos(m t)·a + sin(m t)·b`.
#[derive(Clone, Debug)]
pub struct ForcingHarmonic {
    pub order: u32,
    pub cos: SpectralField,
    pub sin: SpectralField,
}

/// `2π`-periodic forcing `f(t) = Σ_m cos(m t) a_m + sin(m t) b_m`, a finite
/// trigonometric polynomial with `H`-valued coefficients.
#[derive(Clone, Debug)]
pub struct ForcingSpec {
    spec: Arc<TorusSpec>,
    harmonics: Vec<ForcingHarmonic>,
}

impl ForcingSpec {
    pub fn zero(spec: &Arc<TorusSpec>) -> Self {
        Self {
            spec: Arc::clone(spec),
            harmonics: Vec::new(),
        }
    }

    pub fn new(spec: &Arc<TorusSpec>, harmonics: Vec<ForcingHarmonic>) -> Result<Self> {
        for h in &harmonics {
            if !h.cos.is_finite() || !h.sin.is_finite() {
                return Err(invalid("forcing", "non-finite forcing coefficient"));
            }
        }
        Ok(Self {
            spec: Arc::clone(spec),
            harmonics,
        })
    }

    /// `A (cos t · cos(x₁+x₂) + sin t · sin(2x₁))`.
    pub fn standard(spec: &Arc<TorusSpec>, amplitude: f64) -> Result<Self> {
        if spec.truncation() < 2 {
            return Err(invalid("forcing", "standard forcing needs K ≥ 2"));
        }
        let cos = SpectralField::cos_mode(spec, Wavenumber::new(1, 1), amplitude)?;
        let sin = SpectralField::sin_mode(spec, Wavenumber::new(2, 0), amplitude)?;
        Self::new(spec, vec![ForcingHarmonic { order: 1, cos, sin }])
    }

    pub fn harmonics(&self) -> &[ForcingHarmonic] {
        &self.harmonics
    }

    pub fn is_zero(&self) -> bool {
        self.harmonics.iter().all(|h| h.cos.is_zero() && h.sin.is_zero())
    }

    /// Adds `scale · f(h)` to a coefficient buffer.
    pub fn add_into(&self, h: TimeSymbol, scale: f64, out: &mut [Complex64]) {
        for harm in &self.harmonics {
            let phase = f64::from(harm.order) * h.value();
            let (c, s) = (phase.cos() * scale, phase.sin() * scale);
            for ((o, a), b) in out.iter_mut().zip(harm.cos.coeffs()).zip(harm.sin.coeffs()) {
                *o += a * c + b * s;
            }
        }
    }

    pub fn eval(&self, h: TimeSymbol) -> SpectralField {
        let mut f = SpectralField::zeros(&self.spec);
        self.add_into(h, 1.0, f.coeffs_mut());
        f
    }

    /// `sup_t ‖f(t)‖_s`, bounded by the sum of harmonic norms.
    pub fn sup_norm_bound(&self, s: f64) -> f64 {
        self.harmonics
            .iter()
            .map(|h| h.cos.sobolev_norm(s) + h.sin.sobolev_norm(s))
            .sum()
    }
}

/// Noise directions `g₁, …, g_d`.
#[derive(Clone, Debug)]
pub struct NoiseSpec {
    fields: Vec<SpectralField>,
}

impl NoiseSpec {
    pub fn new(fields: Vec<SpectralField>) -> Result<Self> {
        if fields.is_empty() {
            return Err(invalid("noise", "at least one noise direction is required"));
        }
        if let Some(i) = fields.iter().position(|g| g.is_zero() || !g.is_finite()) {
            return Err(invalid("noise", format!("noise direction {i} is zero or non-finite")));
        }
        Ok(Self { fields })
    }

    /// `σ cos(k·x)` for each listed wavenumber.
    pub fn cosine_modes(spec: &Arc<TorusSpec>, modes: &[Wavenumber], amplitude: f64) -> Result<Self> {
        let fields = modes
            .iter()
            .map(|&k| SpectralField::cos_mode(spec, k, amplitude))
            .collect::<Result<Vec<_>>>()?;
        Self::new(fields)
    }

    /// Four modes `(1,0), (0,1), (1,1), (−1,1)` with amplitude `σ`.
    pub fn standard(spec: &Arc<TorusSpec>, amplitude: f64) -> Result<Self> {
        Self::cosine_modes(spec, &STANDARD_NOISE_MODES, amplitude)
    }

    pub fn dim(&self) -> usize {
        self.fields.len()
    }

    pub fn fields(&self) -> &[SpectralField] {
        &self.fields
    }

    /// `B₀ = Σ ‖g_i‖²`.
    pub fn total_power(&self) -> f64 {
        self.fields.iter().map(SpectralField::norm_sq).sum()
    }
}

pub const STANDARD_NOISE_MODES: [Wavenumber; 4] = [
    Wavenumber::new(1, 0),
    Wavenumber::new(0, 1),
    Wavenumber::new(1, 1),
    Wavenumber::new(-1, 1),
];

/// Largest accepted `dt · ν · K²`.
pub const MAX_STIFFNESS: f64 = 10.0;

#[derive(Clone, Debug)]
pub struct SimulationParams {
    viscosity: f64,
    dt: f64,
    torus: Arc<TorusSpec>,
}

impl SimulationParams {
    pub fn new(torus: &Arc<TorusSpec>, viscosity: f64, dt: f64) -> Result<Self> {
        if !(viscosity > 0.0 && viscosity.is_finite()) {
            return Err(invalid("viscosity", "must be positive and finite"));
        }
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(invalid("dt", "must be positive and finite"));
        }
        let k = f64::from(torus.truncation());
        let stiffness = dt * viscosity * k * k;
        if stiffness > MAX_STIFFNESS {
            return Err(Error::InvalidParameter {
                name: "dt",
                reason: format!("dt·ν·K² = {stiffness:.3} exceeds {MAX_STIFFNESS}"),
            });
        }
        Ok(Self {
            viscosity,
            dt,
            torus: Arc::clone(torus),
        })
    }

    pub fn viscosity(&self) -> f64 {
        self.viscosity
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn torus(&self) -> &Arc<TorusSpec> {
        &self.torus
    }

    /// Number of steps covering a time span, rounded to the step grid.
    pub fn steps_for(&self, span: f64) -> usize {
        (span / self.dt).round().max(0.0) as usize
    }
}
