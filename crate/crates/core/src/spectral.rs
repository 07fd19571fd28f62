//! Truncated Fourier representation of mean-free vorticity fields on the
//! 2-torus `[0, 2π)²` and the Navier-Stokes spatial operators.
//!
//! A field is `w(x) = Σ_k ŵ(k) e^{i k·x}` over wavenumbers `k ≠ 0` with
//! `|k|_∞ ≤ K`. Only the upper half-spectrum (`k₂ > 0`, or `k₂ = 0, k₁ > 0`)
//! is stored; the partner `ŵ(−k) = conj ŵ(k)` is implied, so every field is
//! real by construction.
//!
//! Norms use the Fourier-ℓ² convention `‖w‖² = Σ_k |ŵ(k)|²` over the full
//! spectrum, i.e. the `L²` norm divided by the torus area `4π²`.

use std::f64::consts::TAU;
use std::fmt;
use std::ops::{Add, AddAssign, Mul, Neg, Sub};
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

const I: Complex64 = Complex64::new(0.0, 1.0);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Wavenumber {
    pub k1: i32,
    pub k2: i32,
}

impl Wavenumber {
    pub const fn new(k1: i32, k2: i32) -> Self {
        Self { k1, k2 }
    }

    pub fn norm_sq(self) -> f64 {
        f64::from(self.k1 * self.k1 + self.k2 * self.k2)
    }

    pub fn sup_norm(self) -> u32 {
        self.k1.unsigned_abs().max(self.k2.unsigned_abs())
    }

    /// Whether `k` belongs to the stored half-spectrum.
    pub fn is_upper(self) -> bool {
        self.k2 > 0 || (self.k2 == 0 && self.k1 > 0)
    }
}

impl Neg for Wavenumber {
    type Output = Wavenumber;
    fn neg(self) -> Wavenumber {
        Wavenumber::new(-self.k1, -self.k2)
    }
}

impl fmt::Display for Wavenumber {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.k1, self.k2)
    }
}

/// Spectral truncation and collocation grid.
#[derive(Debug)]
pub struct TorusSpec {
    truncation: u32,
    grid_size: usize,
    dealias: (u32, u32),
    dealias_cutoff: u32,
    modes: Vec<Wavenumber>,
    lookup: Vec<Option<usize>>,
}

impl TorusSpec {
    /// Truncation `K` on an `N × N` grid with the 2/3 dealiasing rule.
    pub fn new(truncation: u32, grid_size: usize) -> Result<Arc<Self>> {
        Self::with_dealias(truncation, grid_size, 2, 3)
    }

    pub fn with_dealias(
        truncation: u32,
        grid_size: usize,
        numerator: u32,
        denominator: u32,
    ) -> Result<Arc<Self>> {
        if truncation == 0 {
            return Err(Error::InvalidTorus("truncation K must be positive".into()));
        }
        if !grid_size.is_multiple_of(2) || grid_size < 2 * (truncation as usize + 1) {
            return Err(Error::InvalidTorus(format!(
                "grid size N = {grid_size} must be even and at least 2(K+1) = {}",
                2 * (truncation + 1)
            )));
        }
        if numerator == 0 || denominator == 0 || numerator > denominator {
            return Err(Error::InvalidTorus(format!(
                "dealias fraction {numerator}/{denominator} must lie in (0, 1]"
            )));
        }
        // retained band |k|_∞ ≤ floor(fraction · N / 2)
        let cutoff = (numerator as usize * grid_size / (2 * denominator as usize)) as u32;
        if cutoff as usize >= grid_size / 2 {
            return Err(Error::InvalidTorus(format!(
                "dealias cutoff {cutoff} must be strictly below the Nyquist index {}",
                grid_size / 2
            )));
        }
        let k = truncation as i32;
        let side = (2 * k + 1) as usize;
        let mut lookup = vec![None; side * side];
        let mut modes = Vec::with_capacity((side * side - 1) / 2);
        for k2 in 0..=k {
            for k1 in -k..=k {
                let wn = Wavenumber::new(k1, k2);
                if wn.is_upper() {
                    lookup[(k1 + k) as usize * side + (k2 + k) as usize] = Some(modes.len());
                    modes.push(wn);
                }
            }
        }
        Ok(Arc::new(Self {
            truncation,
            grid_size,
            dealias: (numerator, denominator),
            dealias_cutoff: cutoff,
            modes,
            lookup,
        }))
    }

    pub fn truncation(&self) -> u32 {
        self.truncation
    }

    pub fn grid_size(&self) -> usize {
        self.grid_size
    }

    pub fn dealias_fraction(&self) -> (u32, u32) {
        self.dealias
    }

    pub fn dealias_cutoff(&self) -> u32 {
        self.dealias_cutoff
    }

    /// Stored half-spectrum, in storage order.
    pub fn modes(&self) -> &[Wavenumber] {
        &self.modes
    }

    pub fn n_modes(&self) -> usize {
        self.modes.len()
    }

    /// Real dimension of the truncated phase space.
    pub fn real_dimension(&self) -> usize {
        2 * self.modes.len()
    }

    /// Storage slot of `k`, and whether `k` is the conjugate partner of it.
    pub fn locate(&self, k: Wavenumber) -> Option<(usize, bool)> {
        if k.sup_norm() > self.truncation || (k.k1 == 0 && k.k2 == 0) {
            return None;
        }
        let kk = self.truncation as i32;
        let side = (2 * kk + 1) as usize;
        let (canon, conj) = if k.is_upper() { (k, false) } else { (-k, true) };
        self.lookup[(canon.k1 + kk) as usize * side + (canon.k2 + kk) as usize].map(|i| (i, conj))
    }

    fn passes_dealias(&self, k: Wavenumber) -> bool {
        k.sup_norm() <= self.dealias_cutoff
    }

    fn same(a: &Arc<TorusSpec>, b: &Arc<TorusSpec>) -> bool {
        Arc::ptr_eq(a, b) || a == b
    }
}

impl PartialEq for TorusSpec {
    fn eq(&self, other: &Self) -> bool {
        self.truncation == other.truncation && self.grid_size == other.grid_size && self.dealias == other.dealias
    }
}

/// Real, mean-free vorticity field at finite truncation.
#[derive(Clone)]
pub struct SpectralField {
    spec: Arc<TorusSpec>,
    coeffs: Vec<Complex64>,
}

impl fmt::Debug for SpectralField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SpectralField")
            .field("K", &self.spec.truncation)
            .field("norm", &self.norm())
            .finish()
    }
}

impl PartialEq for SpectralField {
    fn eq(&self, other: &Self) -> bool {
        TorusSpec::same(&self.spec, &other.spec) && self.coeffs == other.coeffs
    }
}

impl SpectralField {
    pub fn zeros(spec: &Arc<TorusSpec>) -> Self {
        Self {
            spec: Arc::clone(spec),
            coeffs: vec![Complex64::new(0.0, 0.0); spec.n_modes()],
        }
    }

    /// Wraps half-spectrum coefficients in storage order.
    pub fn from_coeffs(spec: &Arc<TorusSpec>, coeffs: Vec<Complex64>) -> Result<Self> {
        if coeffs.len() != spec.n_modes() {
            return Err(Error::TruncationMismatch);
        }
        Ok(Self {
            spec: Arc::clone(spec),
            coeffs,
        })
    }

    /// Field with `ŵ(k) = c` for each listed pair; lower-half wavenumbers are
    /// conjugated into the stored slot. Wavenumbers outside the truncation are
    /// rejected.
    pub fn from_modes(spec: &Arc<TorusSpec>, entries: &[(Wavenumber, Complex64)]) -> Result<Self> {
        let mut field = Self::zeros(spec);
        for &(k, c) in entries {
            let (i, conj) = spec.locate(k).ok_or_else(|| {
                Error::InvalidTorus(format!("wavenumber {k} is outside the truncation"))
            })?;
            field.coeffs[i] += if conj { c.conj() } else { c };
        }
        Ok(field)
    }

    /// `amplitude · cos(k·x)`.
    pub fn cos_mode(spec: &Arc<TorusSpec>, k: Wavenumber, amplitude: f64) -> Result<Self> {
        Self::from_modes(spec, &[(k, Complex64::new(amplitude / 2.0, 0.0))])
    }

    /// `amplitude · sin(k·x)`.
    pub fn sin_mode(spec: &Arc<TorusSpec>, k: Wavenumber, amplitude: f64) -> Result<Self> {
        Self::from_modes(spec, &[(k, Complex64::new(0.0, -amplitude / 2.0))])
    }

    pub fn spec(&self) -> &Arc<TorusSpec> {
        &self.spec
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [Complex64] {
        &mut self.coeffs
    }

    /// `ŵ(k)` for any wavenumber; zero outside the truncation and at `k = 0`.
    pub fn coeff(&self, k: Wavenumber) -> Complex64 {
        match self.spec.locate(k) {
            Some((i, false)) => self.coeffs[i],
            Some((i, true)) => self.coeffs[i].conj(),
            None => Complex64::new(0.0, 0.0),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.coeffs.iter().all(|c| c.re.is_finite() && c.im.is_finite())
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|c| c.re == 0.0 && c.im == 0.0)
    }

    /// `‖w‖² = Σ_k |ŵ(k)|²` over the full spectrum.
    pub fn norm_sq(&self) -> f64 {
        2.0 * self.coeffs.iter().map(|c| c.norm_sqr()).sum::<f64>()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    /// `‖(−Δ)^{s/2} w‖`.
    pub fn sobolev_norm(&self, s: f64) -> f64 {
        let sum: f64 = self
            .spec
            .modes
            .iter()
            .zip(&self.coeffs)
            .map(|(k, c)| k.norm_sq().powf(s) * c.norm_sqr())
            .sum();
        (2.0 * sum).sqrt()
    }

    /// `⟨u, w⟩ = Σ_k û(k) conj ŵ(k)`, real for real fields.
    pub fn inner(&self, other: &SpectralField) -> f64 {
        debug_assert!(TorusSpec::same(&self.spec, &other.spec));
        2.0 * self
            .coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(a, b)| a.re * b.re + a.im * b.im)
            .sum::<f64>()
    }

    /// Mean over the torus; identically zero for this representation.
    pub fn mean(&self) -> f64 {
        0.0
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            spec: Arc::clone(&self.spec),
            coeffs: self.coeffs.iter().map(|c| c * factor).collect(),
        }
    }

    /// `self += factor · other`.
    pub fn axpy(&mut self, factor: f64, other: &SpectralField) {
        debug_assert!(TorusSpec::same(&self.spec, &other.spec));
        for (a, b) in self.coeffs.iter_mut().zip(&other.coeffs) {
            *a += b * factor;
        }
    }

    /// Orthonormal real coordinates: the Euclidean norm of the returned
    /// vector equals `‖w‖`.
    pub fn to_real_coords(&self) -> Vec<f64> {
        let s = std::f64::consts::SQRT_2;
        self.coeffs.iter().flat_map(|c| [s * c.re, s * c.im]).collect()
    }

    pub fn from_real_coords(spec: &Arc<TorusSpec>, coords: &[f64]) -> Result<Self> {
        if coords.len() != spec.real_dimension() {
            return Err(Error::TruncationMismatch);
        }
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let coeffs = coords
            .chunks_exact(2)
            .map(|p| Complex64::new(s * p[0], s * p[1]))
            .collect();
        Ok(Self {
            spec: Arc::clone(spec),
            coeffs,
        })
    }

    /// Wavenumbers carrying a coefficient with modulus above `tol`.
    pub fn support(&self, tol: f64) -> Vec<Wavenumber> {
        self.spec
            .modes
            .iter()
            .zip(&self.coeffs)
            .filter(|(_, c)| c.norm() > tol)
            .map(|(k, _)| *k)
            .collect()
    }

    /// Applies `ŵ(k) ↦ m(k) ŵ(k)` for a real multiplier.
    pub fn map_real_multiplier(&self, m: impl Fn(Wavenumber) -> f64) -> Self {
        Self {
            spec: Arc::clone(&self.spec),
            coeffs: self
                .spec
                .modes
                .iter()
                .zip(&self.coeffs)
                .map(|(k, c)| c * m(*k))
                .collect(),
        }
    }

    /// `Δw`.
    pub fn laplacian(&self) -> Self {
        self.map_real_multiplier(|k| -k.norm_sq())
    }
}

impl Add for &SpectralField {
    type Output = SpectralField;
    fn add(self, rhs: &SpectralField) -> SpectralField {
        let mut out = self.clone();
        out.axpy(1.0, rhs);
        out
    }
}

impl Sub for &SpectralField {
    type Output = SpectralField;
    fn sub(self, rhs: &SpectralField) -> SpectralField {
        let mut out = self.clone();
        out.axpy(-1.0, rhs);
        out
    }
}

impl AddAssign<&SpectralField> for SpectralField {
    fn add_assign(&mut self, rhs: &SpectralField) {
        self.axpy(1.0, rhs);
    }
}

impl Mul<f64> for &SpectralField {
    type Output = SpectralField;
    fn mul(self, rhs: f64) -> SpectralField {
        self.scaled(rhs)
    }
}

impl Neg for &SpectralField {
    type Output = SpectralField;
    fn neg(self) -> SpectralField {
        self.scaled(-1.0)
    }
}

/// Divergence-free velocity `(u₁, u₂)` in the same truncated basis.
#[derive(Clone, Debug, PartialEq)]
pub struct VelocityField {
    pub u1: SpectralField,
    pub u2: SpectralField,
}

impl VelocityField {
    /// `i k₁ û₁ + i k₂ û₂`.
    pub fn divergence(&self) -> SpectralField {
        let spec = self.u1.spec();
        let coeffs = spec
            .modes()
            .iter()
            .zip(self.u1.coeffs().iter().zip(self.u2.coeffs()))
            .map(|(k, (a, b))| I * (a * f64::from(k.k1) + b * f64::from(k.k2)))
            .collect();
        SpectralField {
            spec: Arc::clone(spec),
            coeffs,
        }
    }

    /// `(‖u₁‖² + ‖u₂‖²)^{1/2}`.
    pub fn norm(&self) -> f64 {
        (self.u1.norm_sq() + self.u2.norm_sq()).sqrt()
    }

    /// `∂₁u₂ − ∂₂u₁`.
    pub fn curl(&self) -> SpectralField {
        let spec = self.u1.spec();
        let coeffs = spec
            .modes()
            .iter()
            .zip(self.u1.coeffs().iter().zip(self.u2.coeffs()))
            .map(|(k, (a, b))| I * (b * f64::from(k.k1) - a * f64::from(k.k2)))
            .collect();
        SpectralField {
            spec: Arc::clone(spec),
            coeffs,
        }
    }
}

/// Biot-Savart law `û(k) = i k^⊥ ŵ(k) / |k|²` with `k^⊥ = (k₂, −k₁)`.
pub fn biot_savart(w: &SpectralField) -> VelocityField {
    let spec = w.spec();
    let (mut c1, mut c2) = (Vec::with_capacity(spec.n_modes()), Vec::with_capacity(spec.n_modes()));
    for (k, c) in spec.modes().iter().zip(w.coeffs()) {
        let s = I * c / k.norm_sq();
        c1.push(s * f64::from(k.k2));
        c2.push(s * f64::from(-k.k1));
    }
    VelocityField {
        u1: SpectralField {
            spec: Arc::clone(spec),
            coeffs: c1,
        },
        u2: SpectralField {
            spec: Arc::clone(spec),
            coeffs: c2,
        },
    }
}

/// `‖(−Δ)^{s/2} w‖`; `s = 0` gives the phase-space norm.
pub fn sobolev_norm(w: &SpectralField, s: f64) -> f64 {
    w.sobolev_norm(s)
}

/// FFT plans and scratch buffers for pseudo-spectral products.
///
/// Not shareable across threads; give each worker its own.
pub struct SpectralWorkspace {
    spec: Arc<TorusSpec>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    velocity: Vec<Complex64>,
    gradient: Vec<Complex64>,
    scratch: Vec<Complex64>,
}

impl SpectralWorkspace {
    pub fn new(spec: &Arc<TorusSpec>) -> Self {
        let n = spec.grid_size();
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(n);
        let inverse = planner.plan_fft_inverse(n);
        let scratch_len = forward
            .get_inplace_scratch_len()
            .max(inverse.get_inplace_scratch_len());
        Self {
            spec: Arc::clone(spec),
            forward,
            inverse,
            velocity: vec![Complex64::default(); n * n],
            gradient: vec![Complex64::default(); n * n],
            scratch: vec![Complex64::default(); scratch_len],
        }
    }

    pub fn spec(&self) -> &Arc<TorusSpec> {
        &self.spec
    }

    /// Writes `B(Ku, w) = (Ku)·∇w` into `out`, dealiased and projected onto
    /// the truncation.
    pub fn advection_into(&mut self, u: &SpectralField, w: &SpectralField, out: &mut SpectralField) {
        let spec = Arc::clone(&self.spec);
        let n = spec.grid_size();
        self.velocity.fill(Complex64::default());
        self.gradient.fill(Complex64::default());
        // Pack the two real components of each vector field as re + i·im so a
        // single complex transform produces both grids.
        for (idx, &k) in spec.modes().iter().enumerate() {
            if !spec.passes_dealias(k) {
                continue;
            }
            let cu = u.coeffs[idx];
            let cw = w.coeffs[idx];
            let s = I * cu / k.norm_sq();
            let u1 = s * f64::from(k.k2);
            let u2 = s * f64::from(-k.k1);
            let g1 = I * cw * f64::from(k.k1);
            let g2 = I * cw * f64::from(k.k2);
            let pos = grid_index(k, n);
            let neg = grid_index(-k, n);
            self.velocity[pos] = u1 + I * u2;
            self.velocity[neg] = u1.conj() + I * u2.conj();
            self.gradient[pos] = g1 + I * g2;
            self.gradient[neg] = g1.conj() + I * g2.conj();
        }
        transform_2d(&*self.inverse, &mut self.velocity, &mut self.scratch, n);
        transform_2d(&*self.inverse, &mut self.gradient, &mut self.scratch, n);
        for (a, b) in self.velocity.iter_mut().zip(&self.gradient) {
            *a = Complex64::new(a.re * b.re + a.im * b.im, 0.0);
        }
        // Grid is in transposed layout after the inverse pass; the forward pass
        // transposes back.
        transform_2d(&*self.forward, &mut self.velocity, &mut self.scratch, n);
        let norm = 1.0 / (n * n) as f64;
        for (idx, &k) in spec.modes().iter().enumerate() {
            out.coeffs[idx] = if spec.passes_dealias(k) {
                self.velocity[grid_index(k, n)] * norm
            } else {
                Complex64::default()
            };
        }
    }

    /// `B(Kw, w)`.
    pub fn nonlinear_term(&mut self, w: &SpectralField) -> SpectralField {
        let mut out = SpectralField::zeros(&self.spec);
        self.advection_into(w, w, &mut out);
        out
    }

    /// `B̃(u, w) = −B(Ku, w) − B(Kw, u)`.
    pub fn symmetrized_bracket(&mut self, u: &SpectralField, w: &SpectralField) -> SpectralField {
        let mut a = SpectralField::zeros(&self.spec);
        let mut b = SpectralField::zeros(&self.spec);
        self.advection_into(u, w, &mut a);
        self.advection_into(w, u, &mut b);
        for (x, y) in a.coeffs.iter_mut().zip(&b.coeffs) {
            *x = -*x - *y;
        }
        a
    }

    /// Values on the collocation grid, `grid[i₁ N + i₂] = w(2π i₁/N, 2π i₂/N)`.
    pub fn to_grid(&mut self, w: &SpectralField) -> Vec<f64> {
        let n = self.spec.grid_size();
        self.velocity.fill(Complex64::default());
        for (idx, &k) in self.spec.modes().iter().enumerate() {
            let c = w.coeffs[idx];
            self.velocity[grid_index(k, n)] = c;
            self.velocity[grid_index(-k, n)] = c.conj();
        }
        transform_2d(&*self.inverse, &mut self.velocity, &mut self.scratch, n);
        // transposed layout: velocity[i₂ N + i₁]
        let mut out = vec![0.0; n * n];
        for i1 in 0..n {
            for i2 in 0..n {
                out[i1 * n + i2] = self.velocity[i2 * n + i1].re;
            }
        }
        out
    }

    /// Projects grid values onto the truncated mean-free basis.
    pub fn from_grid(&mut self, grid: &[f64]) -> Result<SpectralField> {
        let n = self.spec.grid_size();
        if grid.len() != n * n {
            return Err(Error::TruncationMismatch);
        }
        // Feed the forward pass in transposed layout, matching to_grid.
        for i1 in 0..n {
            for i2 in 0..n {
                self.velocity[i2 * n + i1] = Complex64::new(grid[i1 * n + i2], 0.0);
            }
        }
        transform_2d(&*self.forward, &mut self.velocity, &mut self.scratch, n);
        let norm = 1.0 / (n * n) as f64;
        let coeffs = self
            .spec
            .modes()
            .iter()
            .map(|&k| self.velocity[grid_index(k, n)] * norm)
            .collect();
        SpectralField::from_coeffs(&self.spec, coeffs)
    }
}

/// `B(Kw, w)` with a throwaway workspace.
pub fn nonlinear_term(w: &SpectralField) -> SpectralField {
    SpectralWorkspace::new(w.spec()).nonlinear_term(w)
}

/// `B̃(u, w) = −B(Ku, w) − B(Kw, u)` with a throwaway workspace.
pub fn symmetrized_bracket(u: &SpectralField, w: &SpectralField) -> SpectralField {
    SpectralWorkspace::new(u.spec()).symmetrized_bracket(u, w)
}

fn grid_index(k: Wavenumber, n: usize) -> usize {
    let n_i = n as i32;
    (k.k1.rem_euclid(n_i) as usize) * n + k.k2.rem_euclid(n_i) as usize
}

/// Row transforms, transpose, row transforms. Applied twice the layout is
/// restored, which is how the inverse/forward pair is used above.
fn transform_2d(fft: &dyn Fft<f64>, buf: &mut [Complex64], scratch: &mut [Complex64], n: usize) {
    fft.process_with_scratch(buf, scratch);
    transpose(buf, n);
    fft.process_with_scratch(buf, scratch);
}

fn transpose(buf: &mut [Complex64], n: usize) {
    for r in 0..n {
        for c in (r + 1)..n {
            buf.swap(r * n + c, c * n + r);
        }
    }
}

/// Grid coordinate `2π i / N`.
pub fn grid_point(i: usize, n: usize) -> f64 {
    TAU * i as f64 / n as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn spec() -> Arc<TorusSpec> {
        TorusSpec::new(8, 32).unwrap()
    }

    #[test]
    fn default_truncation_counts() {
        let s = spec();
        assert_eq!(s.n_modes(), 144);
        assert_eq!(s.real_dimension(), 288);
        assert_eq!(s.dealias_cutoff(), 10);
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(TorusSpec::new(8, 31).is_err());
        assert!(TorusSpec::new(8, 16).is_err());
        assert!(TorusSpec::new(0, 16).is_err());
        assert!(TorusSpec::with_dealias(4, 16, 1, 1).is_err());
    }

    #[test]
    fn cos_mode_norm_and_coefficients() {
        let s = spec();
        let w = SpectralField::cos_mode(&s, Wavenumber::new(1, 0), 1.0).unwrap();
        assert_eq!(w.coeff(Wavenumber::new(1, 0)), Complex64::new(0.5, 0.0));
        assert_eq!(w.coeff(Wavenumber::new(-1, 0)), Complex64::new(0.5, 0.0));
        // L² norm √(2π²) divided by the area factor 2π
        assert_abs_diff_eq!(w.norm(), (2.0 * std::f64::consts::PI.powi(2)).sqrt() / TAU, epsilon = 1e-15);
        assert_abs_diff_eq!(w.norm(), 0.5f64.sqrt(), epsilon = 1e-15);
    }

    #[test]
    fn sobolev_scaling() {
        let s = spec();
        let w = SpectralField::cos_mode(&s, Wavenumber::new(2, 0), 1.0).unwrap();
        assert_abs_diff_eq!(w.sobolev_norm(2.0), 4.0 * w.sobolev_norm(0.0), epsilon = 1e-14);
        assert_eq!(SpectralField::zeros(&s).sobolev_norm(1.5), 0.0);
    }

    #[test]
    fn biot_savart_single_modes() {
        let s = spec();
        let mut ws = SpectralWorkspace::new(&s);
        let w = SpectralField::cos_mode(&s, Wavenumber::new(1, 0), 1.0).unwrap();
        let u = biot_savart(&w);
        assert!(u.u1.is_zero());
        let expected = SpectralField::sin_mode(&s, Wavenumber::new(1, 0), 1.0).unwrap();
        assert_eq!(u.u2, expected);
        // grid cross-check: u₂(x) = sin(x₁)
        let g = ws.to_grid(&u.u2);
        let n = s.grid_size();
        for i1 in 0..n {
            for i2 in 0..n {
                assert_abs_diff_eq!(g[i1 * n + i2], grid_point(i1, n).sin(), epsilon = 1e-13);
            }
        }

        let w = SpectralField::sin_mode(&s, Wavenumber::new(0, 2), 1.0).unwrap();
        let u = biot_savart(&w);
        assert!(u.u2.is_zero());
        let expected = SpectralField::cos_mode(&s, Wavenumber::new(0, 2), 0.5).unwrap();
        assert_abs_diff_eq!((&u.u1 - &expected).norm(), 0.0, epsilon = 1e-16);

        assert!(biot_savart(&SpectralField::zeros(&s)).u1.is_zero());
    }

    #[test]
    fn grid_round_trip() {
        let s = TorusSpec::new(4, 16).unwrap();
        let mut ws = SpectralWorkspace::new(&s);
        let w = SpectralField::from_modes(
            &s,
            &[
                (Wavenumber::new(1, 2), Complex64::new(0.3, -0.2)),
                (Wavenumber::new(-3, 1), Complex64::new(0.1, 0.7)),
                (Wavenumber::new(4, 0), Complex64::new(-0.4, 0.0)),
            ],
        )
        .unwrap();
        let g = ws.to_grid(&w);
        let back = ws.from_grid(&g).unwrap();
        assert_abs_diff_eq!((&back - &w).norm(), 0.0, epsilon = 1e-14);
        let l2: f64 = g.iter().map(|v| v * v).sum::<f64>() / g.len() as f64;
        assert_abs_diff_eq!(l2, w.norm_sq(), epsilon = 1e-12);
    }

    #[test]
    fn shear_flow_has_no_self_advection() {
        let s = spec();
        let w = SpectralField::cos_mode(&s, Wavenumber::new(1, 0), 1.0).unwrap();
        assert!(nonlinear_term(&w).is_zero());
        let b = symmetrized_bracket(&w, &w);
        assert!(b.is_zero());
    }
}
