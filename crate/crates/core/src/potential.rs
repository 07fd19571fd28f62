//! Bounded potentials `V(w, h)` built from a dictionary of squashed low-mode
//! observables with trigonometric symbol profiles.
//!
//! `V(w, h) = c₀ + Σ_j p_j(h) · s_j tanh(o_j(w) / s_j)` where each `o_j` is a
//! linear functional on a Fourier mode, the energy `‖w‖²`, the enstrophy
//! `‖w‖₁²` or the constant 1 (which is bounded and is not squashed), and
//! `p_j(h) = a₀ + Σ_m a_m cos(mh) + b_m sin(mh)`.
//!
//! The profile coefficients, term by term, are the dictionary coordinates
//! `θ`: `V = c₀ + Σ_i θ_i ψ_i(w, h)` with features `ψ_i` bounded by the
//! squash scale. `c₀` is kept apart from `θ` and enters Feynman-Kac weights
//! as an exact scalar factor.

use std::fmt;

use crate::error::{invalid, Result};
use crate::model::TimeSymbol;
use crate::spectral::{SpectralField, Wavenumber};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Observable {
    /// `⟨w, cos(k·x)⟩ = Re ŵ(k)`.
    ModeCos(Wavenumber),
    /// `⟨w, sin(k·x)⟩ = −Im ŵ(k)`.
    ModeSin(Wavenumber),
    /// `‖w‖²`.
    Energy,
    /// `‖w‖₁²`.
    Enstrophy,
    Constant,
}

impl Observable {
    pub fn eval(&self, w: &SpectralField) -> f64 {
        match *self {
            Observable::ModeCos(k) => w.coeff(k).re,
            Observable::ModeSin(k) => -w.coeff(k).im,
            Observable::Energy => w.norm_sq(),
            Observable::Enstrophy => {
                let n = w.sobolev_norm(1.0);
                n * n
            }
            Observable::Constant => 1.0,
        }
    }

    /// Bounded observables skip squashing.
    pub fn is_bounded(&self) -> bool {
        matches!(self, Observable::Constant)
    }

    /// Parses `cos(k1,k2)`, `sin(k1,k2)`, `energy`, `enstrophy`, `const`.
    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim();
        match s {
            "energy" => return Ok(Observable::Energy),
            "enstrophy" => return Ok(Observable::Enstrophy),
            "const" | "constant" => return Ok(Observable::Constant),
            _ => {}
        }
        let (name, rest) = s
            .split_once('(')
            .ok_or_else(|| invalid("observable", format!("cannot parse `{s}`")))?;
        let inner = rest
            .strip_suffix(')')
            .ok_or_else(|| invalid("observable", format!("missing `)` in `{s}`")))?;
        let (a, b) = inner
            .split_once(',')
            .ok_or_else(|| invalid("observable", format!("expected two wavenumber components in `{s}`")))?;
        let parse = |t: &str| {
            t.trim()
                .parse::<i32>()
                .map_err(|_| invalid("observable", format!("bad wavenumber component `{t}`")))
        };
        let k = Wavenumber::new(parse(a)?, parse(b)?);
        match name.trim() {
            "cos" => Ok(Observable::ModeCos(k)),
            "sin" => Ok(Observable::ModeSin(k)),
            other => Err(invalid("observable", format!("unknown observable `{other}`"))),
        }
    }
}

impl fmt::Display for Observable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Observable::ModeCos(k) => write!(f, "cos({},{})", k.k1, k.k2),
            Observable::ModeSin(k) => write!(f, "sin({},{})", k.k1, k.k2),
            Observable::Energy => f.write_str("energy"),
            Observable::Enstrophy => f.write_str("enstrophy"),
            Observable::Constant => f.write_str("const"),
        }
    }
}

/// `a₀ + Σ_{m≥1} a_m cos(mh) + b_m sin(mh)`.
#[derive(Clone, Debug, PartialEq)]
pub struct TrigProfile {
    pub mean: f64,
    pub cos: Vec<f64>,
    pub sin: Vec<f64>,
}

impl TrigProfile {
    pub fn constant(a: f64) -> Self {
        Self {
            mean: a,
            cos: Vec::new(),
            sin: Vec::new(),
        }
    }

    pub fn eval(&self, h: f64) -> f64 {
        let mut v = self.mean;
        for (m, a) in self.cos.iter().enumerate() {
            v += a * ((m + 1) as f64 * h).cos();
        }
        for (m, b) in self.sin.iter().enumerate() {
            v += b * ((m + 1) as f64 * h).sin();
        }
        v
    }

    pub fn abs_sum(&self) -> f64 {
        self.mean.abs() + self.cos.iter().chain(&self.sin).map(|x| x.abs()).sum::<f64>()
    }

    /// Lipschitz modulus in `h`.
    pub fn lipschitz(&self) -> f64 {
        self.cos
            .iter()
            .enumerate()
            .chain(self.sin.iter().enumerate())
            .map(|(m, x)| (m + 1) as f64 * x.abs())
            .sum()
    }

    fn n_coords(&self) -> usize {
        1 + self.cos.len() + self.sin.len()
    }

    fn basis(&self, h: f64, out: &mut Vec<f64>) {
        out.push(1.0);
        for m in 1..=self.cos.len() {
            out.push((m as f64 * h).cos());
        }
        for m in 1..=self.sin.len() {
            out.push((m as f64 * h).sin());
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PotentialTerm {
    pub observable: Observable,
    /// Squash scale `s > 0` in `s tanh(o / s)`.
    pub scale: f64,
    pub profile: TrigProfile,
}

impl PotentialTerm {
    pub fn new(observable: Observable, scale: f64, profile: TrigProfile) -> Result<Self> {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(invalid("potential.scale", "squash scale must be positive and finite"));
        }
        Ok(Self {
            observable,
            scale,
            profile,
        })
    }

    /// Bounded value of the observable, `s tanh(o/s)`.
    pub fn squashed(&self, w: &SpectralField) -> f64 {
        self.squash(self.observable.eval(w))
    }

    pub fn squash(&self, raw: f64) -> f64 {
        if self.observable.is_bounded() {
            raw
        } else {
            self.scale * (raw / self.scale).tanh()
        }
    }

    fn feature_bound(&self) -> f64 {
        if self.observable.is_bounded() {
            1.0
        } else {
            self.scale
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PotentialSpec {
    pub offset: f64,
    pub terms: Vec<PotentialTerm>,
}

impl PotentialSpec {
    pub fn zero() -> Self {
        Self::constant(0.0)
    }

    pub fn constant(c: f64) -> Self {
        Self {
            offset: c,
            terms: Vec::new(),
        }
    }

    pub fn new(offset: f64, terms: Vec<PotentialTerm>) -> Self {
        Self { offset, terms }
    }

    pub fn eval(&self, w: &SpectralField, h: TimeSymbol) -> f64 {
        self.offset + self.eval_variable(w, h)
    }

    /// `V − c₀`.
    pub fn eval_variable(&self, w: &SpectralField, h: TimeSymbol) -> f64 {
        self.terms
            .iter()
            .map(|t| t.profile.eval(h.value()) * t.squashed(w))
            .sum()
    }

    /// Whether `V − c₀` vanishes identically.
    pub fn is_constant(&self) -> bool {
        self.terms
            .iter()
            .all(|t| t.profile.abs_sum() == 0.0)
    }

    pub fn shifted(&self, c: f64) -> Self {
        Self {
            offset: self.offset + c,
            terms: self.terms.clone(),
        }
    }

    /// `sup |V|`, bounded by construction.
    pub fn sup_bound(&self) -> f64 {
        self.offset.abs()
            + self
                .terms
                .iter()
                .map(|t| t.feature_bound() * t.profile.abs_sum())
                .sum::<f64>()
    }

    /// Lipschitz modulus of `h ↦ V(w, h)`, uniform in `w`.
    pub fn symbol_lipschitz(&self) -> f64 {
        self.terms
            .iter()
            .map(|t| t.feature_bound() * t.profile.lipschitz())
            .sum()
    }

    pub fn n_coords(&self) -> usize {
        self.terms.iter().map(|t| t.profile.n_coords()).sum()
    }

    /// Dictionary coordinates `θ`, term by term: `a₀, a₁.., b₁..`.
    pub fn coordinates(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_coords());
        for t in &self.terms {
            out.push(t.profile.mean);
            out.extend_from_slice(&t.profile.cos);
            out.extend_from_slice(&t.profile.sin);
        }
        out
    }

    /// Same dictionary with coordinates replaced.
    pub fn with_coordinates(&self, theta: &[f64]) -> Self {
        assert_eq!(theta.len(), self.n_coords(), "coordinate vector length");
        let mut it = theta.iter().copied();
        let terms = self
            .terms
            .iter()
            .map(|t| {
                let mean = it.next().unwrap_or_default();
                let cos = (0..t.profile.cos.len()).map(|_| it.next().unwrap_or_default()).collect();
                let sin = (0..t.profile.sin.len()).map(|_| it.next().unwrap_or_default()).collect();
                PotentialTerm {
                    observable: t.observable,
                    scale: t.scale,
                    profile: TrigProfile { mean, cos, sin },
                }
            })
            .collect();
        Self {
            offset: self.offset,
            terms,
        }
    }

    /// Features `ψ_i(w, h)` in coordinate order.
    pub fn features(&self, w: &SpectralField, h: TimeSymbol) -> Vec<f64> {
        let obs: Vec<f64> = self.terms.iter().map(|t| t.observable.eval(w)).collect();
        self.features_from_observables(&obs, h)
    }

    /// Features from raw observable values (one per term).
    pub fn features_from_observables(&self, raw: &[f64], h: TimeSymbol) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_coords());
        let mut basis = Vec::new();
        for (t, &o) in self.terms.iter().zip(raw) {
            basis.clear();
            t.profile.basis(h.value(), &mut basis);
            let s = t.squash(o);
            out.extend(basis.iter().map(|b| b * s));
        }
        out
    }

    /// Raw observable values, one per term.
    pub fn observables(&self, w: &SpectralField) -> Vec<f64> {
        self.terms.iter().map(|t| t.observable.eval(w)).collect()
    }

    fn same_dictionary(&self, other: &Self) -> bool {
        self.terms.len() == other.terms.len()
            && self.terms.iter().zip(&other.terms).all(|(a, b)| {
                a.observable == b.observable
                    && a.scale == b.scale
                    && a.profile.cos.len() == b.profile.cos.len()
                    && a.profile.sin.len() == b.profile.sin.len()
            })
    }

    /// Bound on `‖V − W‖_∞` when both share a dictionary.
    pub fn difference_bound(&self, other: &Self) -> Option<f64> {
        if !self.same_dictionary(other) {
            return None;
        }
        let a = self.coordinates();
        let b = other.coordinates();
        let diff: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x - y).collect();
        let d = self.with_coordinates(&diff);
        Some((self.offset - other.offset).abs() + d.shifted(-d.offset).sup_bound())
    }

    /// `(V + W)/2` when both share a dictionary.
    pub fn midpoint(&self, other: &Self) -> Option<Self> {
        if !self.same_dictionary(other) {
            return None;
        }
        let mid: Vec<f64> = self
            .coordinates()
            .iter()
            .zip(other.coordinates())
            .map(|(x, y)| 0.5 * (x + y))
            .collect();
        let mut out = self.with_coordinates(&mid);
        out.offset = 0.5 * (self.offset + other.offset);
        Some(out)
    }
}
