//! Bracket closure `A₁ ⊂ A₂ ⊂ …` of the noise directions under the
//! symmetrized nonlinearity `B̃(u, w) = −B(Ku, w) − B(Kw, u)`, computed at
//! finite truncation.
//!
//! Spans are tracked by an orthonormal basis in real coordinates. A level
//! brackets only the vectors added by the previous level against the whole
//! basis; brackets among older vectors are already in the span.

use std::collections::BTreeSet;
use std::sync::Arc;

use crate::error::{invalid, Result};
use crate::spectral::{SpectralField, SpectralWorkspace, TorusSpec, Wavenumber};

pub const DEFAULT_RANK_TOL: f64 = 1e-8;

/// One row of the closure report.
#[derive(Clone, Debug, PartialEq)]
pub struct LevelSummary {
    pub level: usize,
    pub dimension: usize,
    /// Wavenumbers first reached at this level.
    pub new_modes_added: usize,
}

#[derive(Clone, Debug)]
pub struct BracketClosure {
    pub levels: Vec<LevelSummary>,
    /// Orthonormal basis; the span of level `ℓ` is the prefix of length
    /// `levels[ℓ-1].dimension`.
    pub basis: Vec<SpectralField>,
    /// Dimension of the truncated state space.
    pub target_dimension: usize,
    pub saturated: bool,
    pub stalled: bool,
}

impl BracketClosure {
    pub fn final_dimension(&self) -> usize {
        self.levels.last().map_or(0, |l| l.dimension)
    }

    pub fn basis_at(&self, level: usize) -> &[SpectralField] {
        let d = self
            .levels
            .get(level.saturating_sub(1))
            .map_or(0, |l| l.dimension);
        &self.basis[..d]
    }

    pub fn dimensions(&self) -> Vec<usize> {
        self.levels.iter().map(|l| l.dimension).collect()
    }
}

struct Span {
    vecs: Vec<Vec<f64>>,
    tol: f64,
}

impl Span {
    /// Adds `v` (unit norm expected) if it leaves the span by more than the
    /// tolerance; returns the new orthonormal vector.
    fn try_add(&mut self, v: &[f64]) -> Option<Vec<f64>> {
        let mut r = v.to_vec();
        for _ in 0..2 {
            for b in &self.vecs {
                let c: f64 = r.iter().zip(b).map(|(x, y)| x * y).sum();
                for (x, y) in r.iter_mut().zip(b) {
                    *x -= c * y;
                }
            }
        }
        let n = r.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n <= self.tol {
            return None;
        }
        r.iter_mut().for_each(|x| *x /= n);
        self.vecs.push(r.clone());
        Some(r)
    }
}

fn support(w: &SpectralField) -> BTreeSet<(i32, i32)> {
    w.support(1e-10).into_iter().map(|k| (k.k1, k.k2)).collect()
}

/// Bracket closure of `noise` for `max_levels` levels. Candidates whose norm
/// (for unit-norm inputs) or whose residual after projection falls below
/// `rank_tol` are treated as already spanned.
pub fn bracket_closure(
    noise: &[SpectralField],
    spec: &Arc<TorusSpec>,
    max_levels: usize,
    rank_tol: f64,
) -> Result<BracketClosure> {
    if max_levels == 0 {
        return Err(invalid("max_levels", "must be at least 1"));
    }
    if !(rank_tol > 0.0 && rank_tol < 1.0) {
        return Err(invalid("rank_tol", "must lie in (0, 1)"));
    }
    let target = spec.real_dimension();
    let mut span = Span {
        vecs: Vec::new(),
        tol: rank_tol,
    };
    let mut basis: Vec<SpectralField> = Vec::new();
    let mut reached: BTreeSet<(i32, i32)> = BTreeSet::new();
    let mut levels = Vec::with_capacity(max_levels);

    let add = |cand: &SpectralField, span: &mut Span, basis: &mut Vec<SpectralField>| -> Result<bool> {
        let coords = cand.to_real_coords();
        let n = coords.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n <= rank_tol {
            return Ok(false);
        }
        let unit: Vec<f64> = coords.iter().map(|x| x / n).collect();
        match span.try_add(&unit) {
            Some(v) => {
                basis.push(SpectralField::from_real_coords(spec, &v)?);
                Ok(true)
            }
            None => Ok(false),
        }
    };

    for g in noise {
        if g.spec().truncation() != spec.truncation() || g.spec().grid_size() != spec.grid_size() {
            return Err(crate::Error::TruncationMismatch);
        }
        let n = g.norm();
        if n > 0.0 {
            add(&g.scaled(1.0 / n), &mut span, &mut basis)?;
        }
    }
    let mut new_start = 0;
    let record = |level: usize, basis: &[SpectralField], from: usize, reached: &mut BTreeSet<(i32, i32)>| {
        let before = reached.len();
        for b in &basis[from..] {
            reached.extend(support(b));
        }
        LevelSummary {
            level,
            dimension: basis.len(),
            new_modes_added: reached.len() - before,
        }
    };
    levels.push(record(1, &basis, 0, &mut reached));

    let mut ws = SpectralWorkspace::new(spec);
    for level in 2..=max_levels {
        let old_len = basis.len();
        if old_len < target {
            for i in new_start..old_len {
                for j in 0..old_len {
                    // unordered pairs among the new vectors are visited once
                    if j >= new_start && j < i {
                        continue;
                    }
                    let c = ws.symmetrized_bracket(&basis[i], &basis[j]);
                    add(&c, &mut span, &mut basis)?;
                    if basis.len() == target {
                        break;
                    }
                }
                if basis.len() == target {
                    break;
                }
            }
        }
        levels.push(record(level, &basis, old_len, &mut reached));
        new_start = old_len;
    }
    let saturated = basis.len() == target;
    let stalled = !saturated
        && levels.len() >= 2
        && levels[levels.len() - 1].dimension == levels[levels.len() - 2].dimension;
    Ok(BracketClosure {
        levels,
        basis,
        target_dimension: target,
        saturated,
        stalled,
    })
}

/// Wavenumbers `{k ± l}` (nonzero, within truncation) over pairs drawn from
/// `modes`, the support reachable by one bracket.
pub fn bracket_support(modes: &[Wavenumber], truncation: u32) -> BTreeSet<(i32, i32)> {
    let mut all: Vec<Wavenumber> = modes.to_vec();
    all.extend(modes.iter().map(|k| -*k));
    let mut out = BTreeSet::new();
    for a in &all {
        for b in &all {
            let s = Wavenumber::new(a.k1 + b.k1, a.k2 + b.k2);
            if (s.k1 != 0 || s.k2 != 0) && s.sup_norm() <= truncation {
                let s = if s.is_upper() { s } else { -s };
                out.insert((s.k1, s.k2));
            }
        }
    }
    out
}
