//! Algebraic properties of the spectral operators and a direct-convolution
//! oracle for the advection term.

use std::sync::Arc;

use fkns_core::spectral::{biot_savart, nonlinear_term, symmetrized_bracket};
use fkns_core::{SpectralField, TorusSpec, Wavenumber};
use num_complex::Complex64;
use proptest::prelude::*;

fn spec() -> Arc<TorusSpec> {
    TorusSpec::new(4, 16).unwrap()
}

fn field_from(coords: &[f64]) -> SpectralField {
    let s = spec();
    // Give higher modes smaller amplitudes, as in a smooth field.
    let w = SpectralField::from_real_coords(&s, coords).unwrap();
    w.map_real_multiplier(|k| 1.0 / (1.0 + k.norm_sq()))
}

fn arb_field() -> impl Strategy<Value = SpectralField> {
    prop::collection::vec(-2.0f64..2.0, spec().real_dimension()).prop_map(|c| field_from(&c))
}

/// `(Ku·∇w)^(k) = −Σ_{p+q=k} (p^⊥·q)/|p|² û(p) ŵ(q)`, summed over the full
/// truncated spectrum and kept for `|k|∞ ≤ K`.
fn advection_by_convolution(u: &SpectralField, w: &SpectralField) -> SpectralField {
    let s = u.spec().clone();
    let kmax = s.truncation() as i32;
    let full: Vec<Wavenumber> = (-kmax..=kmax)
        .flat_map(|a| (-kmax..=kmax).map(move |b| Wavenumber::new(a, b)))
        .filter(|k| k.k1 != 0 || k.k2 != 0)
        .collect();
    let entries: Vec<(Wavenumber, Complex64)> = s
        .modes()
        .iter()
        .map(|&k| {
            let mut acc = Complex64::default();
            for &p in &full {
                let q = Wavenumber::new(k.k1 - p.k1, k.k2 - p.k2);
                if (q.k1 == 0 && q.k2 == 0) || q.sup_norm() > s.truncation() {
                    continue;
                }
                let cross = f64::from(p.k2 * q.k1 - p.k1 * q.k2);
                acc -= u.coeff(p) * w.coeff(q) * (cross / p.norm_sq());
            }
            (k, acc)
        })
        .collect();
    SpectralField::from_modes(&s, &entries).unwrap()
}

#[test]
fn advection_matches_convolution_on_different_shells() {
    let s = spec();
    let u = &SpectralField::cos_mode(&s, Wavenumber::new(1, 0), 1.0).unwrap()
        + &SpectralField::cos_mode(&s, Wavenumber::new(0, 2), 1.0).unwrap();
    let b = nonlinear_term(&u);
    let oracle = advection_by_convolution(&u, &u);
    assert!((&b - &oracle).norm() < 1e-12);
    // cos x₁ + cos 2x₂ advects onto (1, ±2); (1, −2) is stored as (−1, 2).
    let mut supp = b.support(1e-12);
    supp.sort_by_key(|k| (k.k1, k.k2));
    assert_eq!(supp, vec![Wavenumber::new(-1, 2), Wavenumber::new(1, 2)]);
    // Hand value: B̂(1,2) = −(p^⊥·q)/|p|² terms from p = (1,0), q = (0,2) and
    // p = (0,2), q = (1,0): −(−2)/1·¼ − (2)/4·¼ = 3/8.
    assert!((b.coeff(Wavenumber::new(1, 2)) - Complex64::new(0.375, 0.0)).norm() < 1e-12);
}

#[test]
fn same_shell_pairs_do_not_interact() {
    let s = spec();
    let a = SpectralField::cos_mode(&s, Wavenumber::new(1, 0), 1.0).unwrap();
    let b = SpectralField::cos_mode(&s, Wavenumber::new(0, 1), 1.0).unwrap();
    assert!(nonlinear_term(&(&a + &b)).norm() < 1e-14);
    assert!(symmetrized_bracket(&a, &b).norm() < 1e-14);
    assert!(symmetrized_bracket(&a, &a).norm() < 1e-14);
}

#[test]
fn bracket_of_different_shells_matches_convolution() {
    let s = spec();
    let a = SpectralField::cos_mode(&s, Wavenumber::new(1, 0), 1.0).unwrap();
    let b = SpectralField::cos_mode(&s, Wavenumber::new(1, 1), 1.0).unwrap();
    let br = symmetrized_bracket(&a, &b);
    let oracle = -&(&advection_by_convolution(&a, &b) + &advection_by_convolution(&b, &a));
    assert!((&br - &oracle).norm() < 1e-12);
    assert!(br.norm() > 0.1);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn advection_conserves_energy(w in arb_field()) {
        let b = nonlinear_term(&w);
        prop_assert!(b.inner(&w).abs() <= 1e-10 * (1.0 + b.norm() * w.norm()));
    }

    #[test]
    fn advection_matches_convolution(u in arb_field(), w in arb_field()) {
        let mut ws = fkns_core::spectral::SpectralWorkspace::new(&spec());
        let mut out = SpectralField::zeros(&spec());
        ws.advection_into(&u, &w, &mut out);
        let oracle = advection_by_convolution(&u, &w);
        prop_assert!((&out - &oracle).norm() <= 1e-12 * (1.0 + oracle.norm()));
    }

    #[test]
    fn bracket_is_symmetric_and_bilinear(u in arb_field(), v in arb_field(), w in arb_field(), a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let lhs = symmetrized_bracket(&(&(&u * a) + &(&v * b)), &w);
        let rhs = &(&symmetrized_bracket(&u, &w) * a) + &(&symmetrized_bracket(&v, &w) * b);
        prop_assert!((&lhs - &rhs).norm() <= 1e-10 * (1.0 + rhs.norm()));
        let sym = &symmetrized_bracket(&u, &w) - &symmetrized_bracket(&w, &u);
        prop_assert!(sym.norm() <= 1e-12 * (1.0 + u.norm() * w.norm()));
        let diag = &symmetrized_bracket(&w, &w) + &(&nonlinear_term(&w) * 2.0);
        prop_assert!(diag.norm() <= 1e-12 * (1.0 + w.norm() * w.norm()));
    }

    #[test]
    fn velocity_is_divergence_free_and_inverts_curl(w in arb_field()) {
        let u = biot_savart(&w);
        prop_assert!(u.divergence().norm() <= 1e-15 * (1.0 + w.norm()));
        prop_assert!((&u.curl() - &w).norm() <= 1e-14 * (1.0 + w.norm()));
        prop_assert!((u.norm() - w.sobolev_norm(-1.0)).abs() <= 1e-14 * (1.0 + w.norm()));
    }

    #[test]
    fn grid_round_trip_preserves_norm(w in arb_field()) {
        let mut ws = fkns_core::spectral::SpectralWorkspace::new(&spec());
        let g = ws.to_grid(&w);
        let n = 16.0f64;
        // Fourier-ℓ² norm equals the grid mean of w².
        let grid_norm_sq = g.iter().map(|x| x * x).sum::<f64>() / (n * n);
        prop_assert!((grid_norm_sq - w.norm_sq()).abs() <= 1e-10 * (1.0 + w.norm_sq()));
        let back = ws.from_grid(&g).unwrap();
        prop_assert!((&back - &w).norm() <= 1e-12 * (1.0 + w.norm()));
    }
}
