//! Bracket-closure regressions and invariances.

use fkns_core::hormander::{bracket_closure, bracket_support, DEFAULT_RANK_TOL};
use fkns_core::spectral::symmetrized_bracket;
use fkns_core::{SpectralField, TorusSpec, Wavenumber};
use num_complex::Complex64;

fn two_mode_noise(spec: &std::sync::Arc<TorusSpec>) -> Vec<SpectralField> {
    vec![
        SpectralField::cos_mode(spec, Wavenumber::new(1, 0), 1.0).unwrap(),
        SpectralField::cos_mode(spec, Wavenumber::new(1, 1), 1.0).unwrap(),
    ]
}

/// Projection of `w` onto the orthogonal complement of an orthonormal basis.
fn residual(w: &SpectralField, basis: &[SpectralField]) -> f64 {
    let mut r = w.clone();
    for b in basis {
        r = &r - &b.scaled(r.inner(b));
    }
    r.norm()
}

fn same_span(a: &[SpectralField], b: &[SpectralField]) -> bool {
    a.len() == b.len()
        && a.iter().all(|v| residual(v, b) < 1e-8)
        && b.iter().all(|v| residual(v, a) < 1e-8)
}

#[test]
fn two_mode_closure_at_k4_grows_then_stalls() {
    let s = TorusSpec::new(4, 16).unwrap();
    let c = bracket_closure(&two_mode_noise(&s), &s, 5, DEFAULT_RANK_TOL).unwrap();
    assert_eq!(c.dimensions(), vec![2, 3, 6, 18, 35]);
    assert!(c.dimensions().windows(2).all(|p| p[1] > p[0]));

    // Cosine noise keeps the closure inside the even (cosine) subspace, half of
    // the 80 real coordinates.
    let long = bracket_closure(&two_mode_noise(&s), &s, 12, DEFAULT_RANK_TOL).unwrap();
    assert_eq!(long.final_dimension(), 40);
    assert!(long.stalled && !long.saturated);
    assert_eq!(long.target_dimension, 80);
    for b in &long.basis {
        for k in s.modes() {
            assert!(b.coeff(*k).im.abs() < 1e-10);
        }
    }
}

#[test]
fn adding_sine_directions_saturates() {
    let s = TorusSpec::new(3, 16).unwrap();
    let mut noise = two_mode_noise(&s);
    noise.push(SpectralField::sin_mode(&s, Wavenumber::new(1, 0), 1.0).unwrap());
    noise.push(SpectralField::sin_mode(&s, Wavenumber::new(1, 1), 1.0).unwrap());
    let c = bracket_closure(&noise, &s, 12, DEFAULT_RANK_TOL).unwrap();
    assert!(c.saturated, "{:?}", c.dimensions());
    assert_eq!(c.final_dimension(), s.real_dimension());
}

#[test]
fn spans_ignore_order_and_scaling() {
    let s = TorusSpec::new(4, 16).unwrap();
    let a = two_mode_noise(&s);
    let b = vec![a[1].scaled(-3.5), a[0].scaled(0.25)];
    let ca = bracket_closure(&a, &s, 4, DEFAULT_RANK_TOL).unwrap();
    let cb = bracket_closure(&b, &s, 4, DEFAULT_RANK_TOL).unwrap();
    assert_eq!(ca.dimensions(), cb.dimensions());
    for level in 1..=4 {
        assert!(same_span(ca.basis_at(level), cb.basis_at(level)), "level {level}");
    }
}

#[test]
fn second_level_support_comes_from_sums_and_differences() {
    let s = TorusSpec::new(4, 16).unwrap();
    let modes = [Wavenumber::new(1, 0), Wavenumber::new(1, 1)];
    let allowed = bracket_support(&modes, 4);
    let c = bracket_closure(&two_mode_noise(&s), &s, 2, DEFAULT_RANK_TOL).unwrap();
    let mut touched: Vec<(i32, i32)> = Vec::new();
    for b in c.basis_at(2) {
        touched.extend(b.support(1e-10).into_iter().map(|k| (k.k1, k.k2)));
    }
    let inputs: Vec<(i32, i32)> = modes.iter().map(|k| (k.k1, k.k2)).collect();
    assert!(touched.iter().all(|k| allowed.contains(k) || inputs.contains(k)));
    assert!(touched.contains(&(2, 1)) && touched.contains(&(0, 1)));
}

#[test]
fn level_two_bracket_matches_hand_convolution() {
    // B̃^(k) = Σ_{p+q=k} (p^⊥·q)(|p|⁻² − |q|⁻²) û(p) ŵ(q) with û = ŵ = ½ on
    // the two inputs. At (2,1): p = (1,0), q = (1,1), p^⊥·q = −1, so
    // (−1)(1 − ½)¼ = −⅛. At (0,1): p = (−1,0), q = (1,1), p^⊥·q = 1, so +⅛.
    let s = TorusSpec::new(4, 16).unwrap();
    let g = two_mode_noise(&s);
    let br = symmetrized_bracket(&g[0], &g[1]);
    let c21 = br.coeff(Wavenumber::new(2, 1));
    let c01 = br.coeff(Wavenumber::new(0, 1));
    assert!((c21 - Complex64::new(-0.125, 0.0)).norm() < 1e-12, "{c21}");
    assert!((c01 - Complex64::new(0.125, 0.0)).norm() < 1e-12, "{c01}");
    let mut supp = br.support(1e-12);
    supp.sort_by_key(|k| (k.k1, k.k2));
    assert_eq!(supp, vec![Wavenumber::new(0, 1), Wavenumber::new(2, 1)]);
}
