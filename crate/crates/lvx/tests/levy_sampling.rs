use lvx::levy_basis::{jump_moment, sample_cell, Cell, JumpMeasure, LevyCharacteristics};
use lvx::quadrature::{integrate, QuadConfig};
use lvx::rng::stream;
use proptest::prelude::*;

// Lévy–Khintchine exponent ψ(u) = ∫(e^{iuz} − 1 − iuz1{|z|≤1}) ν(dz) for the
// two-sided power density, evaluated by direct quadrature.
fn stable_exponent(alpha: f64, scale: f64, skew: f64, u: f64) -> (f64, f64) {
    let cp = scale * (1.0 + skew) / 2.0;
    let cm = scale * (1.0 - skew) / 2.0;
    let cfg = QuadConfig { abs_tol: 1e-13, rel_tol: 1e-12, max_intervals: 2000 };
    let period = std::f64::consts::PI / u;
    let upper = 4000.0;
    let mut re = 0.0;
    let mut im = 0.0;
    let mut a = 0.0;
    while a < upper {
        let b = (a + period).min(upper);
        re += integrate(|z| ((u * z).cos() - 1.0) * z.powf(-1.0 - alpha), a, b, cfg).value;
        im += integrate(
            |z| ((u * z).sin() - if z <= 1.0 { u * z } else { 0.0 }) * z.powf(-1.0 - alpha),
            a,
            b,
            cfg,
        )
        .value;
        a = b;
    }
    // Non-oscillating part of the tail beyond `upper`.
    re -= upper.powf(-alpha) / alpha;
    ((cp + cm) * re, (cp - cm) * im)
}

fn check_characteristic_function(alpha: f64, skew: f64, seed: u64) {
    let scale = 0.8;
    let vol = 0.5;
    let chars = LevyCharacteristics::new(0.0, 0.0, JumpMeasure::alpha_stable(alpha, scale, skew).unwrap()).unwrap();
    let cell = Cell::new(vec![0.0, 0.0], vec![0.5, 1.0]);
    let n = 200_000u64;
    for &u in &[0.5, 1.3] {
        let (mut c, mut s) = (0.0, 0.0);
        for i in 0..n {
            let x = sample_cell(&chars, &cell, &mut stream(seed, 0, i)).unwrap().value;
            c += (u * x).cos();
            s += (u * x).sin();
        }
        let (c, s) = (c / n as f64, s / n as f64);
        let (re, im) = stable_exponent(alpha, scale, skew, u);
        let modulus = (vol * re).exp();
        let (ec, es) = (modulus * (vol * im).cos(), modulus * (vol * im).sin());
        let se = (0.5 / n as f64).sqrt();
        assert!((c - ec).abs() < 5.0 * se, "α={alpha} u={u}: E cos {c} vs {ec}");
        assert!((s - es).abs() < 5.0 * se, "α={alpha} u={u}: E sin {s} vs {es}");
    }
}

#[test]
fn stable_small_index_matches_levy_khintchine() {
    check_characteristic_function(0.7, 0.5, 11);
}

#[test]
fn stable_large_index_matches_levy_khintchine() {
    check_characteristic_function(1.5, -0.4, 12);
}

#[test]
fn cauchy_matches_levy_khintchine() {
    check_characteristic_function(1.0, 0.0, 13);
}

#[test]
fn exponential_tails_moment_matches_quadrature() {
    let j = JumpMeasure::exponential_tails(1.0, 2.0, true).unwrap();
    let q = integrate(|z| 2.0 * z * (-z).exp(), 0.0, 60.0, QuadConfig::default()).value;
    assert!((jump_moment(&j, 1.0, 1.0) - q).abs() < 1e-10);
    // mixed exponents: ∫₀¹ z^{0.5}·2e^{−z} + ∫₁^∞ z^{1.5}·2e^{−z}
    let q = integrate(|z| 2.0 * z.sqrt() * (-z).exp(), 0.0, 1.0, QuadConfig::default()).value
        + integrate(|z| 2.0 * z.powf(1.5) * (-z).exp(), 1.0, 80.0, QuadConfig::default()).value;
    assert!((jump_moment(&j, 1.5, 0.5) - q).abs() < 1e-9);
}

#[test]
fn stable_moment_finiteness_against_tail_quadrature() {
    // Finite iff p < α; compare the finite values with quadrature on the
    // density and watch the divergent ones grow with the cutoff.
    let alpha = 1.3;
    let j = JumpMeasure::alpha_stable(alpha, 1.0, 0.0).unwrap();
    let big = |p: f64, m: f64| integrate(|z| z.powf(p - 1.0 - alpha), 1.0, m, QuadConfig::default()).value;
    let small = |p: f64, m: f64| integrate(|z| z.powf(p - 1.0 - alpha), m, 1.0, QuadConfig::default()).value;
    for &p in &[0.5, 1.0, 1.29, 1.31, 1.8] {
        let v = jump_moment(&j, p, p);
        assert!(v.is_infinite(), "p={p}: small jumps always diverge for r=s");
        // large-jump half alone
        let large = j.abs_power_between(p, 1.0, f64::INFINITY);
        if p <= 1.0 {
            assert!((large - big(p, 1e12)).abs() / large < 1e-2);
        } else if p < alpha {
            assert!(large.is_finite());
        } else {
            assert!(large.is_infinite());
            assert!(big(p, 1e6) > big(p, 1e3));
        }
        let sm = j.abs_power_between(p, 0.0, 1.0);
        if p >= 1.8 {
            assert!((sm - small(p, 1e-12)).abs() / sm < 1e-2);
        } else if p > alpha {
            assert!(sm.is_finite());
        } else {
            assert!(sm.is_infinite());
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn moment_homogeneous_in_intensity(z1 in 0.05f64..3.0, z2 in -3.0f64..-0.05, r1 in 0.0f64..2.0, r2 in 0.0f64..2.0, k in 0.0f64..5.0, r in 0.0f64..2.0, s in 0.5f64..2.0) {
        let a = JumpMeasure::point_masses(&[(z1, r1), (z2, r2)]).unwrap();
        let b = JumpMeasure::point_masses(&[(z1, k * r1), (z2, k * r2)]).unwrap();
        let (ma, mb) = (jump_moment(&a, r, s), jump_moment(&b, r, s));
        prop_assert!((mb - k * ma).abs() <= 1e-12 * (1.0 + mb.abs()));
        let c = JumpMeasure::point_masses(&[(z1, r1 + 0.5), (z2, r2)]).unwrap();
        prop_assert!(jump_moment(&c, r, s) >= ma);
    }

    #[test]
    fn symmetric_drifts_vanish(z in 0.05f64..4.0, w in 0.0f64..3.0, rate in 0.2f64..5.0, lam in 0.0f64..3.0) {
        let j = JumpMeasure::point_masses(&[(z, w), (-z, w)]).unwrap();
        let c = LevyCharacteristics::new(0.0, 1.0, j).unwrap();
        let d = lvx::levy_basis::effective_drifts(&c);
        prop_assert_eq!(d.b0, Some(0.0));
        prop_assert_eq!(d.b1, Some(0.0));
        let e = LevyCharacteristics::new(0.0, 0.0, JumpMeasure::exponential_tails(rate, lam, true).unwrap()).unwrap();
        let d = lvx::levy_basis::effective_drifts(&e);
        prop_assert_eq!(d.b0, Some(0.0));
        prop_assert_eq!(d.b1, Some(0.0));
    }

    #[test]
    fn stable_moment_finite_iff_below_index(alpha in 0.1f64..1.95, p in 0.01f64..2.0) {
        let j = JumpMeasure::alpha_stable(alpha, 1.0, 0.0).unwrap();
        // r = s = p always diverges; the large-jump half decides p < α.
        prop_assert!(jump_moment(&j, p, p).is_infinite());
        prop_assert_eq!(j.abs_power_between(p, 1.0, f64::INFINITY).is_finite(), p < alpha);
    }
}

#[test]
fn splitting_a_cell_preserves_first_two_moments() {
    let chars = LevyCharacteristics::new(
        0.3,
        0.5,
        JumpMeasure::exponential_tails(2.0, 1.5, false).unwrap(),
    )
    .unwrap();
    let whole = Cell::new(vec![0.0, 0.0], vec![1.0, 1.0]);
    let left = Cell::new(vec![0.0, 0.0], vec![0.5, 1.0]);
    let right = Cell::new(vec![0.5, 0.0], vec![1.0, 1.0]);
    let n = 100_000u64;
    let (mut a1, mut a2, mut b1, mut b2) = (0.0, 0.0, 0.0, 0.0);
    for i in 0..n {
        let x = sample_cell(&chars, &whole, &mut stream(21, 0, i)).unwrap().value;
        let y = sample_cell(&chars, &left, &mut stream(21, 1, i)).unwrap().value
            + sample_cell(&chars, &right, &mut stream(21, 2, i)).unwrap().value;
        a1 += x;
        a2 += x * x;
        b1 += y;
        b2 += y * y;
    }
    let nf = n as f64;
    let (ma, mb) = (a1 / nf, b1 / nf);
    let (va, vb) = (a2 / nf - ma * ma, b2 / nf - mb * mb);
    // exact: mean = b + ∫_{|z|>1} z π₀ = 0.3 + 1.5 e^{-2}(1 + 1/2); var = c + ∫z²π₀ = 0.5 + 1.5·2/4
    let exact_var = 0.5 + 1.5 * 2.0 / 4.0;
    let se = (exact_var / nf).sqrt();
    assert!((ma - mb).abs() < 4.0 * se * 2f64.sqrt(), "{ma} vs {mb}");
    assert!((va - vb).abs() < 0.05 * exact_var, "{va} vs {vb}");
    assert!((va - exact_var).abs() < 0.03 * exact_var);
}
