use lvx::kernels::{classify, lp_norm, lp_norm_quadrature, truncated_lp_norm, weighted_lp_norm, Exponent, Kernel};
use lvx::quadrature::{integrate_half_line, QuadConfig};
use lvx::special::unit_sphere_area;
use proptest::prelude::*;

// Nested quadrature with no Γ-function anywhere: radial integral of g^p at
// fixed t after the scaling r = √t·s, then the time integral on the half-line.
fn nested_oracle(a: f64, d: usize, p: f64) -> f64 {
    let cfg = QuadConfig { abs_tol: 1e-15, rel_tol: 1e-12, max_intervals: 4000 };
    let df = d as f64;
    let radial = integrate_half_line(|s| s.powf(df - 1.0) * (-p * s * s / 4.0).exp(), cfg).value * unit_sphere_area(d);
    integrate_half_line(
        |t| {
            let peak = (4.0 * std::f64::consts::PI * t).powf(-df / 2.0) * (-a * t).exp();
            peak.powf(p) * t.powf(df / 2.0) * radial
        },
        cfg,
    )
    .value
}

#[test]
fn closed_form_matches_nested_quadrature() {
    for &(a, d, p) in &[(0.5, 1, 2.0), (2.0, 1, 0.3), (1.0, 2, 1.5), (3.0, 3, 1.2), (0.2, 2, 0.7), (1.0, 3, 0.5)] {
        let closed = lp_norm(&Kernel::heat(a, d).unwrap(), p, f64::INFINITY).unwrap().value;
        let oracle = nested_oracle(a, d, p);
        assert!((closed / oracle - 1.0).abs() < 1e-7, "a={a} d={d} p={p}: {closed} vs {oracle}");
    }
}

#[test]
fn truncated_classification_reproduces_the_global_rule() {
    // a = 0: global truncated integrability iff p < 1+2/d and q > 1+2/d
    for d in 1..=4usize {
        let crit = 1.0 + 2.0 / d as f64;
        let k = Kernel::heat(0.0, d).unwrap();
        for i in 1..=20 {
            for j in 1..=20 {
                let (p, q) = (0.1 * i as f64, 0.1 * j as f64 + 0.05);
                let got = classify(&k, Exponent::Truncated { large: p, small: q }, 0.0, f64::INFINITY).unwrap();
                assert_eq!(got, p < crit && q > crit, "d={d} p={p} q={q}");
                let local = classify(&k, Exponent::Power(p), 0.0, 5.0).unwrap();
                assert_eq!(local, p < crit);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn closed_form_matches_quadrature(a in 0.1f64..5.0, d in 1usize..=3, frac in 0.02f64..0.98) {
        let p = frac * (1.0 + 2.0 / d as f64);
        let k = Kernel::heat(a, d).unwrap();
        let c = lp_norm(&k, p, f64::INFINITY).unwrap().value;
        let q = lp_norm_quadrature(&k, p, f64::INFINITY).unwrap().value;
        prop_assert!((c / q - 1.0).abs() < 1e-6, "{c} vs {q}");
    }

    #[test]
    fn mass_identity(a in 0.05f64..10.0, d in 1usize..=5) {
        let v = lp_norm(&Kernel::heat(a, d).unwrap(), 1.0, f64::INFINITY).unwrap().value;
        prop_assert!((v * a - 1.0).abs() < 1e-12);
    }

    #[test]
    fn monotone_in_damping_and_horizon(a in 0.1f64..4.0, da in 0.0f64..2.0, d in 1usize..=3, frac in 0.05f64..0.95, h in 0.1f64..5.0, dh in 0.0f64..5.0) {
        let p = frac * (1.0 + 2.0 / d as f64);
        let k = Kernel::heat(a, d).unwrap();
        let k2 = Kernel::heat(a + da, d).unwrap();
        prop_assert!(lp_norm(&k2, p, h).unwrap().value <= lp_norm(&k, p, h).unwrap().value * (1.0 + 1e-12));
        prop_assert!(lp_norm(&k, p, h + dh).unwrap().value >= lp_norm(&k, p, h).unwrap().value * (1.0 - 1e-12));
    }

    #[test]
    fn infinite_horizon_finite_iff(a in -2.0f64..3.0, d in 1usize..=4, p in 0.05f64..2.5) {
        let k = Kernel::heat(a, d).unwrap();
        let v = lp_norm(&k, p, f64::INFINITY).unwrap();
        prop_assert_eq!(v.is_finite(), p < 1.0 + 2.0 / d as f64 && a > 0.0);
    }

    #[test]
    fn weight_shifts_the_damping(a in 0.2f64..3.0, eta in -0.1f64..2.0, d in 1usize..=3, frac in 0.1f64..0.9) {
        let p = frac * (1.0 + 2.0 / d as f64);
        let shifted = a + eta / p;
        prop_assume!(shifted > 0.0);
        let w = weighted_lp_norm(&Kernel::heat(a, d).unwrap(), p, eta).unwrap().value;
        let s = lp_norm(&Kernel::heat(shifted, d).unwrap(), p, f64::INFINITY).unwrap().value;
        prop_assert!((w / s - 1.0).abs() < 1e-12);
    }

    #[test]
    fn truncated_norm_below_sum_of_plain_norms(a in 0.3f64..3.0, d in 1usize..=3, f1 in 0.1f64..0.9, f2 in 0.1f64..0.9) {
        let crit = 1.0 + 2.0 / d as f64;
        let (p, q) = (f1 * crit, f2 * crit);
        let k = Kernel::heat(a, d).unwrap();
        let t = truncated_lp_norm(&k, p, q, 2.0).unwrap().value;
        let hi = lp_norm(&k, p, 2.0).unwrap().value + lp_norm(&k, q, 2.0).unwrap().value;
        prop_assert!(t <= hi * (1.0 + 1e-8));
        prop_assert!(t >= 0.0);
    }
}
