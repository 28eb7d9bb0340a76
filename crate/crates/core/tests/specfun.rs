use coalescence::specfun::*;
use proptest::prelude::*;
use std::f64::consts::PI;

proptest! {
    #[test]
    fn bessel_k_is_positive_and_decreasing(beta in 0.05f64..4.0, q in 1e-3f64..40.0, r in 1.01f64..2.0) {
        let order = RealOrder::new(beta).unwrap();
        let a = bessel_k(order, q).unwrap();
        let b = bessel_k(order, q * r).unwrap();
        prop_assert!(a > 0.0 && b > 0.0 && b < a);
    }

    #[test]
    fn gamma_reflection(x in -3.0f64..3.0) {
        prop_assume!((x - x.round()).abs() > 1e-3);
        let v = gamma(x).unwrap() * gamma(1.0 - x).unwrap() * (PI * x).sin() / PI;
        prop_assert!((v - 1.0).abs() < 1e-8, "{v}");
    }

    #[test]
    fn bessel_k_recurrence(beta in 1.1f64..3.0, q in 0.01f64..20.0) {
        // K_{β+1} = K_{β-1} + (2β/q) K_β
        let k = |b: f64| bessel_k(RealOrder::new(b).unwrap(), q).unwrap();
        let lhs = k(beta + 1.0);
        let rhs = k(beta - 1.0) + 2.0 * beta / q * k(beta);
        prop_assert!((lhs / rhs - 1.0).abs() < 1e-10);
    }
}

#[test]
fn half_order_is_elementary() {
    // K_{1/2}(q) = √(π/(2q)) e^{-q}
    let order = RealOrder::new(0.5).unwrap();
    for q in [1e-3, 0.1, 1.0, 10.0, 50.0] {
        let exact = (PI / (2.0 * q)).sqrt() * (-q).exp();
        assert!((bessel_k(order, q).unwrap() / exact - 1.0).abs() < 1e-10);
    }
}

#[test]
fn j1_series_agreement() {
    // power series Σ (-1)^k (x/2)^{2k+1} / (k!(k+1)!)
    for x in [0.5, 2.0, 5.0, 9.0] {
        let mut term = x / 2.0;
        let mut sum = term;
        for k in 1..60 {
            term *= -(x * x / 4.0) / (k as f64 * (k + 1) as f64);
            sum += term;
        }
        assert!((bessel_j1(x) - sum).abs() < 1e-10, "x = {x}");
    }
}

#[test]
fn zeta_against_partial_sums() {
    // Σ_{k ≤ N} k^{-3} + N^{-2}/2 - N^{-3}/2 (Euler–Maclaurin remainder)
    let n = 1000;
    let s: f64 = (1..=n).map(|k| (k as f64).powi(-3)).sum();
    let nf = n as f64;
    let estimate = s + 0.5 / (nf * nf) - 0.5 / nf.powi(3);
    assert!((zeta(3.0).unwrap() - estimate).abs() < 1e-11);
}

#[test]
fn polylog_three() {
    // Li_3(1/2) = 7ζ(3)/8 - π² ln2 / 12 + ln³2 / 6
    let l = std::f64::consts::LN_2;
    let exact = 7.0 * zeta(3.0).unwrap() / 8.0 - PI * PI * l / 12.0 + l.powi(3) / 6.0;
    assert!((polylog_half(3.0) - exact).abs() < 1e-13);
}
