mod common;

use closedmtp::{mvn_rectangle, std_normal_cdf, std_normal_quantile, union_exceedance, CorrelationMatrix};
use common::random_corr;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;

const TARGET: f64 = 1e-6;

fn pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

/// `pr(Z_i < b_i for all i)` when `Z_i = λ_i X + sqrt(1 - λ_i²) ε_i`, by
/// composite Simpson over the common factor.
fn one_factor_cdf(lambda: &[f64], b: &[f64]) -> f64 {
    let n = 6000;
    let (lo, hi) = (-10.0, 10.0);
    let h = (hi - lo) / n as f64;
    let f = |x: f64| {
        pdf(x)
            * lambda.iter().zip(b).map(|(l, bi)| std_normal_cdf((bi - l * x) / (1.0 - l * l).sqrt())).product::<f64>()
    };
    let mut acc = f(lo) + f(hi);
    for k in 1..n {
        let x = lo + k as f64 * h;
        acc += if k % 2 == 1 { 4.0 } else { 2.0 } * f(x);
    }
    acc * h / 3.0
}

fn one_factor_matrix(lambda: &[f64]) -> CorrelationMatrix {
    let d = lambda.len();
    let mut e = vec![1.0; d * d];
    for i in 0..d {
        for j in 0..d {
            if i != j {
                e[i * d + j] = lambda[i] * lambda[j];
            }
        }
    }
    CorrelationMatrix::new(d, e).unwrap()
}

#[test]
fn one_factor_rectangles_match_quadrature() {
    let cases: [(&[f64], &[f64]); 4] = [
        (&[0.7, 0.7], &[0.3, -0.2]),
        (&[0.6, -0.5, 0.8], &[1.0, 0.5, 2.0]),
        (&[0.5, 0.5, 0.5, 0.5, 0.5], &[2.2, 2.2, 2.2, 2.2, 2.2]),
        (&[0.9, 0.3, -0.4, 0.6, 0.2, 0.8, -0.7], &[1.5, 0.0, 2.5, 1.0, 3.0, 1.2, 2.0]),
    ];
    for (lambda, b) in cases {
        let r = one_factor_matrix(lambda);
        let lower = vec![f64::NEG_INFINITY; b.len()];
        let est = mvn_rectangle(&lower, b, &r, 3, TARGET).unwrap();
        let exact = one_factor_cdf(lambda, b);
        assert!(
            (est.value - exact).abs() <= est.error.max(TARGET) + 1e-9,
            "{lambda:?}: {} vs {exact} (error {})",
            est.value,
            est.error
        );
    }
}

#[test]
fn union_of_equicorrelated_thresholds() {
    // P(∪ P_j <= u) = 1 - P(Z_j < Φ⁻¹(1-u) for all j)
    for d in [2, 3, 4, 6, 8] {
        let rho: f64 = 0.5;
        let u = 0.025 / d as f64;
        let b = std_normal_quantile(1.0 - u).unwrap();
        let exact = 1.0 - one_factor_cdf(&vec![rho.sqrt(); d], &vec![b; d]);
        let r = CorrelationMatrix::equicorrelated(d, rho).unwrap();
        let est = union_exceedance(&vec![u; d], &r, 9, TARGET).unwrap();
        assert!((est.value - exact).abs() <= TARGET + 1e-9, "d={d}: {} vs {exact}", est.value);
        assert!(est.error <= TARGET);
    }
}

#[test]
fn trivariate_orthants() {
    for (a, b, c) in [(0.2, 0.3, 0.4), (-0.3, 0.1, 0.5), (0.9, 0.85, 0.8)] {
        let r = CorrelationMatrix::from_rows(&[vec![1.0, a, b], vec![a, 1.0, c], vec![b, c, 1.0]]).unwrap();
        let exact = 0.125 + (f64::asin(a) + f64::asin(b) + f64::asin(c)) / (4.0 * PI);
        let est = mvn_rectangle(&[f64::NEG_INFINITY; 3], &[0.0; 3], &r, 1, 1e-7).unwrap();
        assert!((est.value - exact).abs() < 2e-7, "{} vs {exact}", est.value);
    }
}

#[test]
fn identical_seeds_identical_estimates() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let r = random_corr(&mut rng, 5);
    let u = [0.01, 0.02, 0.005, 0.03, 0.01];
    let a = union_exceedance(&u, &r, 77, TARGET).unwrap();
    let b = union_exceedance(&u, &r, 77, TARGET).unwrap();
    assert_eq!(a.value.to_bits(), b.value.to_bits());
    let c = union_exceedance(&u, &r, 78, TARGET).unwrap();
    assert!((a.value - c.value).abs() <= a.error + c.error);
}

fn corr_and_thresholds() -> impl Strategy<Value = (CorrelationMatrix, Vec<f64>, u64)> {
    (2usize..=5, any::<u64>()).prop_flat_map(|(d, seed)| {
        let r = random_corr(&mut ChaCha8Rng::seed_from_u64(seed), d);
        (Just(r), prop::collection::vec(1e-4f64..0.05, d), Just(seed))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn union_within_bonferroni_bounds((r, u, seed) in corr_and_thresholds()) {
        let est = union_exceedance(&u, &r, seed, TARGET).unwrap();
        let max = u.iter().copied().fold(0.0, f64::max);
        let sum: f64 = u.iter().sum();
        let slack = 3.0 * est.error.max(TARGET);
        prop_assert!(est.value >= max - slack, "{} < {}", est.value, max);
        prop_assert!(est.value <= sum.min(1.0) + slack, "{} > {}", est.value, sum);
    }

    #[test]
    fn union_is_monotone_in_thresholds((r, u, seed) in corr_and_thresholds(), k in 0usize..5, f in 1.05f64..2.0) {
        let k = k % u.len();
        let mut v = u.clone();
        v[k] = (v[k] * f).min(1.0);
        let a = union_exceedance(&u, &r, seed, TARGET).unwrap();
        let b = union_exceedance(&v, &r, seed, TARGET).unwrap();
        prop_assert!(b.value >= a.value - 3.0 * (a.error + b.error), "{} then {}", a.value, b.value);
    }

    #[test]
    fn independence_gives_product_rule(u in prop::collection::vec(1e-4f64..0.5, 1..=6), seed in any::<u64>()) {
        let r = CorrelationMatrix::identity(u.len());
        let est = union_exceedance(&u, &r, seed, TARGET).unwrap();
        let exact = 1.0 - u.iter().map(|x| 1.0 - x).product::<f64>();
        prop_assert!((est.value - exact).abs() <= 3.0 * est.error.max(TARGET), "{} vs {exact}", est.value);
    }

    #[test]
    fn relabeling_does_not_change_probability((r, u, seed) in corr_and_thresholds()) {
        let d = u.len();
        let perm: Vec<usize> = (0..d).rev().collect();
        let rp = r.submatrix(&perm);
        let up: Vec<f64> = perm.iter().map(|&i| u[i]).collect();
        let a = union_exceedance(&u, &r, seed, TARGET).unwrap();
        let b = union_exceedance(&up, &rp, seed, TARGET).unwrap();
        prop_assert!((a.value - b.value).abs() <= 3.0 * (a.error + b.error).max(TARGET));
    }

    #[test]
    fn bivariate_matches_quadrature(rho in -0.95f64..0.95, a in -3.0f64..3.0, b in -3.0f64..3.0) {
        // factor form needs λ₁λ₂ = ρ with |λ| < 1
        let l = rho.abs().sqrt();
        let lambda = [l, rho.signum() * l];
        let r = CorrelationMatrix::from_rows(&[vec![1.0, rho], vec![rho, 1.0]]).unwrap();
        let est = mvn_rectangle(&[f64::NEG_INFINITY; 2], &[a, b], &r, 0, TARGET).unwrap();
        let exact = one_factor_cdf(&lambda, &[a, b]);
        prop_assert!((est.value - exact).abs() <= TARGET + 1e-9, "{} vs {exact}", est.value);
    }
}
