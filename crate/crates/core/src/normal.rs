//! Univariate standard normal distribution.

use statrs::function::erf::erfc_inv;
use std::f64::consts::FRAC_1_SQRT_2;
use std::f64::consts::SQRT_2;

use crate::error::{Error, Result};

/// Standard normal CDF `Φ(z)`.
///
/// Computed through `erfc` so both tails keep full relative precision.
/// Saturates to 0 or 1 for extreme arguments (including infinities).
pub fn std_normal_cdf(z: f64) -> f64 {
    if z.is_nan() {
        return f64::NAN;
    }
    0.5 * libm::erfc(-z * FRAC_1_SQRT_2)
}

/// Upper tail `1 - Φ(z)`, accurate for large `z`.
pub fn std_normal_sf(z: f64) -> f64 {
    std_normal_cdf(-z)
}

/// Standard normal quantile `Φ⁻¹(u)` for `0 < u < 1`.
pub fn std_normal_quantile(u: f64) -> Result<f64> {
    if !(u > 0.0 && u < 1.0) {
        return Err(Error::Domain(format!("normal quantile requires 0 < u < 1, got {u}")));
    }
    Ok(quantile_unchecked(u))
}

/// Quantile that maps 0 and 1 to the infinities instead of failing.
pub(crate) fn quantile_unchecked(u: f64) -> f64 {
    if u <= 0.0 {
        f64::NEG_INFINITY
    } else if u >= 1.0 {
        f64::INFINITY
    } else {
        // one Halley step polishes the rational approximation to full precision
        let x = -SQRT_2 * erfc_inv(2.0 * u);
        let d = std_normal_pdf(x);
        if !x.is_finite() || d < f64::MIN_POSITIVE {
            return x;
        }
        let t = (std_normal_cdf(x) - u) / d;
        x - t / (1.0 + 0.5 * x * t)
    }
}

/// Unpolished quantile for integrands, where ~1e-10 relative accuracy is
/// far below the integration error.
#[inline]
pub(crate) fn quantile_fast(u: f64) -> f64 {
    -SQRT_2 * erfc_inv(2.0 * u)
}

/// Standard normal density.
pub(crate) fn std_normal_pdf(z: f64) -> f64 {
    const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;
    if z.is_infinite() {
        0.0
    } else {
        INV_SQRT_2PI * (-0.5 * z * z).exp()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cdf_reference_points() {
        assert_eq!(std_normal_cdf(0.0), 0.5);
        assert!((std_normal_cdf(40.0) - 1.0).abs() <= 1e-15);
        assert_eq!(std_normal_cdf(-40.0), 0.0);
        assert_eq!(std_normal_cdf(f64::INFINITY), 1.0);
        assert_eq!(std_normal_cdf(f64::NEG_INFINITY), 0.0);
        // 1.959963984540054 is the exact 0.975 quantile
        assert!((std_normal_cdf(1.959964) - 0.975).abs() < 1e-6);
        assert!((std_normal_cdf(1.959963984540054) - 0.975).abs() < 1e-14);
        // Φ(-1) from a 30-digit reference
        assert!((std_normal_cdf(-1.0) - 0.158_655_253_931_457_05).abs() < 1e-15);
        assert!((std_normal_cdf(-5.0) - 2.866_515_718_791_939e-7).abs() < 1e-20);
    }

    #[test]
    fn quantile_reference_points() {
        assert_eq!(std_normal_quantile(0.5).unwrap(), 0.0);
        assert!((std_normal_quantile(0.975).unwrap() - 1.959964).abs() < 1e-5);
        let u = 0.0123;
        let back = std_normal_cdf(std_normal_quantile(u).unwrap());
        assert!((back - u).abs() < 1e-10);
    }

    #[test]
    fn quantile_domain() {
        assert!(std_normal_quantile(0.0).is_err());
        assert!(std_normal_quantile(1.0).is_err());
        assert!(std_normal_quantile(-0.1).is_err());
        assert!(std_normal_quantile(f64::NAN).is_err());
    }

    #[test]
    fn quantile_round_trip_grid() {
        let mut prev = f64::NEG_INFINITY;
        for k in 1..2000 {
            let u = k as f64 / 2000.0;
            let z = std_normal_quantile(u).unwrap();
            assert!(z > prev);
            prev = z;
            assert!((std_normal_cdf(z) - u).abs() < 1e-10, "u={u}");
        }
        for &u in &[1e-300, 1e-100, 1e-20, 1e-10, 1.0 - 1e-10] {
            let z = std_normal_quantile(u).unwrap();
            assert!((std_normal_cdf(z) - u).abs() <= 1e-10 * u.clamp(1e-300, 1.0) + 1e-15);
        }
    }

    #[test]
    fn cdf_monotone() {
        let mut prev = 0.0;
        for k in -4000..=4000 {
            let v = std_normal_cdf(k as f64 / 400.0);
            assert!(v >= prev);
            prev = v;
        }
    }
}
