//! Standard normal CDF, survival function and quantile.

use std::f64::consts::{PI, SQRT_2};

use statrs::function::erf::{erfc, erfc_inv};

use crate::types::CoreError;

/// Standard normal density.
pub fn normal_pdf(t: f64) -> f64 {
    (-0.5 * t * t).exp() / (2.0 * PI).sqrt()
}

/// `Phi(t)`, accurate to well below 1e-10 absolute (erfc-based, no
/// cancellation in either tail).
pub fn normal_cdf(t: f64) -> f64 {
    0.5 * erfc(-t / SQRT_2)
}

/// `1 - Phi(t)` without cancellation for large `t`.
pub fn normal_sf(t: f64) -> f64 {
    0.5 * erfc(t / SQRT_2)
}

/// `Phi^{-1}(q)` for `q` in (0, 1).
///
/// Starts from the inverse-erfc approximation and polishes with Newton steps
/// on [`normal_cdf`] so that `normal_cdf(normal_quantile(q))` reproduces `q`.
pub fn normal_quantile(q: f64) -> Result<f64, CoreError> {
    if !(q > 0.0 && q < 1.0) {
        return Err(CoreError::QuantileOutOfRange(q));
    }
    let mut x = -SQRT_2 * erfc_inv(2.0 * q);
    for _ in 0..4 {
        let density = normal_pdf(x);
        if density <= f64::MIN_POSITIVE {
            break;
        }
        // work on the smaller tail to keep the residual well conditioned
        let residual = if x > 0.0 {
            (1.0 - q) - normal_sf(x)
        } else {
            normal_cdf(x) - q
        };
        let step = residual / density;
        x -= step;
        if step.abs() <= 1e-15 * x.abs().max(1.0) {
            break;
        }
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Composite Simpson rule for the standard normal density on [-12, t].
    fn simpson_cdf(t: f64) -> f64 {
        let n = 200_000;
        let a = -12.0;
        let h = (t - a) / n as f64;
        let mut s = normal_pdf(a) + normal_pdf(t);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            s += w * normal_pdf(a + i as f64 * h);
        }
        s * h / 3.0
    }

    fn bisect_quantile(q: f64) -> f64 {
        let (mut lo, mut hi) = (-10.0, 10.0);
        while hi - lo > 1e-12 {
            let mid = 0.5 * (lo + hi);
            if simpson_cdf(mid) < q {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn cdf_reference_values() {
        assert_eq!(normal_cdf(0.0), 0.5);
        let phi1 = simpson_cdf(1.0);
        assert_abs_diff_eq!(phi1, 0.8413447461, epsilon = 1e-10);
        assert_abs_diff_eq!(normal_cdf(1.0), phi1, epsilon = 1e-10);
        assert_abs_diff_eq!(normal_cdf(-1.0), 1.0 - normal_cdf(1.0), epsilon = 1e-15);
        for t in [-5.0, -2.5, -0.3, 0.7, 2.0, 4.5] {
            assert_abs_diff_eq!(normal_cdf(t), simpson_cdf(t), epsilon = 1e-10);
        }
    }

    #[test]
    fn quantile_reference_values() {
        assert_abs_diff_eq!(normal_quantile(0.5).unwrap(), 0.0, epsilon = 1e-15);
        // bisection on the Simpson oracle, frozen: 1.959964
        let oracle = 1.959_964;
        assert_abs_diff_eq!(bisect_quantile(0.975), oracle, epsilon = 5e-7);
        assert_abs_diff_eq!(normal_quantile(0.975).unwrap(), oracle, epsilon = 5e-7);
        assert_abs_diff_eq!(normal_quantile(0.8413447461).unwrap(), 1.0, epsilon = 1e-8);
    }

    #[test]
    fn quantile_rejects_out_of_range() {
        for q in [0.0, 1.0, -0.1, 1.5, f64::NAN] {
            assert!(normal_quantile(q).is_err());
        }
    }

    #[test]
    fn round_trip_random_levels() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..1000 {
            let q = rng.random_range(0.001..0.999);
            let x = normal_quantile(q).unwrap();
            assert!((normal_cdf(x) - q).abs() <= 1e-9, "q={q}");
        }
    }

    #[test]
    fn cdf_strictly_increasing() {
        let n = 10_000;
        // beyond t = 6 the upper tail is below the spacing of doubles near 1
        let mut prev = normal_cdf(-8.0);
        for i in 1..=n {
            let t = -8.0 + 14.0 * i as f64 / n as f64;
            let v = normal_cdf(t);
            assert!(v > prev, "not increasing at {t}");
            prev = v;
        }
    }

    #[test]
    fn survival_matches_complement() {
        for t in [-3.0, -1.0, 0.0, 1.0, 3.0] {
            assert_abs_diff_eq!(normal_sf(t), 1.0 - normal_cdf(t), epsilon = 1e-15);
        }
        assert!(normal_sf(10.0) > 0.0);
    }
}
