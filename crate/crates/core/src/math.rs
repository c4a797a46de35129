//! Scalar numeric kernels: stable logistic/normal primitives and log-densities.
//!
//! Everything here is branch-stable in the tails; the heavier model code
//! builds on these so that likelihood evaluation never silently under- or
//! overflows.

/// ln(2*pi)
pub const LN_2PI: f64 = 1.8378770664093454;
/// ln(pi)
pub const LN_PI: f64 = 1.1447298858494002;
/// sqrt(2)
pub const SQRT_2: f64 = std::f64::consts::SQRT_2;

/// Numerically stable logistic function 1 / (1 + exp(-x)).
#[inline]
pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// ln(1 + exp(x)) without overflow.
#[inline]
pub fn softplus(x: f64) -> f64 {
    if x > 33.0 {
        // exp(-x) < 5e-15: ln(1+e^x) = x + e^-x to machine precision
        x + (-x).exp()
    } else if x < -33.0 {
        x.exp()
    } else {
        x.exp().ln_1p()
    }
}

/// ln(logistic(x)), stable for large |x|.
#[inline]
pub fn log_sigmoid(x: f64) -> f64 {
    -softplus(-x)
}

/// ln(1 - exp(-d)) for d > 0, accurate for both small and large d.
#[inline]
pub fn log1mexp(d: f64) -> f64 {
    debug_assert!(d >= 0.0);
    if d < std::f64::consts::LN_2 {
        (-(-d).exp_m1()).ln()
    } else {
        (-(-d).exp()).ln_1p()
    }
}

/// ln(exp(a) + exp(b)) without overflow.
#[inline]
pub fn log_sum_exp(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    if hi == f64::NEG_INFINITY {
        f64::NEG_INFINITY
    } else {
        hi + (lo - hi).exp().ln_1p()
    }
}

/// Standard normal density.
#[inline]
pub fn std_normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z - 0.5 * LN_2PI).exp()
}

/// Log density of N(mean, sd^2) at x.
#[inline]
pub fn normal_logpdf(x: f64, mean: f64, sd: f64) -> f64 {
    let z = (x - mean) / sd;
    -0.5 * z * z - sd.ln() - 0.5 * LN_2PI
}

/// Standard normal CDF via erfc (full relative precision in the lower tail
/// down to the underflow limit near -37).
#[inline]
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / SQRT_2)
}

/// ln(Phi(x)), stable over the whole real line.
///
/// Uses erfc directly while it stays in normal range, and the Mills-ratio
/// asymptotic series in the extreme lower tail where erfc underflows.
pub fn log_normal_cdf(x: f64) -> f64 {
    if x >= -37.0 {
        normal_cdf(x).ln()
    } else {
        // log phi(x) - log(-x) + log(1 - 1/x^2 + 3/x^4 - 15/x^6)
        let inv2 = 1.0 / (x * x);
        let series = -inv2 + 3.0 * inv2 * inv2 - 15.0 * inv2 * inv2 * inv2;
        -0.5 * x * x - 0.5 * LN_2PI - (-x).ln() + series.ln_1p()
    }
}

/// ln(Phi(b) - Phi(a)) for a < b, stable even when both lie in the same far
/// tail. Either bound may be infinite.
pub fn log_normal_cdf_diff(a: f64, b: f64) -> f64 {
    debug_assert!(a < b);
    if a == f64::NEG_INFINITY {
        return log_normal_cdf(b);
    }
    if b == f64::INFINITY {
        return log_normal_cdf(-a);
    }
    // Reflect so the pair sits in the left half, where log_normal_cdf keeps
    // the most relative precision.
    let (a, b) = if a + b > 0.0 { (-b, -a) } else { (a, b) };
    let la = log_normal_cdf(a);
    let lb = log_normal_cdf(b);
    lb + log1mexp(lb - la)
}

/// Inverse standard-normal CDF by bisection; accurate to ~1e-14 over
/// p in (1e-300, 1 - 1e-16).
pub fn probit(p: f64) -> f64 {
    assert!(p > 0.0 && p < 1.0, "probit needs p in (0, 1), got {p}");
    let (mut lo, mut hi) = (-40.0_f64, 40.0_f64);
    for _ in 0..90 {
        let mid = 0.5 * (lo + hi);
        if normal_cdf(mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Log density of a half-Cauchy(scale) distribution at x > 0.
#[inline]
pub fn half_cauchy_logpdf(x: f64, scale: f64) -> f64 {
    debug_assert!(x > 0.0 && scale > 0.0);
    let r = x / scale;
    std::f64::consts::LN_2 - LN_PI - scale.ln() - r.mul_add(r, 1.0).ln()
}

/// Log density of Gamma(shape, rate) at x > 0 (fully normalized).
#[inline]
pub fn gamma_logpdf(x: f64, shape: f64, rate: f64) -> f64 {
    debug_assert!(x > 0.0 && shape > 0.0 && rate > 0.0);
    shape * rate.ln() - libm::lgamma(shape) + (shape - 1.0) * x.ln() - rate * x
}

/// Log density of LogNormal(mu, sd) at x > 0.
#[inline]
pub fn lognormal_logpdf(x: f64, mu: f64, sd: f64) -> f64 {
    debug_assert!(x > 0.0);
    -x.ln() + normal_logpdf(x.ln(), mu, sd)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    // Expected values frozen from 30-digit reference computations.

    #[test]
    fn probit_inverts_the_normal_cdf() {
        assert_relative_eq!(probit(0.5), 0.0, epsilon = 1e-13);
        assert_relative_eq!(probit(0.975), 1.959963984540054, epsilon = 1e-12);
        assert_relative_eq!(probit(0.25), -0.6744897501960817, epsilon = 1e-12);
        for &p in &[1e-6, 0.01, 0.31, 0.5, 0.77, 0.999, 1.0 - 1e-9] {
            assert_relative_eq!(normal_cdf(probit(p)), p, epsilon = 1e-12);
        }
    }

    #[test]
    fn logistic_matches_reference() {
        assert_relative_eq!(logistic(2.0), 0.8807970779778824, max_relative = 1e-15);
        assert_relative_eq!(logistic(0.0), 0.5, max_relative = 1e-15);
        assert_relative_eq!(logistic(-30.0), 9.357622968840175e-14, max_relative = 1e-13);
        assert!(logistic(800.0) == 1.0);
        // far-negative arguments saturate cleanly: positive until the exp
        // underflows, then exactly zero
        assert!(logistic(-700.0) > 0.0);
        assert!(logistic(-800.0) == 0.0);
    }

    #[test]
    fn log_sigmoid_matches_reference() {
        assert_relative_eq!(log_sigmoid(-4.0), -4.018149927917810, max_relative = 1e-15);
        assert_relative_eq!(softplus(3.0), 3.048587351573742, max_relative = 1e-15);
        // deep tails stay finite and linear
        assert_relative_eq!(log_sigmoid(-1000.0), -1000.0, max_relative = 1e-15);
        assert!(log_sigmoid(1000.0) < 0.0 || log_sigmoid(1000.0) == 0.0);
    }

    #[test]
    fn normal_cdf_matches_reference() {
        assert_relative_eq!(normal_cdf(1.0), 0.8413447460685429, max_relative = 1e-15);
        assert_relative_eq!(normal_cdf(-2.0), 0.022750131948179207, max_relative = 1e-14);
        assert_relative_eq!(normal_cdf(0.0), 0.5, max_relative = 1e-15);
    }

    #[test]
    fn log_normal_cdf_matches_reference() {
        assert_relative_eq!(log_normal_cdf(3.0), -0.0013508099647481938, max_relative = 1e-12);
        assert_relative_eq!(log_normal_cdf(-5.0), -15.064998393988726, max_relative = 1e-14);
        assert_relative_eq!(log_normal_cdf(-20.0), -203.91715537109726, max_relative = 1e-14);
        // straddles the erfc underflow switch
        assert_relative_eq!(log_normal_cdf(-37.5), -707.6689893175072, max_relative = 1e-10);
        assert_relative_eq!(log_normal_cdf(-40.0), -804.6084420137538, max_relative = 1e-10);
    }

    #[test]
    fn log_normal_cdf_diff_matches_reference() {
        assert_relative_eq!(
            log_normal_cdf_diff(-1.0, 1.0),
            -0.3817151463021261,
            max_relative = 1e-14
        );
        // narrow central band: catastrophic cancellation if done naively in cdf space
        assert_relative_eq!(
            log_normal_cdf_diff(0.1, 0.3),
            -2.5499754246125898,
            max_relative = 1e-12
        );
        // both bounds in the far left tail
        assert_relative_eq!(
            log_normal_cdf_diff(-9.0, -8.0),
            -35.013618593437148,
            max_relative = 1e-12
        );
        // reflection symmetry: P(a<Z<b) == P(-b<Z<-a)
        assert_relative_eq!(
            log_normal_cdf_diff(8.0, 9.0),
            log_normal_cdf_diff(-9.0, -8.0),
            max_relative = 1e-13
        );
        // open bounds
        assert_relative_eq!(
            log_normal_cdf_diff(f64::NEG_INFINITY, 1.0),
            normal_cdf(1.0).ln(),
            max_relative = 1e-14
        );
        assert_relative_eq!(
            log_normal_cdf_diff(-1.0, f64::INFINITY),
            normal_cdf(1.0).ln(),
            max_relative = 1e-14
        );
    }

    #[test]
    fn density_values_match_reference() {
        assert_relative_eq!(normal_logpdf(0.7, 0.0, 1.0), -1.1639385332046727, max_relative = 1e-15);
        assert_relative_eq!(half_cauchy_logpdf(0.4, 1.0), -0.6000027104077281, max_relative = 1e-15);
        assert_relative_eq!(half_cauchy_logpdf(1.1, 2.5), -1.5448473876309693, max_relative = 1e-15);
        assert_relative_eq!(
            gamma_logpdf(1.0 / 3.0, 2.0, 3.0),
            0.09861228866810969,
            max_relative = 1e-14
        );
        assert_relative_eq!(gamma_logpdf(0.7, 3.0, 2.0), -0.7270555267575741, max_relative = 1e-14);
        assert_relative_eq!(lognormal_logpdf(1.3, 0.0, 1.0), -1.2157203013069476, max_relative = 1e-14);
    }

    #[test]
    fn log1mexp_both_branches() {
        // small d -> expm1 branch, large d -> ln_1p branch
        // log(1 - e^{-d}) = ln d + ln(1 - d/2 + ...) ~ ln d - d/2 for small d
        assert_relative_eq!(log1mexp(1e-10), (1e-10f64).ln() - 0.5e-10, epsilon = 1e-12);
        assert_relative_eq!(log1mexp(50.0), -(-50.0f64).exp(), epsilon = 1e-30);
        assert_relative_eq!(log1mexp(0.5), (1.0 - (-0.5f64).exp()).ln(), max_relative = 1e-14);
    }

    #[test]
    fn log_sum_exp_handles_neg_infinity() {
        assert_eq!(log_sum_exp(f64::NEG_INFINITY, f64::NEG_INFINITY), f64::NEG_INFINITY);
        assert_relative_eq!(log_sum_exp(f64::NEG_INFINITY, 2.0), 2.0, max_relative = 1e-15);
        assert_relative_eq!(log_sum_exp(1.0, 1.0), 1.0 + std::f64::consts::LN_2, max_relative = 1e-15);
    }

    proptest! {
        #[test]
        fn logistic_in_unit_interval_and_symmetric(x in -700.0f64..700.0) {
            let p = logistic(x);
            prop_assert!((0.0..=1.0).contains(&p));
            prop_assert!((p + logistic(-x) - 1.0).abs() < 1e-12);
        }

        #[test]
        fn log_sigmoid_consistent_with_logistic(x in -30.0f64..30.0) {
            prop_assert!((log_sigmoid(x).exp() - logistic(x)).abs() < 1e-14);
        }

        #[test]
        fn cdf_diff_consistent_with_naive(a in -5.0f64..4.9, w in 0.01f64..3.0) {
            let b = a + w;
            let naive = (normal_cdf(b) - normal_cdf(a)).ln();
            let stable = log_normal_cdf_diff(a, b);
            prop_assert!((stable - naive).abs() < 1e-9 * naive.abs().max(1.0));
        }

        #[test]
        fn log_normal_cdf_monotone(x in -45.0f64..8.0) {
            prop_assert!(log_normal_cdf(x) < log_normal_cdf(x + 0.25));
        }
    }
}
