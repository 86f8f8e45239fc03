//! Special functions and log-densities used by the samplers and likelihoods.

use statrs::function::gamma as sgamma;

pub use statrs::function::gamma::{digamma, ln_gamma};

pub const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Regularized lower incomplete gamma P(a, x).
pub fn gamma_p(shape: f64, x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else if x.is_infinite() {
        1.0
    } else {
        sgamma::gamma_lr(shape, x)
    }
}

pub fn gamma_ln_pdf(x: f64, shape: f64, rate: f64) -> f64 {
    if x <= 0.0 {
        return f64::NEG_INFINITY;
    }
    shape * rate.ln() - ln_gamma(shape) + (shape - 1.0) * x.ln() - rate * x
}

pub fn gamma_cdf(x: f64, shape: f64, rate: f64) -> f64 {
    gamma_p(shape, rate * x)
}

/// Quantile of Gamma(shape, rate) by safeguarded Newton iteration inside a
/// bisection bracket on the regularized incomplete gamma function.
///
/// `p = 1` maps to `+inf`, `p = 0` to `0`.
pub fn gamma_quantile(p: f64, shape: f64, rate: f64) -> f64 {
    assert!(shape > 0.0 && rate > 0.0, "gamma_quantile needs positive parameters");
    assert!((0.0..=1.0).contains(&p), "probability out of range: {p}");
    if p == 0.0 {
        return 0.0;
    }
    if p == 1.0 {
        return f64::INFINITY;
    }
    // Work on the unit-rate scale and divide at the end.
    let f = |x: f64| gamma_p(shape, x) - p;
    let mut lo = 0.0_f64;
    let mut hi = shape.max(1.0);
    while f(hi) < 0.0 {
        lo = hi;
        hi *= 2.0;
    }
    let mut x = 0.5 * (lo + hi);
    for _ in 0..200 {
        let fx = f(x);
        if fx == 0.0 {
            break;
        }
        if fx < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let dens = gamma_ln_pdf(x, shape, 1.0).exp();
        let newton = x - fx / dens;
        x = if dens > 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if hi - lo <= 1e-13 * hi.max(1e-300) {
            break;
        }
        if (fx / dens).abs() <= 1e-14 * x {
            break;
        }
    }
    x / rate
}

/// `ln P(Y = k)` for `Y ~ Poisson(rate)`; a zero rate puts all mass on 0.
pub fn poisson_ln_pmf(k: u64, rate: f64) -> f64 {
    if rate <= 0.0 {
        return if k == 0 { 0.0 } else { f64::NEG_INFINITY };
    }
    let k = k as f64;
    k * rate.ln() - rate - ln_gamma(k + 1.0)
}

pub fn std_normal_ln_pdf(x: f64) -> f64 {
    -0.5 * (LN_2PI + x * x)
}

pub fn log_sum_exp(xs: impl IntoIterator<Item = f64>) -> f64 {
    let xs: Vec<f64> = xs.into_iter().collect();
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    if m == f64::INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

pub(crate) fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn quantile_inverts_cdf() {
        for &(shape, rate) in &[(0.3, 1.0), (1.2, 1.2), (2.0, 2.0), (7.5, 0.4), (150.0, 90.0)] {
            for &p in &[1e-6, 0.01, 0.25, 0.5, 0.6, 0.9, 0.95, 0.999] {
                let q = gamma_quantile(p, shape, rate);
                assert_relative_eq!(gamma_cdf(q, shape, rate), p, max_relative = 1e-9);
            }
        }
    }

    #[test]
    fn exponential_quantile_closed_form() {
        // Gamma(1, rate) is Exponential(rate): Q(p) = -ln(1 - p) / rate.
        let q = gamma_quantile(0.6, 1.0, 2.5);
        assert_relative_eq!(q, -(0.4f64).ln() / 2.5, max_relative = 1e-10);
    }

    #[test]
    fn quantile_edges() {
        assert_eq!(gamma_quantile(0.0, 2.0, 1.0), 0.0);
        assert!(gamma_quantile(1.0, 2.0, 1.0).is_infinite());
    }

    #[test]
    fn poisson_zero_rate() {
        assert_eq!(poisson_ln_pmf(0, 0.0), 0.0);
        assert_eq!(poisson_ln_pmf(3, 0.0), f64::NEG_INFINITY);
        assert_relative_eq!(poisson_ln_pmf(2, 1.5), (1.5f64.powi(2) * (-1.5f64).exp() / 2.0).ln(), max_relative = 1e-13);
    }

    #[test]
    fn lse() {
        assert_relative_eq!(log_sum_exp([0.0, 0.0]), 2f64.ln());
        assert_eq!(log_sum_exp([f64::NEG_INFINITY]), f64::NEG_INFINITY);
        assert_relative_eq!(log_add_exp(1.0, 2.0), log_sum_exp([1.0, 2.0]));
    }
}
