//! Univariate normal helpers and the truncated-normal sampler used by the
//! data-augmentation step.

use rand::Rng;
use rand_distr::{Distribution, Exp, StandardNormal};
use statrs::distribution::{ContinuousCDF, Normal};

/// Probabilities entering log-likelihoods are clamped to `[P_CLAMP, 1 - P_CLAMP]`.
pub const P_CLAMP: f64 = 1e-12;

/// Standardized bound beyond which the exponential-rejection tail sampler is used.
pub const TAIL_SWITCH: f64 = 4.0;

const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

pub fn norm_pdf(x: f64) -> f64 {
    FRAC_1_SQRT_2PI * (-0.5 * x * x).exp()
}

/// Standard normal CDF, accurate in both tails.
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Standard normal quantile function.
pub fn norm_quantile(p: f64) -> f64 {
    thread_local! {
        static STD: Normal = Normal::standard();
    }
    STD.with(|n| n.inverse_cdf(p))
}

/// `log Φ(x)` with the probability clamped away from 0 and 1.
pub fn log_cdf_clamped(x: f64) -> f64 {
    norm_cdf(x).clamp(P_CLAMP, 1.0 - P_CLAMP).ln()
}

/// `log(1 - Φ(x))` with the same clamping.
pub fn log_sf_clamped(x: f64) -> f64 {
    norm_cdf(-x).clamp(P_CLAMP, 1.0 - P_CLAMP).ln()
}

/// Standard normal restricted to `[lower, ∞)`.
fn std_normal_above<R: Rng + ?Sized>(rng: &mut R, lower: f64) -> f64 {
    if lower <= TAIL_SWITCH {
        // Inverse CDF on the upper tail mass: x = -Φ⁻¹(u · Φ(-lower)).
        let mass = norm_cdf(-lower);
        loop {
            let u: f64 = rng.random();
            let p = u * mass;
            if p <= 0.0 {
                continue;
            }
            let x = -norm_quantile(p);
            if x.is_finite() {
                return x.max(lower);
            }
        }
    } else {
        // Exponential proposal with the optimal rate for this bound.
        let rate = 0.5 * (lower + (lower * lower + 4.0).sqrt());
        let exp = Exp::new(rate).expect("rate is positive");
        loop {
            let x = lower + exp.sample(rng);
            let u: f64 = rng.random();
            let d = x - rate;
            if u.ln() <= -0.5 * d * d {
                return x;
            }
        }
    }
}

/// Draws `N(mean, 1)` truncated to `(0, ∞)` when `positive`, else to `(-∞, 0]`.
pub fn sample_truncated_unit<R: Rng + ?Sized>(rng: &mut R, mean: f64, positive: bool) -> f64 {
    if positive {
        let x = mean + std_normal_above(rng, -mean);
        // Guard against rounding to exactly zero for huge negative means.
        if x > 0.0 {
            x
        } else {
            f64::MIN_POSITIVE
        }
    } else {
        let x = mean - std_normal_above(rng, mean);
        x.min(0.0)
    }
}

/// Draws `N(mean, sd²)` truncated to the half-line `x > 0` (`positive`) or `x < 0`.
pub fn sample_truncated<R: Rng + ?Sized>(rng: &mut R, mean: f64, sd: f64, positive: bool) -> f64 {
    let z = if positive {
        std_normal_above(rng, -mean / sd)
    } else {
        -std_normal_above(rng, mean / sd)
    };
    let x = mean + sd * z;
    if positive {
        x.max(f64::MIN_POSITIVE)
    } else {
        x.min(-f64::MIN_POSITIVE)
    }
}

pub fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

/// Sample quantile with linear interpolation between order statistics
/// (the "type 7" definition). `sorted` must be ascending.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty sample");
    if sorted.len() == 1 {
        return sorted[0];
    }
    let h = (sorted.len() - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation with the `n - 1` denominator.
pub fn sample_sd(xs: &[f64]) -> f64 {
    let m = mean(xs);
    let ss: f64 = xs.iter().map(|x| (x - m) * (x - m)).sum();
    (ss / (xs.len() as f64 - 1.0)).sqrt()
}
