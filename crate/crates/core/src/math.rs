//! Log-space arithmetic and a few special functions shared by the samplers.

use rand::Rng;
use rand_distr::{Beta, Distribution, Gamma};

/// `log(exp(a) + exp(b))` without overflow; either side may be `-inf`.
#[inline]
pub fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// Log-sum-exp over a slice. Empty or all `-inf` input gives `-inf`.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    max + xs.iter().map(|&x| (x - max).exp()).sum::<f64>().ln()
}

/// `ln(x)` that maps 0 to `-inf` instead of producing a NaN for tiny negatives.
#[inline]
pub fn ln(x: f64) -> f64 {
    if x <= 0.0 {
        f64::NEG_INFINITY
    } else {
        x.ln()
    }
}

#[inline]
pub fn ln_gamma(x: f64) -> f64 {
    statrs::function::gamma::ln_gamma(x)
}

/// Log marginal likelihood of `counts` under a flat Dirichlet prior:
/// `ln[Γ(C + 1) Γ(d) / Γ(|C| + d)]` with `d = counts.len()`.
pub fn ln_dirichlet_multinomial(counts: &[u64]) -> f64 {
    let d = counts.len() as f64;
    let total: u64 = counts.iter().sum();
    counts.iter().map(|&c| ln_gamma(c as f64 + 1.0)).sum::<f64>() + ln_gamma(d)
        - ln_gamma(total as f64 + d)
}

/// Draw from a Dirichlet with the given concentration vector.
pub fn sample_dirichlet<R: Rng + ?Sized>(alpha: &[f64], rng: &mut R) -> Vec<f64> {
    let mut draws: Vec<f64> = alpha
        .iter()
        .map(|&a| Gamma::new(a, 1.0).expect("positive shape").sample(rng))
        .collect();
    let total: f64 = draws.iter().sum();
    if total > 0.0 && total.is_finite() {
        for d in &mut draws {
            *d /= total;
        }
    } else {
        // Every gamma draw underflowed; fall back to the mean.
        let asum: f64 = alpha.iter().sum();
        for (d, a) in draws.iter_mut().zip(alpha) {
            *d = a / asum;
        }
    }
    draws
}

pub fn sample_dirichlet4<R: Rng + ?Sized>(alpha: [f64; 4], rng: &mut R) -> [f64; 4] {
    let v = sample_dirichlet(&alpha, rng);
    [v[0], v[1], v[2], v[3]]
}

pub fn sample_beta<R: Rng + ?Sized>(a: f64, b: f64, rng: &mut R) -> f64 {
    Beta::new(a, b).expect("positive shapes").sample(rng)
}

/// Sample an index proportionally to `exp(log_weights)`.
pub fn sample_log_categorical<R: Rng + ?Sized>(log_weights: &[f64], rng: &mut R) -> usize {
    let max = log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    assert!(max > f64::NEG_INFINITY, "all weights are zero");
    let weights: Vec<f64> = log_weights.iter().map(|&w| (w - max).exp()).collect();
    sample_categorical(&weights, rng)
}

/// Sample an index proportionally to nonnegative `weights`.
pub fn sample_categorical<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> usize {
    let total: f64 = weights.iter().sum();
    assert!(total > 0.0, "all weights are zero");
    let mut u = rng.random::<f64>() * total;
    let mut last = 0;
    for (i, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            last = i;
            if u < w {
                return i;
            }
            u -= w;
        }
    }
    last
}
