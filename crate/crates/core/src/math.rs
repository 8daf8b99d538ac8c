//! Scalar helpers. Everything routes through `libm` so that a value computed in a
//! test binary is bit-identical to the one computed in the CLI.

use rand::Rng;

pub const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[inline]
pub fn ln(x: f64) -> f64 {
    libm::log(x)
}

#[inline]
pub fn exp(x: f64) -> f64 {
    libm::exp(x)
}

#[inline]
pub fn sqrt(x: f64) -> f64 {
    libm::sqrt(x)
}

#[inline]
pub fn lgamma(x: f64) -> f64 {
    libm::lgamma(x)
}

#[inline]
pub fn powf(x: f64, y: f64) -> f64 {
    libm::pow(x, y)
}

/// `ln σ(x)` without overflow.
pub fn log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        -libm::log1p(exp(-x))
    } else {
        x - libm::log1p(exp(x))
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + exp(-x))
    } else {
        let e = exp(x);
        e / (1.0 + e)
    }
}

/// `ln Π_{i=1}^{n-1} (b + i)`, i.e. the rising factorial `(b)_n` with its first
/// factor `b` removed. Zero for `n <= 1`.
pub fn ln_rising_tail(b: f64, n: u64) -> f64 {
    if n <= 1 {
        return 0.0;
    }
    lgamma(b + n as f64) - lgamma(b + 1.0)
}

/// `ln Π_{i=1}^{t-1} (b + i·a)`, the generalized rising factorial `(b|a)_t` with its
/// first factor `b` removed. Zero for `t <= 1`.
pub fn ln_generalized_rising_tail(b: f64, a: f64, t: u64) -> f64 {
    if t <= 1 {
        return 0.0;
    }
    if a == 0.0 {
        (t - 1) as f64 * ln(b)
    } else {
        let r = b / a;
        (t - 1) as f64 * ln(a) + lgamma(r + t as f64) - lgamma(r + 1.0)
    }
}

/// `ln (1 - a)_{s-1}`: the weight of a table of size `s` in a seating arrangement.
pub fn ln_table_weight(a: f64, size: u32) -> f64 {
    if size <= 1 {
        return 0.0;
    }
    lgamma(size as f64 - a) - lgamma(1.0 - a)
}

/// Index drawn proportionally to non-negative `weights` whose sum is `total`.
/// Falls back to the last positive entry on rounding overshoot.
pub fn sample_index<R: Rng + ?Sized>(weights: &[f64], total: f64, rng: &mut R) -> usize {
    debug_assert!(total > 0.0, "cannot sample from zero mass");
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

pub fn sample_weighted<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> usize {
    let total: f64 = weights.iter().sum();
    sample_index(weights, total, rng)
}

/// Draw from Gamma(shape, rate).
pub fn sample_gamma<R: Rng + ?Sized>(shape: f64, rate: f64, rng: &mut R) -> f64 {
    use rand_distr::Distribution;
    let dist = rand_distr::Gamma::new(shape, 1.0 / rate).expect("valid gamma parameters");
    dist.sample(rng)
}

pub fn sample_beta<R: Rng + ?Sized>(a: f64, b: f64, rng: &mut R) -> f64 {
    use rand_distr::Distribution;
    let dist = rand_distr::Beta::new(a, b).expect("valid beta parameters");
    dist.sample(rng)
}

pub fn sample_std_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    use rand_distr::Distribution;
    rand_distr::StandardNormal.sample(rng)
}

pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    let s: f64 = values.iter().map(|v| exp(v - max)).sum();
    max + ln(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute_rising_tail(b: f64, a: f64, n: u64) -> f64 {
        (1..n).map(|i| ln(b + i as f64 * a)).sum()
    }

    #[test]
    fn rising_factorials_match_products() {
        for &(b, a) in &[(0.5, 0.0), (1.0, 0.5), (0.3, 0.7), (2.5, 0.2)] {
            for n in 0..30u64 {
                let want = brute_rising_tail(b, a, n);
                let got = ln_generalized_rising_tail(b, a, n);
                assert!((want - got).abs() < 1e-9, "b={b} a={a} n={n}");
                let want = brute_rising_tail(b, 1.0, n);
                assert!((want - ln_rising_tail(b, n)).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn table_weight_matches_product() {
        for &a in &[0.0, 0.5, 0.7] {
            for s in 1..20u32 {
                let want: f64 = (1..s).map(|i| ln(i as f64 - a)).sum();
                assert!((want - ln_table_weight(a, s)).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn log_sigmoid_is_stable() {
        assert!((log_sigmoid(0.0) - ln(0.5)).abs() < 1e-15);
        assert!(log_sigmoid(800.0).abs() < 1e-300);
        assert!((log_sigmoid(-800.0) + 800.0).abs() < 1e-9);
    }
}
