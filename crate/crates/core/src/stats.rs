//! Small statistical helpers used by the acceptance checks.

use rand::Rng;

/// Sample mean and standard error of the mean.
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Two-sided one-sample Kolmogorov–Smirnov statistic against `cdf`.
pub fn ks_statistic(xs: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    v.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max)
}

/// Asymptotic p-value of a KS statistic `d` on `n` points, with Stephens'
/// small-sample correction.
pub fn ks_p_value(d: f64, n: usize) -> f64 {
    let sn = (n as f64).sqrt();
    let lambda = (sn + 0.12 + 0.11 / sn) * d;
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    for j in 1..=100 {
        let j = j as f64;
        let term = 2.0 * (-1f64).powf(j - 1.0) * (-2.0 * j * j * lambda * lambda).exp();
        sum += term;
        if term.abs() < 1e-12 {
            break;
        }
    }
    sum.clamp(0.0, 1.0)
}

/// KS statistic and p-value of `xs` against the exponential law of `rate`.
pub fn ks_exponential(xs: &[f64], rate: f64) -> (f64, f64) {
    let d = ks_statistic(xs, |x| if x <= 0.0 { 0.0 } else { 1.0 - (-rate * x).exp() });
    (d, ks_p_value(d, xs.len()))
}

/// One-sided paired sign-flip permutation test of `mean(a − b) > 0`.
/// Returns the p-value estimated from `rounds` random flips.
pub fn paired_permutation_p(a: &[f64], b: &[f64], rounds: usize, rng: &mut impl Rng) -> f64 {
    assert_eq!(a.len(), b.len(), "paired samples have equal length");
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let observed: f64 = diffs.iter().sum();
    let mut at_least = 0usize;
    for _ in 0..rounds {
        let s: f64 = diffs.iter().map(|d| if rng.gen::<bool>() { *d } else { -*d }).sum();
        if s >= observed {
            at_least += 1;
        }
    }
    (at_least + 1) as f64 / (rounds + 1) as f64
}
