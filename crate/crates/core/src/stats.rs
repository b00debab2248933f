//! Small statistical helpers shared by samplers, experiments and tests.

use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Two-sample Kolmogorov–Smirnov statistic and asymptotic p-value.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> (f64, f64) {
    assert!(!a.is_empty() && !b.is_empty());
    let mut x = a.to_vec();
    let mut y = b.to_vec();
    x.sort_by(f64::total_cmp);
    y.sort_by(f64::total_cmp);
    let (n, m) = (x.len() as f64, y.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < x.len() && j < y.len() {
        let v = x[i].min(y[j]);
        while i < x.len() && x[i] <= v {
            i += 1;
        }
        while j < y.len() && y[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    let ne = n * m / (n + m);
    let lambda = (ne.sqrt() + 0.12 + 0.11 / ne.sqrt()) * d;
    (d, kolmogorov_survival(lambda))
}

/// `P(K > λ)` for the Kolmogorov distribution.
pub fn kolmogorov_survival(lambda: f64) -> f64 {
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..200 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Pearson chi-square statistic of `observed` against `expected` counts,
/// with bins whose expectation is below `min_expected` pooled into one.
/// Returns `(statistic, degrees of freedom, p-value)`.
pub fn chi_square(observed: &[f64], expected: &[f64], min_expected: f64) -> (f64, usize, f64) {
    let mut stat = 0.0;
    let mut bins = 0usize;
    let (mut po, mut pe) = (0.0, 0.0);
    for (&o, &e) in observed.iter().zip(expected) {
        if e < min_expected {
            po += o;
            pe += e;
            continue;
        }
        stat += (o - e).powi(2) / e;
        bins += 1;
    }
    if pe > 0.0 {
        stat += (po - pe).powi(2) / pe;
        bins += 1;
    }
    let df = bins.saturating_sub(1).max(1);
    let p = ChiSquared::new(df as f64).map(|c| 1.0 - c.cdf(stat)).unwrap_or(f64::NAN);
    (stat, df, p)
}

/// Wilson score interval for a binomial proportion at normal quantile `z`.
pub fn wilson_interval(hits: usize, trials: usize, z: f64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let n = trials as f64;
    let p = hits as f64 / n;
    let z2 = z * z;
    let centre = (p + z2 / (2.0 * n)) / (1.0 + z2 / n);
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / (1.0 + z2 / n);
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

pub fn variance(x: &[f64]) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (x.len() as f64 - 1.0)
}

/// Integrated autocorrelation time `1 + 2 Σ ρ_k`, truncated with Sokal's
/// self-consistent window (`k ≤ 5 τ`).
pub fn integrated_autocorrelation(x: &[f64]) -> f64 {
    let n = x.len();
    if n < 4 {
        return 1.0;
    }
    let m = mean(x);
    let c0: f64 = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n as f64;
    if c0 == 0.0 {
        return 1.0;
    }
    let mut tau = 1.0;
    for k in 1..n / 2 {
        let ck: f64 = (0..n - k).map(|i| (x[i] - m) * (x[i + k] - m)).sum::<f64>() / n as f64;
        tau += 2.0 * ck / c0;
        if k as f64 >= 5.0 * tau {
            break;
        }
    }
    tau.max(1.0)
}

/// Standard error of the mean from non-overlapping batch means.
pub fn batch_means_error(x: &[f64], batches: usize) -> f64 {
    let size = x.len() / batches;
    if size == 0 || batches < 2 {
        return f64::NAN;
    }
    let means: Vec<f64> = (0..batches).map(|b| mean(&x[b * size..(b + 1) * size])).collect();
    (variance(&means) / batches as f64).sqrt()
}
