//! Summary statistics for posterior draws.

use alloc::vec::Vec;

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Sample variance with denominator n - 1 (0 for a single value).
pub fn variance(x: &[f64]) -> f64 {
    if x.len() < 2 {
        return 0.0;
    }
    let m = mean(x);
    x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (x.len() - 1) as f64
}

pub fn sd(x: &[f64]) -> f64 {
    libm::sqrt(variance(x))
}

/// Quantile of already sorted data by linear interpolation between order
/// statistics (the `type = 7` rule).
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = p * (n - 1) as f64;
    let lo = libm::floor(pos) as usize;
    let hi = (lo + 1).min(n - 1);
    let frac = pos - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

pub fn quantiles(x: &[f64], probs: &[f64]) -> Vec<f64> {
    let mut s = x.to_vec();
    s.sort_by(f64::total_cmp);
    probs.iter().map(|&p| quantile_sorted(&s, p)).collect()
}

pub fn median(x: &[f64]) -> f64 {
    quantiles(x, &[0.5])[0]
}

/// Effective sample size by non-overlapping batch means with ceil(sqrt(M))
/// batches, clamped to (0, M]. Constant chains report M.
pub fn ess_batch_means(x: &[f64]) -> f64 {
    let m_total = x.len();
    if m_total < 4 {
        return m_total as f64;
    }
    let var = variance(x);
    if !(var > 0.0) {
        return m_total as f64;
    }
    let batches = libm::ceil(libm::sqrt(m_total as f64)) as usize;
    let size = m_total / batches;
    if size < 1 || batches < 2 {
        return m_total as f64;
    }
    let used = batches * size;
    let grand = mean(&x[..used]);
    let ss: f64 = x[..used]
        .chunks_exact(size)
        .map(|c| {
            let d = mean(c) - grand;
            d * d
        })
        .sum();
    let sigma2 = size as f64 * ss / (batches - 1) as f64;
    if !(sigma2 > 0.0) {
        return m_total as f64;
    }
    let ess = m_total as f64 * var / sigma2;
    ess.clamp(f64::MIN_POSITIVE, m_total as f64)
}
