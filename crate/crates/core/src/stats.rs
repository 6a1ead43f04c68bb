//! Small descriptive-statistics helpers shared across modules.

use statrs::distribution::{ContinuousCDF, Normal};

pub fn mean(s: &[f64]) -> f64 {
    s.iter().sum::<f64>() / s.len() as f64
}

/// Variance with divisor `n`.
pub fn variance_pop(s: &[f64]) -> f64 {
    let m = mean(s);
    s.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / s.len() as f64
}

/// Variance with divisor `n - 1`.
pub fn variance(s: &[f64]) -> f64 {
    let n = s.len();
    if n < 2 {
        return 0.0;
    }
    let m = mean(s);
    s.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1) as f64
}

pub fn std_dev(s: &[f64]) -> f64 {
    variance(s).sqrt()
}

/// Linear-interpolation quantile of already sorted data (Hyndman-Fan type 7).
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    debug_assert!(n > 0);
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn sort_floats(v: &mut [f64]) {
    v.sort_unstable_by(|a, b| a.total_cmp(b));
}

pub fn quantiles(data: &[f64], levels: &[f64]) -> Vec<f64> {
    let mut s = data.to_vec();
    sort_floats(&mut s);
    levels.iter().map(|&p| quantile_sorted(&s, p)).collect()
}

pub fn iqr(data: &[f64]) -> f64 {
    let q = quantiles(data, &[0.25, 0.75]);
    q[1] - q[0]
}

pub const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

pub fn normal_pdf(x: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * x * x).exp()
}

pub fn normal_quantile(p: f64) -> f64 {
    Normal::standard().inverse_cdf(p)
}

pub fn normal_cdf(x: f64) -> f64 {
    Normal::standard().cdf(x)
}

/// Pool-adjacent-violators fit of a nondecreasing sequence (equal weights).
pub fn isotonic_increasing(values: &[f64]) -> Vec<f64> {
    let mut blocks: Vec<(f64, usize)> = Vec::with_capacity(values.len());
    for &v in values {
        blocks.push((v, 1));
        while blocks.len() > 1 {
            let (m2, n2) = blocks[blocks.len() - 1];
            let (m1, n1) = blocks[blocks.len() - 2];
            if m1 <= m2 {
                break;
            }
            blocks.pop();
            let n = n1 + n2;
            *blocks.last_mut().unwrap() = ((m1 * n1 as f64 + m2 * n2 as f64) / n as f64, n);
        }
    }
    blocks
        .into_iter()
        .flat_map(|(m, n)| std::iter::repeat_n(m, n))
        .collect()
}
