//! DF-GLS unit-root statistic and its inversion into a confidence interval
//! for the local-to-unity parameter.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{ols, solve_spd_in_place};
use crate::tables::{CriticalValueTable, TableKind};

/// GLS demeaning constant for the intercept-only case.
pub const C_BAR: f64 = -7.0;
/// Largest local-to-unity value considered.
pub const C_MAX: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DfGlsResult {
    pub t_stat: f64,
    pub phi_hat: f64,
    pub lags: usize,
    pub n: usize,
}

/// Schwert-type lag cap `floor(12 (T/100)^{1/4})`.
pub fn default_max_lags(n: usize) -> usize {
    (12.0 * (n as f64 / 100.0).powf(0.25)).floor() as usize
}

/// Quasi-differenced GLS demeaning with `alpha = 1 + C_BAR / T`.
pub fn gls_demean(x: &[f64]) -> Vec<f64> {
    let beta = gls_mean(x);
    x.iter().map(|v| v - beta).collect()
}

fn gls_mean(x: &[f64]) -> f64 {
    let n = x.len();
    let a = 1.0 + C_BAR / n as f64;
    let d = 1.0 - a;
    let mut sdz = x[0];
    for t in 1..n {
        sdz += d * (x[t] - a * x[t - 1]);
    }
    let sdd = 1.0 + (n - 1) as f64 * d * d;
    sdz / sdd
}

/// DF-GLS test: ADF regression without deterministic terms on the GLS
/// demeaned series. The lag length is chosen by BIC over `0..=max_lags` on a
/// common sample of the OLS-demeaned series (which keeps power when the
/// initial observation is far from the mean), then the regression is
/// re-estimated on the longest available sample.
pub fn dfgls(x: &[f64], max_lags: usize) -> Result<DfGlsResult> {
    let n = x.len();
    if n < 30 {
        return Err(Error::SampleTooSmall {
            required: 30,
            actual: n,
        });
    }
    if let Some(index) = x.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            label: "predictor".into(),
            index,
        });
    }
    let max_lags = max_lags.min((n - 10) / 2);
    let mean = x.iter().sum::<f64>() / n as f64;
    let centred: Vec<f64> = x.iter().map(|v| v - mean).collect();
    let p = bic_lags(&centred, max_lags);
    let xt = gls_demean(x);
    let dx: Vec<f64> = (1..n).map(|t| xt[t] - xt[t - 1]).collect();
    let mut buf = Vec::with_capacity(p + 1);
    let mut design = Vec::with_capacity((n - p - 1) * (p + 1));
    let mut y = Vec::with_capacity(n - p - 1);
    for t in p + 1..n {
        adf_row(&xt, &dx, t, p, &mut buf);
        design.extend_from_slice(&buf);
        y.push(dx[t - 1]);
    }
    let fit = ols(&design, p + 1, &y)?;
    let rho = fit.coef[0];
    let se = fit.std_error(0);
    if !(se > 0.0) {
        return Err(Error::Degenerate("predictor has no variation".into()));
    }
    Ok(DfGlsResult {
        t_stat: rho / se,
        phi_hat: 1.0 + rho,
        lags: p,
        n,
    })
}

// Row for t (index into the levels, t >= 1): the level at t-1 followed by
// the first `p` lagged differences.
fn adf_row(xt: &[f64], dx: &[f64], t: usize, p: usize, buf: &mut Vec<f64>) {
    buf.clear();
    buf.push(xt[t - 1]);
    for j in 1..=p {
        buf.push(dx[t - 1 - j]);
    }
}

// BIC lag choice for the no-deterministics ADF regression of `xt`, every
// candidate fitted on the sample usable by the largest lag.
fn bic_lags(xt: &[f64], max_lags: usize) -> usize {
    let n = xt.len();
    let dx: Vec<f64> = (1..n).map(|t| xt[t] - xt[t - 1]).collect();
    let k = max_lags + 1;
    let mut gram = vec![0.0; k * k];
    let mut xy = vec![0.0; k];
    let mut yy = 0.0;
    let mut buf = Vec::with_capacity(k);
    let first = max_lags + 1;
    for t in first..n {
        adf_row(xt, &dx, t, max_lags, &mut buf);
        let y = dx[t - 1];
        yy += y * y;
        for a in 0..k {
            xy[a] += buf[a] * y;
            for b in 0..=a {
                gram[a * k + b] += buf[a] * buf[b];
            }
        }
    }
    let m = (n - first) as f64;
    let mut best = (f64::INFINITY, 0usize);
    for p in 0..=max_lags {
        let q = p + 1;
        let mut sub = vec![0.0; q * q];
        for a in 0..q {
            for b in 0..q {
                sub[a * q + b] = if b <= a { gram[a * k + b] } else { gram[b * k + a] };
            }
        }
        let mut beta = xy[..q].to_vec();
        if !solve_spd_in_place(&mut sub, q, &mut beta) {
            continue;
        }
        let rss = (yy - beta.iter().zip(&xy).map(|(b, c)| b * c).sum::<f64>()).max(1e-300);
        let bic = (rss / m).ln() + q as f64 * m.ln() / m;
        if bic < best.0 {
            best = (bic, p);
        }
    }
    best.1
}

/// Lag-zero DF-GLS t-statistic without allocation, for simulation loops.
pub fn dfgls_lag0(x: &[f64]) -> f64 {
    let n = x.len();
    let beta = gls_mean(x);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for t in 1..n {
        let l = x[t - 1] - beta;
        let d = x[t] - x[t - 1];
        sxy += l * d;
        sxx += l * l;
        syy += d * d;
    }
    let rho = sxy / sxx;
    let rss = (syy - rho * sxy).max(0.0);
    let s2 = rss / (n - 2) as f64;
    rho / (s2 / sxx).sqrt()
}

/// Confidence interval for `c` from inverting the DF-GLS statistic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalToUnityCI {
    pub c_lower: f64,
    pub c_upper: f64,
    pub alpha1: f64,
    pub source_table: String,
    pub clamped_lower: bool,
    pub clamped_upper: bool,
}

impl LocalToUnityCI {
    pub fn is_degenerate(&self) -> bool {
        self.c_lower == self.c_upper
    }

    pub fn contains(&self, c: f64) -> bool {
        self.c_lower <= c && c <= self.c_upper
    }
}

// Linear crossing of `y = target` between (c0, y0) and (c1, y1).
fn cross(c0: f64, y0: f64, c1: f64, y1: f64, target: f64) -> f64 {
    if y1 == y0 {
        return c0;
    }
    c0 + (target - y0) / (y1 - y0) * (c1 - c0)
}

/// Inverts the DF-GLS statistic: the set of grid values `c` at which
/// `q_{alpha1/2}(c) <= t_obs <= q_{1-alpha1/2}(c)`, with linear
/// interpolation between grid points.
pub fn stock_ci(t_obs: f64, alpha1: f64, table: &CriticalValueTable) -> Result<LocalToUnityCI> {
    if table.kind != TableKind::DfGlsQuantiles {
        return Err(Error::Table(format!("expected a DF-GLS table, got {:?}", table.kind)));
    }
    if !(alpha1 > 0.0 && alpha1 < 1.0) {
        return Err(Error::domain(format!("first-stage level {alpha1} outside (0, 1)")));
    }
    let lo = table.dfgls_curve(round6(alpha1 / 2.0))?;
    let hi = table.dfgls_curve(round6(1.0 - alpha1 / 2.0))?;
    let (c_lower, c_upper, clamped_lower, clamped_upper) = invert_curves(t_obs, &table.c_grid, &lo, &hi);
    Ok(LocalToUnityCI {
        c_lower,
        c_upper,
        alpha1,
        source_table: table.id(),
        clamped_lower,
        clamped_upper,
    })
}

fn round6(x: f64) -> f64 {
    (x * 1e6).round() / 1e6
}

/// Inversion on nondecreasing quantile curves `lo` and `hi` over the
/// ascending grid `c` (values above `C_MAX` are ignored). Returns the bounds
/// and whether each was clamped at a grid end. An empty acceptance set
/// collapses to the nearest grid end.
pub(crate) fn invert_curves(t_obs: f64, c: &[f64], lo: &[f64], hi: &[f64]) -> (f64, f64, bool, bool) {
    let g = c.iter().take_while(|&&v| v <= C_MAX).count();
    // Lower bound: first c where the upper curve reaches t_obs.
    let (c_lower, clamped_lower) = if hi[0] >= t_obs {
        (c[0], true)
    } else {
        match (1..g).find(|&i| hi[i] >= t_obs) {
            Some(i) => (cross(c[i - 1], hi[i - 1], c[i], hi[i], t_obs), false),
            None => return (c[g - 1], c[g - 1], true, true),
        }
    };
    // Upper bound: last c where the lower curve is still below t_obs.
    let (c_upper, clamped_upper) = if lo[g - 1] <= t_obs {
        (c[g - 1], true)
    } else {
        match (0..g - 1).rev().find(|&i| lo[i] <= t_obs) {
            Some(i) => (cross(c[i], lo[i], c[i + 1], lo[i + 1], t_obs), false),
            None => return (c[0], c[0], true, true),
        }
    };
    if c_lower > c_upper {
        let mid = 0.5 * (c_lower + c_upper);
        return (mid, mid, clamped_lower, clamped_upper);
    }
    (c_lower, c_upper, clamped_lower, clamped_upper)
}
