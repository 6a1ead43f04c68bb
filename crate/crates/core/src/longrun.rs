//! Long-run covariance estimation: kernel HAC sums, HVAR prewhitening of
//! the (score, predictor innovation) pair, and the HAC t-statistic for the
//! quantile slope.

use std::f64::consts::PI;

use nalgebra::Matrix2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{floor_eigenvalues, ols, symmetrize};
use crate::quantreg::QuantileFit;
use crate::series::PredictiveDataset;
use crate::stats;

/// Relative eigenvalue floor applied to every estimated 2x2 covariance.
pub const EIGEN_FLOOR: f64 = 1e-12;

/// Lag-window kernels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Kernel {
    Parzen,
    Bartlett,
    QuadraticSpectral,
}

impl Kernel {
    pub fn weight(self, x: f64) -> f64 {
        let a = x.abs();
        match self {
            Kernel::Parzen => {
                if a <= 0.5 {
                    1.0 - 6.0 * a * a + 6.0 * a * a * a
                } else if a <= 1.0 {
                    2.0 * (1.0 - a).powi(3)
                } else {
                    0.0
                }
            }
            Kernel::Bartlett => (1.0 - a).max(0.0),
            Kernel::QuadraticSpectral => {
                if a == 0.0 {
                    return 1.0;
                }
                let z = 6.0 * PI * a / 5.0;
                if z < 1e-3 {
                    let z2 = z * z;
                    return 1.0 - z2 / 10.0 + z2 * z2 / 280.0;
                }
                25.0 / (12.0 * PI * PI * a * a) * (z.sin() / z - z.cos())
            }
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Kernel::Parzen => "parzen",
            Kernel::Bartlett => "bartlett",
            Kernel::QuadraticSpectral => "quadratic-spectral",
        }
    }
}

/// Default truncation lag `floor(1.3 T^{1/3})` for the score HAC.
pub fn default_lag(t: usize) -> usize {
    (1.3 * (t as f64).cbrt()).floor() as usize
}

/// Long-run covariance objects behind the HAC and FM statistics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LongRunEstimates {
    pub omega_psi2: f64,
    pub omega_psi_v: f64,
    pub omega_v2: f64,
    pub delta_tau: f64,
    pub lambda_vv: f64,
    pub sigma_hat: [[f64; 2]; 2],
    pub delta_fz_hat: [[f64; 2]; 2],
    pub bandwidth_m: usize,
    pub kernel_name: String,
    /// Whether the HVAR recoloring was used for the Omega components.
    pub prewhitened: bool,
    /// Number of covariance matrices whose eigenvalues had to be floored.
    pub floor_events: usize,
    pub warning: Option<String>,
}

/// Long-run covariance of a bivariate, mean-zero series. Returns the matrix
/// and the number of eigenvalue-floor events.
#[derive(Debug, Clone, Copy)]
pub struct Omega {
    pub matrix: Matrix2<f64>,
    pub floored: bool,
}

impl Omega {
    fn correlation(&self) -> f64 {
        let m = &self.matrix;
        let d = (m[(0, 0)] * m[(1, 1)]).sqrt();
        if d > 0.0 {
            (m[(0, 1)] / d).clamp(-1.0, 1.0)
        } else {
            0.0
        }
    }
}

// Sum of Gamma(0) + sum_l w_l (Gamma(l) + Gamma(l)').
fn weighted_autocov(g: &[[f64; 2]], max_lag: usize, w: impl Fn(usize) -> f64) -> Matrix2<f64> {
    let t = g.len();
    let mut out = Matrix2::zeros();
    for lag in 0..=max_lag.min(t.saturating_sub(1)) {
        let wl = if lag == 0 { 1.0 } else { w(lag) };
        if wl == 0.0 {
            continue;
        }
        let mut gam = Matrix2::zeros();
        for s in 0..t - lag {
            let a = g[s + lag];
            let b = g[s];
            gam[(0, 0)] += a[0] * b[0];
            gam[(0, 1)] += a[0] * b[1];
            gam[(1, 0)] += a[1] * b[0];
            gam[(1, 1)] += a[1] * b[1];
        }
        gam /= t as f64;
        if lag == 0 {
            out += gam;
        } else {
            out += (gam + gam.transpose()) * wl;
        }
    }
    out
}

/// Kernel long-run covariance `Sigma(tau) = sum_{|l| <= m} k(l/m) Gamma(l)` of
/// the scores `z_{t-1} psi_t`, with `Gamma(l) = T^{-1} sum_t z_{t-1+l}
/// psi_{t+l} z_{t-1}' psi_t`.
pub fn sigma_hat(
    fit: &QuantileFit,
    data: &PredictiveDataset,
    kernel: Kernel,
    m: usize,
) -> Result<Matrix2<f64>> {
    sigma_hat_from_scores(data.x_lag(), &fit.psi, kernel, m)
}

/// As [`sigma_hat`] given the lagged regressor and the score sequence.
pub fn sigma_hat_from_scores(
    x_lag: &[f64],
    psi: &[f64],
    kernel: Kernel,
    m: usize,
) -> Result<Matrix2<f64>> {
    let t = psi.len();
    if x_lag.len() != t {
        return Err(Error::Alignment("score and regressor lengths differ".into()));
    }
    if m >= t {
        return Err(Error::domain(format!("lag length {m} must be below T={t}")));
    }
    let g: Vec<[f64; 2]> = x_lag.iter().zip(psi).map(|(&x, &p)| [p, x * p]).collect();
    let s = if m == 0 {
        weighted_autocov(&g, 0, |_| 0.0)
    } else {
        weighted_autocov(&g, m, |l| kernel.weight(l as f64 / m as f64))
    };
    Ok(symmetrize(&s))
}

/// `Delta_fz = (T h)^{-1} sum_t phi(u_t / h) z_{t-1} z_{t-1}'`.
pub fn delta_fz(fit: &QuantileFit, data: &PredictiveDataset) -> Matrix2<f64> {
    let h = fit.bandwidth_h;
    let t = data.len() as f64;
    let mut m = Matrix2::zeros();
    for (&u, &x) in fit.residuals.iter().zip(data.x_lag()) {
        let k = stats::normal_pdf(u / h);
        m[(0, 0)] += k;
        m[(0, 1)] += k * x;
        m[(1, 1)] += k * x * x;
    }
    m[(1, 0)] = m[(0, 1)];
    m / (t * h)
}

/// Andrews (1991) AR(1) plug-in bandwidth for the quadratic-spectral kernel.
pub fn andrews_qs_bandwidth(series: &[[f64; 2]]) -> f64 {
    let t = series.len();
    let mut num = 0.0;
    let mut den = 0.0;
    for a in 0..2 {
        let col: Vec<f64> = series.iter().map(|u| u[a]).collect();
        let mut sxy = 0.0;
        let mut sxx = 0.0;
        for s in 1..t {
            sxy += col[s] * col[s - 1];
            sxx += col[s - 1] * col[s - 1];
        }
        if sxx <= 0.0 {
            continue;
        }
        let rho = (sxy / sxx).clamp(-0.97, 0.97);
        let sig2 = (1..t)
            .map(|s| (col[s] - rho * col[s - 1]).powi(2))
            .sum::<f64>()
            / (t - 1) as f64;
        num += 4.0 * rho * rho * sig2 * sig2 / (1.0 - rho).powi(8);
        den += sig2 * sig2 / (1.0 - rho).powi(4);
    }
    if den <= 0.0 || num <= 0.0 {
        return 0.0;
    }
    1.3221 * (num / den * t as f64).powf(0.2)
}

/// Lags beyond `QS_TAIL * S_T` are dropped: the kernel envelope there is
/// below `1e-5`.
pub const QS_TAIL: f64 = 150.0;

/// Quadratic-spectral HAC with the Andrews bandwidth.
pub fn qs_hac(series: &[[f64; 2]]) -> Matrix2<f64> {
    let st = andrews_qs_bandwidth(series);
    let m = if st < 1e-8 {
        weighted_autocov(series, 0, |_| 0.0)
    } else {
        let last = ((QS_TAIL * st).ceil() as usize).min(series.len() - 1);
        weighted_autocov(series, last, |l| Kernel::QuadraticSpectral.weight(l as f64 / st))
    };
    symmetrize(&m)
}

/// Prewhitening coefficients of the restricted HVAR, summed over the three
/// lag blocks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HvarCoefficients {
    /// `Phi^(m) + Phi^(q) + Phi^(y)`.
    pub phi_sum: Matrix2<f64>,
}

// Recolors `Omega_eps` by `A^{-1} Omega_eps A^{-T}` with `A = I - phi_sum`.
fn recolor(omega_eps: &Matrix2<f64>, phi_sum: &Matrix2<f64>) -> Result<Matrix2<f64>> {
    let a = Matrix2::identity() - phi_sum;
    if a.determinant().abs() < 1e-10 {
        return Err(Error::Prewhitening("lag polynomial has a root at one".into()));
    }
    let ai = a
        .try_inverse()
        .ok_or_else(|| Error::Prewhitening("recoloring matrix is singular".into()))?;
    Ok(symmetrize(&(ai * omega_eps * ai.transpose())))
}

fn lag_mean(u: &[f64], t: usize, k: usize) -> f64 {
    u[t - k..t].iter().sum::<f64>() / k as f64
}

/// Fits the restricted HVAR, returning its residuals and lag-sum matrix.
pub fn fit_hvar(psi: &[f64], v: &[f64]) -> Result<(Vec<[f64; 2]>, HvarCoefficients)> {
    let t = psi.len();
    let start = 12;
    let n = t - start;
    let mut x1 = Vec::with_capacity(n * 4);
    let mut y1 = Vec::with_capacity(n);
    let mut x2 = Vec::with_capacity(n * 3);
    let mut y2 = Vec::with_capacity(n);
    for s in start..t {
        x1.extend_from_slice(&[1.0, psi[s - 1], lag_mean(psi, s, 3), lag_mean(psi, s, 12)]);
        y1.push(psi[s]);
        x2.extend_from_slice(&[1.0, psi[s - 1], v[s - 1]]);
        y2.push(v[s]);
    }
    let e1 = ols(&x1, 4, &y1).map_err(|e| Error::Prewhitening(format!("score equation: {e}")))?;
    let e2 = ols(&x2, 3, &y2).map_err(|e| Error::Prewhitening(format!("innovation equation: {e}")))?;
    let phi_sum = Matrix2::new(
        e1.coef[1] + e1.coef[2] + e1.coef[3],
        0.0,
        e2.coef[1],
        e2.coef[2],
    );
    let resid = e1
        .residuals
        .iter()
        .zip(&e2.residuals)
        .map(|(&a, &b)| [a, b])
        .collect();
    Ok((resid, HvarCoefficients { phi_sum }))
}

/// Plain (non-prewhitened) long-run covariance of `(psi, v)`.
pub fn plain_omega(psi: &[f64], v: &[f64]) -> Result<Omega> {
    check_pair(psi, v)?;
    let u: Vec<[f64; 2]> = psi.iter().zip(v).map(|(&a, &b)| [a, b]).collect();
    let (matrix, floored) = floor_eigenvalues(&qs_hac(&u), EIGEN_FLOOR);
    Ok(Omega { matrix, floored })
}

fn check_pair(psi: &[f64], v: &[f64]) -> Result<()> {
    if psi.len() != v.len() {
        return Err(Error::Alignment("score and innovation lengths differ".into()));
    }
    if psi.len() < 30 {
        return Err(Error::SampleTooSmall {
            required: 30,
            actual: psi.len(),
        });
    }
    if stats::variance_pop(v) <= 0.0 {
        return Err(Error::Degenerate("predictor innovations have zero variance".into()));
    }
    Ok(())
}

/// HVAR-prewhitened long-run covariance of `(psi, v)`.
pub fn hvar_prewhitened_omega(psi: &[f64], v: &[f64]) -> Result<Omega> {
    check_pair(psi, v)?;
    let (resid, coef) = fit_hvar(psi, v)?;
    let eps = qs_hac(&resid);
    let raw = recolor(&eps, &coef.phi_sum)?;
    let (matrix, floored) = floor_eigenvalues(&raw, EIGEN_FLOOR);
    Ok(Omega { matrix, floored })
}

/// One-sided long-run autocovariance `(omega_v^2 - E v^2) / 2`.
pub fn lambda_vv(v: &[f64], omega_v2: f64) -> f64 {
    0.5 * (omega_v2 - stats::variance_pop(v))
}

/// Residuals of an OLS AR(1) with intercept for the predictor, aligned with
/// the response: entry `t` is the innovation of `x_t` given `x_{t-1}`.
pub fn predictor_innovations(data: &PredictiveDataset) -> Result<Vec<f64>> {
    let design: Vec<f64> = data.x_lag().iter().flat_map(|&x| [1.0, x]).collect();
    Ok(ols(&design, 2, data.x_level())?.residuals)
}

/// All long-run objects for a fitted quantile regression.
pub fn long_run_estimates(
    fit: &QuantileFit,
    data: &PredictiveDataset,
    kernel: Kernel,
    m: usize,
) -> Result<LongRunEstimates> {
    let v = predictor_innovations(data)?;
    let mut warning = None;
    let (omega, prewhitened) = match hvar_prewhitened_omega(&fit.psi, &v) {
        Ok(o) => (o, true),
        Err(Error::Prewhitening(msg)) => {
            warning = Some(format!("prewhitening skipped: {msg}"));
            (plain_omega(&fit.psi, &v)?, false)
        }
        Err(e) => return Err(e),
    };
    let mut floor_events = usize::from(omega.floored);
    let (sigma, sig_floored) = floor_eigenvalues(&sigma_hat(fit, data, kernel, m)?, EIGEN_FLOOR);
    floor_events += usize::from(sig_floored);
    let dfz = delta_fz(fit, data);
    let om = omega.matrix;
    Ok(LongRunEstimates {
        omega_psi2: om[(0, 0)],
        omega_psi_v: om[(0, 1)],
        omega_v2: om[(1, 1)],
        delta_tau: omega.correlation(),
        lambda_vv: lambda_vv(&v, om[(1, 1)]),
        sigma_hat: to_array(&sigma),
        delta_fz_hat: to_array(&dfz),
        bandwidth_m: m,
        kernel_name: kernel.name().to_string(),
        prewhitened,
        floor_events,
        warning,
    })
}

pub(crate) fn to_array(m: &Matrix2<f64>) -> [[f64; 2]; 2] {
    [[m[(0, 0)], m[(0, 1)]], [m[(1, 0)], m[(1, 1)]]]
}

pub(crate) fn from_array(a: &[[f64; 2]; 2]) -> Matrix2<f64> {
    Matrix2::new(a[0][0], a[0][1], a[1][0], a[1][1])
}

/// t-statistic for the quantile slope.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HacTStat {
    pub t_value: f64,
    pub se: f64,
    pub tau: f64,
    pub gamma1_hat: f64,
}

fn sandwich_t(fit: &QuantileFit, t: usize, dfz: &Matrix2<f64>, meat: &Matrix2<f64>) -> Result<HacTStat> {
    let di = dfz
        .try_inverse()
        .filter(|_| dfz.determinant().abs() > 1e-300)
        .ok_or_else(|| Error::Sandwich("density-weighted design matrix is singular".into()))?;
    let v = di * meat * di / t as f64;
    let var = v[(1, 1)];
    if !(var > 0.0) || !var.is_finite() {
        return Err(Error::Sandwich(format!("slope variance is {var}")));
    }
    let se = var.sqrt();
    Ok(HacTStat {
        t_value: fit.gamma1 / se,
        se,
        tau: fit.tau,
        gamma1_hat: fit.gamma1,
    })
}

/// HAC t with `se = sqrt([T^{-1} Delta^{-1} Sigma Delta^{-1}]_{22})`.
pub fn hac_t(fit: &QuantileFit, data: &PredictiveDataset, lr: &LongRunEstimates) -> Result<HacTStat> {
    sandwich_t(fit, data.len(), &from_array(&lr.delta_fz_hat), &from_array(&lr.sigma_hat))
}

/// Non-HAC t: the score covariance is replaced by `tau (1 - tau) T^{-1} sum z z'`.
pub fn iid_t(fit: &QuantileFit, data: &PredictiveDataset) -> Result<HacTStat> {
    let t = data.len() as f64;
    let mut zz = Matrix2::zeros();
    for &x in data.x_lag() {
        zz[(0, 0)] += 1.0;
        zz[(0, 1)] += x;
        zz[(1, 1)] += x * x;
    }
    zz[(1, 0)] = zz[(0, 1)];
    let meat = zz * (fit.tau * (1.0 - fit.tau) / t);
    sandwich_t(fit, data.len(), &delta_fz(fit, data), &meat)
}
