//! Fully modified slope estimator, the Bonferroni scan over a first-stage
//! interval for `c`, and the switching rule that falls back to the HAC t-test
//! when the predictor is far from a unit root.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::longrun::{self, HacTStat, Kernel, LongRunEstimates};
use crate::quantreg::{self, QuantileFit};
use crate::series::PredictiveDataset;
use crate::stats::normal_quantile;
use crate::tables::{SwitchThresholds, TableSet, Tail};
use crate::unitroot::{self, DfGlsResult, LocalToUnityCI, C_MAX};

/// Default spacing of the Bonferroni grid in `c`.
pub const GRID_STEP: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FmPoint {
    pub c_star: f64,
    pub gamma1_plus: f64,
    pub se_plus: f64,
    pub t_plus: f64,
}

/// The pieces of the FM display that do not depend on `c*`. Since only
/// `phi = 1 + c*/T` moves, `gamma1_plus` and `t_plus` are affine in `c*`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FmFunctional {
    pub gamma1_hat: f64,
    /// `omega_psi delta_tau / (omega_v f_hat)`.
    pub ratio: f64,
    /// `sum (x^mu_{t-1})^2`.
    pub sxx: f64,
    /// `sum x^mu_{t-1} x_t`.
    pub sxy: f64,
    pub t: usize,
    pub lambda_vv: f64,
    pub se_plus: f64,
}

impl FmFunctional {
    pub fn new(fit: &QuantileFit, data: &PredictiveDataset, lr: &LongRunEstimates) -> Result<Self> {
        let xm = data.x_lag_demeaned();
        let sxx: f64 = xm.iter().map(|v| v * v).sum();
        if !(sxx > 0.0) {
            return Err(Error::Degenerate("demeaned lagged predictor has no variation".into()));
        }
        let sxy: f64 = xm.iter().zip(data.x_level()).map(|(a, b)| a * b).sum();
        let delta = lr.delta_tau;
        if !(delta.abs() < 1.0) {
            return Err(Error::Degenerate(format!(
                "|delta_tau| = {} leaves no conditional variance for the FM standard error",
                delta.abs()
            )));
        }
        if !(fit.f_hat > 0.0) {
            return Err(Error::Degenerate("estimated sparsity density is zero".into()));
        }
        let w_psi = lr.omega_psi2.sqrt();
        let w_v = lr.omega_v2.sqrt();
        let ratio = if delta == 0.0 { 0.0 } else { w_psi * delta / (w_v * fit.f_hat) };
        let se_plus = (w_psi * (1.0 - delta * delta).sqrt() / fit.f_hat) / sxx.sqrt();
        if !(se_plus > 0.0 && se_plus.is_finite()) {
            return Err(Error::Degenerate(format!("FM standard error is {se_plus}")));
        }
        Ok(Self {
            gamma1_hat: fit.gamma1,
            ratio,
            sxx,
            sxy,
            t: data.len(),
            lambda_vv: lr.lambda_vv,
            se_plus,
        })
    }

    /// `sum x^mu_{t-1}(x_t - phi x_{t-1}) - T lambda_vv`.
    pub fn functional(&self, c_star: f64) -> f64 {
        let phi = 1.0 + c_star / self.t as f64;
        self.sxy - phi * self.sxx - self.t as f64 * self.lambda_vv
    }

    pub fn point(&self, c_star: f64) -> FmPoint {
        let gamma1_plus = if self.ratio == 0.0 {
            self.gamma1_hat
        } else {
            self.gamma1_hat - self.ratio / self.sxx * self.functional(c_star)
        };
        FmPoint {
            c_star,
            gamma1_plus,
            se_plus: self.se_plus,
            t_plus: gamma1_plus / self.se_plus,
        }
    }

    /// Points on a uniform grid over `[c_lower, min(c_upper, C_MAX)]` with
    /// spacing at most `step`; both endpoints are included.
    pub fn scan(&self, c_lower: f64, c_upper: f64, step: f64) -> Vec<FmPoint> {
        scan_grid(c_lower, c_upper, step).into_iter().map(|c| self.point(c)).collect()
    }
}

fn scan_grid(c_lower: f64, c_upper: f64, step: f64) -> Vec<f64> {
    let hi = c_upper.min(C_MAX);
    let lo = c_lower.min(hi);
    if hi == lo {
        return vec![lo];
    }
    let n = ((hi - lo) / step).ceil().max(1.0) as usize;
    (0..=n)
        .map(|k| if k == n { hi } else { lo + (hi - lo) * k as f64 / n as f64 })
        .collect()
}

/// FM estimate, standard error and t-ratio at `c_star`.
pub fn fm_point(fit: &QuantileFit, data: &PredictiveDataset, lr: &LongRunEstimates, c_star: f64) -> Result<FmPoint> {
    Ok(FmFunctional::new(fit, data, lr)?.point(c_star))
}

/// FM points across the first-stage interval.
pub fn bonferroni_scan(
    fit: &QuantileFit,
    data: &PredictiveDataset,
    lr: &LongRunEstimates,
    ci_c: &LocalToUnityCI,
    grid_step: f64,
) -> Result<Vec<FmPoint>> {
    if !(grid_step > 0.0) {
        return Err(Error::domain("grid step must be positive"));
    }
    Ok(FmFunctional::new(fit, data, lr)?.scan(ci_c.c_lower, ci_c.c_upper, grid_step))
}

pub fn min_t_plus(points: &[FmPoint]) -> f64 {
    points.iter().map(|p| p.t_plus).fold(f64::INFINITY, f64::min)
}

pub fn max_t_plus(points: &[FmPoint]) -> f64 {
    points.iter().map(|p| p.t_plus).fold(f64::NEG_INFINITY, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    BonferroniOnly,
    Intersection,
    TOnly,
}

impl Branch {
    /// Branch for a first-stage interval against a switching threshold.
    pub fn select(ci: &LocalToUnityCI, threshold: f64) -> Self {
        if ci.c_lower > threshold {
            Branch::BonferroniOnly
        } else if ci.c_upper < threshold {
            Branch::TOnly
        } else {
            Branch::Intersection
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Branch::BonferroniOnly => "bonferroni_only",
            Branch::Intersection => "intersection",
            Branch::TOnly => "t_only",
        }
    }
}

/// Confidence bound contributed by one tail: the lower bound for the right
/// tail and the upper bound for the left. `z_fm` applies to the FM points,
/// `z_t` to the HAC t.
pub fn tail_bound(tail: Tail, branch: Branch, points: &[FmPoint], hac: &HacTStat, z_fm: f64, z_t: f64) -> f64 {
    let fm = match tail {
        Tail::Right => points
            .iter()
            .map(|p| p.gamma1_plus - z_fm * p.se_plus)
            .fold(f64::INFINITY, f64::min),
        Tail::Left => points
            .iter()
            .map(|p| p.gamma1_plus + z_fm * p.se_plus)
            .fold(f64::NEG_INFINITY, f64::max),
    };
    let t = match tail {
        Tail::Right => hac.gamma1_hat - z_t * hac.se,
        Tail::Left => hac.gamma1_hat + z_t * hac.se,
    };
    match (branch, tail) {
        (Branch::BonferroniOnly, _) => fm,
        (Branch::TOnly, _) => t,
        (Branch::Intersection, Tail::Right) => fm.min(t),
        (Branch::Intersection, Tail::Left) => fm.max(t),
    }
}

/// `(gamma1_lower, gamma1_upper)` from the two tails. The right tail uses
/// `critical_right` for the HAC t and `z` otherwise.
pub fn gamma1_ci(
    right: (Branch, &[FmPoint]),
    left: (Branch, &[FmPoint]),
    hac: &HacTStat,
    z: f64,
    critical_right: f64,
) -> (f64, f64) {
    (
        tail_bound(Tail::Right, right.0, right.1, hac, z, critical_right),
        tail_bound(Tail::Left, left.0, left.1, hac, z, z),
    )
}

/// Decision for one tail.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TailDecision {
    pub branch: Branch,
    pub reject: bool,
    pub ci_c: LocalToUnityCI,
    pub alpha1: f64,
    /// Extreme FM t over the interval: min for the right tail, max for the left.
    pub fm_extreme_t: f64,
    pub fm_reject: bool,
    pub t_reject: bool,
    pub critical_t: f64,
}

/// Settings of the switching test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SwitchingOptions {
    pub thresholds: SwitchThresholds,
    pub grid_step: f64,
    pub kernel: Kernel,
    /// Score HAC truncation; `None` uses `floor(1.3 T^{1/3})`.
    pub lag: Option<usize>,
    /// DF-GLS lag cap; `None` uses the Schwert rule.
    pub dfgls_max_lags: Option<usize>,
}

impl Default for SwitchingOptions {
    fn default() -> Self {
        Self {
            thresholds: SwitchThresholds::default(),
            grid_step: GRID_STEP,
            kernel: Kernel::Parzen,
            lag: None,
            dfgls_max_lags: None,
        }
    }
}

impl SwitchingOptions {
    /// Two-sided level at which the critical values are taken. The
    /// first-stage calibration instead runs the test at `alpha2 - epsilon`.
    pub fn level(&self) -> f64 {
        self.thresholds.alpha2
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SwitchingFMResult {
    pub tau: f64,
    pub gamma1_hat: f64,
    pub right: TailDecision,
    pub left: TailDecision,
    pub reject_right: bool,
    pub reject_left: bool,
    /// FM points over the right-tail interval.
    pub bonferroni_points: Vec<FmPoint>,
    pub bonferroni_points_left: Vec<FmPoint>,
    pub hac_t: HacTStat,
    pub iid_t: HacTStat,
    pub dfgls: DfGlsResult,
    pub long_run: LongRunEstimates,
    /// HAC t critical value of the right tail, `z_{1 - alpha2/2}(c_bar_L)`.
    pub critical_right: f64,
    /// Normal critical value `z_{1 - alpha2/2}`.
    pub critical_normal: f64,
    pub gamma1_lower: f64,
    pub gamma1_upper: f64,
    pub thresholds: SwitchThresholds,
    pub level: f64,
    pub warnings: Vec<String>,
}

impl SwitchingFMResult {
    /// Two-sided rejection indicator (sum of the one-sided ones).
    pub fn reject_two_sided(&self) -> bool {
        self.reject_right || self.reject_left
    }
}

/// Everything the switching rule needs from the data, computed once.
#[derive(Debug, Clone)]
pub struct Ingredients {
    pub fit: QuantileFit,
    pub long_run: LongRunEstimates,
    pub hac_t: HacTStat,
    pub iid_t: HacTStat,
    pub dfgls: DfGlsResult,
    pub fm: FmFunctional,
}

impl Ingredients {
    pub fn compute(data: &PredictiveDataset, tau: f64, opts: &SwitchingOptions) -> Result<Self> {
        let fit = quantreg::solve_qr(data, tau)?;
        let m = opts.lag.unwrap_or_else(|| longrun::default_lag(data.len()));
        let long_run = longrun::long_run_estimates(&fit, data, opts.kernel, m)?;
        let hac_t = longrun::hac_t(&fit, data, &long_run)?;
        let iid_t = longrun::iid_t(&fit, data)?;
        let levels = data.predictor_levels();
        let max_lags = opts
            .dfgls_max_lags
            .unwrap_or_else(|| unitroot::default_max_lags(levels.len()));
        let dfgls = unitroot::dfgls(&levels, max_lags)?;
        let fm = FmFunctional::new(&fit, data, &long_run)?;
        Ok(Self {
            fit,
            long_run,
            hac_t,
            iid_t,
            dfgls,
            fm,
        })
    }
}

/// Runs the switching-FM test of `H0: gamma1(tau) = 0` in both tails.
pub fn switching_test(
    data: &PredictiveDataset,
    tau: f64,
    tables: &TableSet,
    opts: &SwitchingOptions,
) -> Result<SwitchingFMResult> {
    let ing = Ingredients::compute(data, tau, opts)?;
    decide(ing, tables, opts)
}

/// Applies the switching rule to precomputed ingredients.
pub fn decide(ing: Ingredients, tables: &TableSet, opts: &SwitchingOptions) -> Result<SwitchingFMResult> {
    if !(opts.grid_step > 0.0) {
        return Err(Error::domain("grid step must be positive"));
    }
    let th = opts.thresholds;
    let level = opts.level();
    let upper_level = round6(1.0 - level / 2.0);
    let z = normal_quantile(upper_level);
    let critical_right = tables.z.z_percentile(th.c_bar_l, -1.0, upper_level)?;
    let (a_left, a_right) = tables.alpha1.lookup_alpha1(ing.long_run.delta_tau)?;
    let ci_right = unitroot::stock_ci(ing.dfgls.t_stat, a_right, &tables.dfgls)?;
    let ci_left = unitroot::stock_ci(ing.dfgls.t_stat, a_left, &tables.dfgls)?;

    let pts_r = ing.fm.scan(ci_right.c_lower, ci_right.c_upper, opts.grid_step);
    let pts_l = ing.fm.scan(ci_left.c_lower, ci_left.c_upper, opts.grid_step);
    let br = Branch::select(&ci_right, th.c_bar_l);
    let bl = Branch::select(&ci_left, th.c_under_l);
    let (mut lower, mut upper) = gamma1_ci((br, &pts_r), (bl, &pts_l), &ing.hac_t, z, critical_right);

    let mut warnings: Vec<String> = ing.long_run.warning.iter().cloned().collect();
    if lower > upper {
        // Opposite tails disagree; report the hull, which rejects neither.
        warnings.push("tails gave crossing bounds; no rejection reported".into());
        std::mem::swap(&mut lower, &mut upper);
    }
    let fm_min = min_t_plus(&pts_r);
    let fm_max = max_t_plus(&pts_l);
    let right = TailDecision {
        branch: br,
        reject: lower > 0.0,
        ci_c: ci_right,
        alpha1: a_right,
        fm_extreme_t: fm_min,
        fm_reject: fm_min >= z,
        t_reject: ing.hac_t.t_value >= critical_right,
        critical_t: critical_right,
    };
    let left = TailDecision {
        branch: bl,
        reject: upper < 0.0,
        ci_c: ci_left,
        alpha1: a_left,
        fm_extreme_t: fm_max,
        fm_reject: fm_max <= -z,
        t_reject: ing.hac_t.t_value <= -z,
        critical_t: z,
    };
    Ok(SwitchingFMResult {
        tau: ing.fit.tau,
        gamma1_hat: ing.fit.gamma1,
        reject_right: right.reject,
        reject_left: left.reject,
        right,
        left,
        bonferroni_points: pts_r,
        bonferroni_points_left: pts_l,
        hac_t: ing.hac_t,
        iid_t: ing.iid_t,
        dfgls: ing.dfgls,
        long_run: ing.long_run,
        critical_right,
        critical_normal: z,
        gamma1_lower: lower,
        gamma1_upper: upper,
        thresholds: th,
        level,
        warnings,
    })
}

fn round6(x: f64) -> f64 {
    (x * 1e6).round() / 1e6
}
