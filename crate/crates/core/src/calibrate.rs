//! First-stage level calibration by simulating the feasible switching test
//! on large samples: `y_t = u_t`, bivariate normal `(u_t, v_t)` with
//! correlation `delta`, median regression.

use std::collections::BTreeMap;

use crate::dgp::{simulate_with_rng, DgpSpec};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::fmtest::{FmFunctional, Ingredients, SwitchingOptions};
use crate::rng::{stream, StreamKind};
use crate::stats::{normal_pdf, normal_quantile};
use crate::tables::{
    alpha1_grid, calibration_bound, fmt_sig6, select_alpha1, CriticalValueTable, TableKind, Tail, FORMAT_VERSION,
};
use crate::unitroot::invert_curves;

/// Quantile level of the calibration regressions.
pub const CALIBRATION_TAU: f64 = 0.5;

/// `delta_tau` implied by innovation correlation `delta` for Gaussian
/// errors: `delta phi(q_tau) / sqrt(tau (1 - tau))`.
pub fn implied_delta_tau(delta: f64, tau: f64) -> f64 {
    delta * normal_pdf(normal_quantile(tau)) / (tau * (1.0 - tau)).sqrt()
}

/// The statistics of one simulated sample that the switching rule uses.
#[derive(Debug, Clone, Copy)]
pub struct RepSummary {
    pub t_dfgls: f64,
    pub hac_t: f64,
    pub fm: FmFunctional,
}

/// Simulated samples for every `(delta, c)` cell, `[delta][c][rep]`.
#[derive(Debug, Clone)]
pub struct FeasibleDraws {
    pub deltas: Vec<f64>,
    pub c_grid: Vec<f64>,
    pub sim_t: usize,
    pub seed: u64,
    pub reps: Vec<Vec<Vec<RepSummary>>>,
    /// Replications whose estimation failed; excluded from the rates.
    pub failures: usize,
}

pub fn simulate_feasible(
    deltas: &[f64],
    c_grid: &[f64],
    sim_t: usize,
    reps: usize,
    seed: u64,
    opts: &SwitchingOptions,
    exec: Exec,
) -> Result<FeasibleDraws> {
    if sim_t < 100 || reps == 0 {
        return Err(Error::domain("calibration needs sim_T >= 100 and reps >= 1"));
    }
    let mut out = Vec::with_capacity(deltas.len());
    let mut failures = 0;
    for (di, &delta) in deltas.iter().enumerate() {
        if !(delta.abs() < 1.0) {
            return Err(Error::domain(format!("calibration needs |delta| < 1, got {delta}")));
        }
        let mut row = Vec::with_capacity(c_grid.len());
        for (ci, &c) in c_grid.iter().enumerate() {
            let spec = DgpSpec::null(sim_t, c, delta);
            let cell = exec.map(reps, |r| {
                let mut rng = stream(seed, StreamKind::Calibration, di as u64, ci as u64, r as u64);
                let data = simulate_with_rng(&spec, &mut rng).ok()?;
                let ing = Ingredients::compute(&data, CALIBRATION_TAU, opts).ok()?;
                Some(RepSummary {
                    t_dfgls: ing.dfgls.t_stat,
                    hac_t: ing.hac_t.t_value,
                    fm: ing.fm,
                })
            });
            failures += cell.iter().filter(|r| r.is_none()).count();
            row.push(cell.into_iter().flatten().collect());
        }
        out.push(row);
    }
    Ok(FeasibleDraws {
        deltas: deltas.to_vec(),
        c_grid: c_grid.to_vec(),
        sim_t,
        seed,
        reps: out,
        failures,
    })
}

fn round6(x: f64) -> f64 {
    (x * 1e6).round() / 1e6
}

/// One-tailed switching decision from the interval `(cl, cu)`; the FM
/// extreme is taken at the endpoints since `t_plus` is affine in `c*`.
#[allow(clippy::too_many_arguments)]
pub fn tail_rejects(tail: Tail, rep: &RepSummary, cl: f64, cu: f64, threshold: f64, z: f64, cv_t: f64) -> bool {
    let a = rep.fm.point(cl).t_plus;
    let b = rep.fm.point(cu.min(crate::unitroot::C_MAX)).t_plus;
    let (fm, t) = match tail {
        Tail::Right => (a.min(b) >= z, rep.hac_t >= cv_t),
        Tail::Left => (a.max(b) <= -z, rep.hac_t <= -cv_t),
    };
    if cl > threshold {
        fm
    } else if cu < threshold {
        t
    } else {
        fm && t
    }
}

/// Rejection frequencies `[delta][alpha1][c]` for one tail.
pub fn feasible_rejection_surfaces(
    draws: &FeasibleDraws,
    tail: Tail,
    alphas: &[f64],
    opts: &SwitchingOptions,
    dfgls: &CriticalValueTable,
    z_table: &CriticalValueTable,
    exec: Exec,
) -> Result<Vec<Vec<Vec<f64>>>> {
    let th = opts.thresholds;
    // Calibration runs the test at the reduced level alpha2 - epsilon.
    let upper = round6(1.0 - opts.thresholds.alpha2_tilde() / 2.0);
    let z = normal_quantile(upper);
    let (threshold, cv_t) = match tail {
        Tail::Right => (th.c_bar_l, z_table.z_percentile(th.c_bar_l, -1.0, upper)?),
        Tail::Left => (th.c_under_l, z),
    };
    let curves: Vec<(Vec<f64>, Vec<f64>)> = alphas
        .iter()
        .map(|&a| Ok((dfgls.dfgls_curve(round6(a / 2.0))?, dfgls.dfgls_curve(round6(1.0 - a / 2.0))?)))
        .collect::<Result<_>>()?;
    let per_alpha = exec.map(alphas.len(), |ai| {
        let (lo, hi) = &curves[ai];
        draws
            .reps
            .iter()
            .map(|row| {
                row.iter()
                    .map(|cell| {
                        let hits = cell
                            .iter()
                            .filter(|rep| {
                                let (cl, cu, _, _) = invert_curves(rep.t_dfgls, &dfgls.c_grid, lo, hi);
                                tail_rejects(tail, rep, cl, cu, threshold, z, cv_t)
                            })
                            .count();
                        hits as f64 / cell.len().max(1) as f64
                    })
                    .collect::<Vec<f64>>()
            })
            .collect::<Vec<_>>()
    });
    Ok((0..draws.deltas.len())
        .map(|di| per_alpha.iter().map(|pa| pa[di].clone()).collect())
        .collect())
}

/// Output of the feasible calibration.
#[derive(Debug, Clone)]
pub struct FeasibleCalibration {
    pub table: CriticalValueTable,
    /// Rows whose calibration failed, as `(delta_tau, tail)`.
    pub failures: Vec<(f64, Tail)>,
    /// Worst-case rejection over the calibration region at the chosen
    /// level, `[delta][left, right]`.
    pub worst: Vec<[f64; 2]>,
}

/// Picks, for every innovation correlation in `draws`, the largest level
/// on the `0.01..0.98` grid whose rejection stays at or below
/// `(alpha2 - epsilon)/2` for every simulated `c`. Rows are keyed by the
/// implied `delta_tau`.
pub fn calibrate_from_feasible(
    draws: &FeasibleDraws,
    opts: &SwitchingOptions,
    dfgls: &CriticalValueTable,
    z_table: &CriticalValueTable,
    reps: usize,
    exec: Exec,
) -> Result<FeasibleCalibration> {
    let alphas = alpha1_grid();
    let bound = calibration_bound(opts.thresholds.alpha2_tilde() / 2.0, reps);
    let nd = draws.deltas.len();
    let keys: Vec<f64> = draws
        .deltas
        .iter()
        .map(|&d| round6(implied_delta_tau(d, CALIBRATION_TAU)))
        .collect();
    let mut order: Vec<usize> = (0..nd).collect();
    order.sort_by(|&a, &b| keys[a].total_cmp(&keys[b]));
    let mut values = vec![f64::NAN; nd * 2];
    let mut worst = vec![[f64::NAN; 2]; nd];
    let mut failures = Vec::new();
    for (slot, tail) in [(0, Tail::Left), (1, Tail::Right)] {
        let surfaces = feasible_rejection_surfaces(draws, tail, &alphas, opts, dfgls, z_table, exec)?;
        for (pos, &di) in order.iter().enumerate() {
            match select_alpha1(&surfaces[di], &alphas, bound) {
                Some((a, w)) => {
                    values[2 * pos + slot] = a;
                    worst[pos][slot] = w;
                }
                None => failures.push((keys[di], tail)),
            }
        }
    }
    let mut extra = BTreeMap::new();
    extra.insert("tool".into(), format!("switchfm {}", env!("CARGO_PKG_VERSION")));
    extra.insert("columns".into(), "delta_tau,alpha1_left,alpha1_right".into());
    extra.insert("method".into(), "feasible".into());
    extra.insert("tau".into(), fmt_sig6(CALIBRATION_TAU));
    extra.insert(
        "delta".into(),
        order.iter().map(|&i| fmt_sig6(draws.deltas[i])).collect::<Vec<_>>().join(";"),
    );
    extra.insert("c_bar_L".into(), fmt_sig6(opts.thresholds.c_bar_l));
    extra.insert("c_under_L".into(), fmt_sig6(opts.thresholds.c_under_l));
    extra.insert("alpha2".into(), fmt_sig6(opts.thresholds.alpha2));
    extra.insert("epsilon".into(), fmt_sig6(opts.thresholds.epsilon));
    extra.insert(
        "q_c".into(),
        draws.c_grid.iter().map(|c| fmt_sig6(*c)).collect::<Vec<_>>().join(";"),
    );
    extra.insert("failed_reps".into(), draws.failures.to_string());
    extra.insert("z_table".into(), z_table.id());
    extra.insert("dfgls_table".into(), dfgls.id());
    extra.insert("source".into(), "generated".into());
    let table = CriticalValueTable {
        kind: TableKind::Alpha1Levels,
        c_grid: Vec::new(),
        delta_grid: order.iter().map(|&i| keys[i]).collect(),
        alpha_grid: Vec::new(),
        values,
        sim_t: draws.sim_t,
        replications: reps,
        seed: draws.seed,
        version: FORMAT_VERSION,
        extra,
    };
    table.validate()?;
    Ok(FeasibleCalibration { table, failures, worst })
}

/// Simulates and calibrates in one step.
#[allow(clippy::too_many_arguments)]
pub fn calibrate_alpha1_feasible(
    deltas: &[f64],
    c_grid: &[f64],
    sim_t: usize,
    reps: usize,
    seed: u64,
    opts: &SwitchingOptions,
    dfgls: &CriticalValueTable,
    z_table: &CriticalValueTable,
    exec: Exec,
) -> Result<FeasibleCalibration> {
    let draws = simulate_feasible(deltas, c_grid, sim_t, reps, seed, opts, exec)?;
    calibrate_from_feasible(&draws, opts, dfgls, z_table, reps, exec)
}

/// Innovation correlations of the published first-stage table.
pub fn paper_delta_grid() -> Vec<f64> {
    let mut d = vec![-0.999];
    d.extend((1..20).map(|k| round6(-1.0 + 0.05 * k as f64)));
    d
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tables::PAPER_ALPHA1;

    #[test]
    fn implied_correlation_matches_published_keys() {
        for (row, d) in PAPER_ALPHA1.iter().zip(paper_delta_grid()) {
            assert!((implied_delta_tau(d, 0.5) - row.0).abs() < 1e-3, "{d}");
        }
    }
}
