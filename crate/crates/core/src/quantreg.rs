//! Linear quantile regression by a Frisch-Newton interior point method,
//! followed by a vertex polish step, plus the kernel estimate of the
//! sparsity density at zero.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{solve_small, solve_spd_in_place};
use crate::series::PredictiveDataset;
use crate::stats;

const STEP_DAMPING: f64 = 0.9995;
pub const GAP_TOLERANCE: f64 = 1e-8;
pub const MAX_ITERATIONS: usize = 200;

/// Estimated conditional quantile line and the by-products needed for
/// inference.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QuantileFit {
    pub tau: f64,
    pub gamma0: f64,
    pub gamma1: f64,
    pub residuals: Vec<f64>,
    pub psi: Vec<f64>,
    pub f_hat: f64,
    pub bandwidth_h: f64,
    pub objective: f64,
    pub iterations: usize,
}

fn check_tau(tau: f64) -> Result<()> {
    if tau > 0.0 && tau < 1.0 {
        Ok(())
    } else {
        Err(Error::domain(format!("quantile level {tau} outside (0, 1)")))
    }
}

/// Check loss `rho_tau(u) = u (tau - 1{u < 0})`.
pub fn check_loss(u: f64, tau: f64) -> Result<f64> {
    check_tau(tau)?;
    Ok(rho(u, tau))
}

#[inline]
fn rho(u: f64, tau: f64) -> f64 {
    if u < 0.0 {
        u * (tau - 1.0)
    } else {
        u * tau
    }
}

/// Quantile score; an exactly zero residual maps to `tau`.
#[inline]
pub fn psi(u: f64, tau: f64) -> f64 {
    if u < 0.0 {
        tau - 1.0
    } else {
        tau
    }
}

/// Total check loss of the residuals of `coef` on a row-major design.
pub fn objective(design: &[f64], p: usize, y: &[f64], coef: &[f64], tau: f64) -> f64 {
    y.iter()
        .enumerate()
        .map(|(i, &yi)| {
            let fit: f64 = (0..p).map(|j| design[i * p + j] * coef[j]).sum();
            rho(yi - fit, tau)
        })
        .sum()
}

/// Raw solution of a quantile regression on an arbitrary small design.
#[derive(Debug, Clone)]
pub struct RqSolution {
    pub coef: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
}

/// Minimizes `sum_i rho_tau(y_i - x_i'b)` over `b` for a row-major design
/// with `p` columns.
pub fn rq_fit(design: &[f64], p: usize, y: &[f64], tau: f64) -> Result<RqSolution> {
    check_tau(tau)?;
    let n = y.len();
    if design.len() != n * p || p == 0 {
        return Err(Error::domain("design size mismatch"));
    }
    if n < p {
        return Err(Error::SampleTooSmall {
            required: p,
            actual: n,
        });
    }
    let (ipm_coef, iterations, converged, gap) = frisch_newton(design, p, y, tau)?;
    let ipm_obj = objective(design, p, y, &ipm_coef, tau);

    let polished = polish_vertex(design, p, y, tau, &ipm_coef);
    let (coef, obj, optimal) = match polished {
        Some((c, o, kkt)) if o <= ipm_obj * (1.0 + 1e-12) + 1e-300 => (c, o, kkt),
        _ => (ipm_coef.clone(), ipm_obj, false),
    };
    if !converged && !optimal {
        return Err(Error::Convergence {
            iterations,
            gap,
            best: coef,
        });
    }
    Ok(RqSolution {
        coef,
        objective: obj,
        iterations,
    })
}

// Bounded-variable dual LP: max y'a s.t. X'a = (1 - tau) X'1, 0 <= a <= 1,
// solved with the Mehrotra predictor-corrector steps of Portnoy and Koenker.
// The primal coefficients are the negated equality multipliers.
fn frisch_newton(
    design: &[f64],
    p: usize,
    y: &[f64],
    tau: f64,
) -> Result<(Vec<f64>, usize, bool, f64)> {
    let n = y.len();
    let row = |i: usize| &design[i * p..(i + 1) * p];
    let c: Vec<f64> = y.iter().map(|v| -v).collect();

    let mut x = vec![1.0 - tau; n];
    let mut s = vec![tau; n];

    // Least-squares start for the multipliers.
    let mut m = vec![0.0; p * p];
    let mut g = vec![0.0; p];
    for i in 0..n {
        let r = row(i);
        for a in 0..p {
            g[a] += r[a] * c[i];
            for b in 0..p {
                m[a * p + b] += r[a] * r[b];
            }
        }
    }
    if !solve_spd_in_place(&mut m, p, &mut g) {
        return Err(Error::RankDeficient("design cross-product is singular".into()));
    }
    let mut dual = g;

    let mut resid: Vec<f64> = (0..n)
        .map(|i| {
            let r = c[i] - dot(row(i), &dual);
            if r == 0.0 {
                r + 0.001
            } else {
                r
            }
        })
        .collect();
    let mut z: Vec<f64> = resid.iter().map(|&r| r.max(0.0)).collect();
    let mut w: Vec<f64> = z.iter().zip(&resid).map(|(z, r)| z - r).collect();

    let mut q = vec![0.0; n];
    let mut dx = vec![0.0; n];
    let mut ds = vec![0.0; n];
    let mut dz = vec![0.0; n];
    let mut dw = vec![0.0; n];
    let mut gap = duality_gap(&z, &x, &w, &s);
    let mut it = 0;
    let tol = |gap: f64, coef: &[f64]| {
        let obj = objective(design, p, y, coef, tau);
        gap <= GAP_TOLERANCE * (1.0 + obj.abs())
    };
    let neg = |d: &[f64]| d.iter().map(|v| -v).collect::<Vec<f64>>();
    while !tol(gap, &neg(&dual)) && it < MAX_ITERATIONS {
        it += 1;
        // Affine scaling direction.
        for i in 0..n {
            q[i] = 1.0 / (z[i] / x[i] + w[i] / s[i]);
            resid[i] = z[i] - w[i];
        }
        let mut m = vec![0.0; p * p];
        let mut rhs = vec![0.0; p];
        for i in 0..n {
            let r = row(i);
            for a in 0..p {
                rhs[a] += q[i] * resid[i] * r[a];
                for b in 0..p {
                    m[a * p + b] += q[i] * r[a] * r[b];
                }
            }
        }
        let m_saved = m.clone();
        let mut dy = rhs.clone();
        if !solve_spd_in_place(&mut m, p, &mut dy) {
            break;
        }
        for i in 0..n {
            dx[i] = q[i] * (dot(row(i), &dy) - resid[i]);
            ds[i] = -dx[i];
            dz[i] = -z[i] * (dx[i] / x[i] + 1.0);
            dw[i] = -w[i] * (ds[i] / s[i] + 1.0);
        }
        let mut fp = (STEP_DAMPING * bound(&x, &dx).min(bound(&s, &ds))).min(1.0);
        let mut fd = (STEP_DAMPING * bound(&w, &dw).min(bound(&z, &dz))).min(1.0);

        if fp.min(fd) < 1.0 {
            // Centering-corrector step.
            let mu0 = duality_gap(&z, &x, &w, &s);
            let mut gnew = 0.0;
            for i in 0..n {
                gnew += (z[i] + fd * dz[i]) * (x[i] + fp * dx[i])
                    + (w[i] + fd * dw[i]) * (s[i] + fp * ds[i]);
            }
            let mu = mu0 * (gnew / mu0).powi(3) / (2.0 * n as f64);
            let mut rhs2 = rhs.clone();
            let mut xi = vec![0.0; n];
            let mut dxdz = vec![0.0; n];
            let mut dsdw = vec![0.0; n];
            for i in 0..n {
                dxdz[i] = dx[i] * dz[i];
                dsdw[i] = ds[i] * dw[i];
                xi[i] = mu * (1.0 / x[i] - 1.0 / s[i]);
                let extra = q[i] * (dxdz[i] - dsdw[i] - xi[i]);
                let r = row(i);
                for a in 0..p {
                    rhs2[a] += extra * r[a];
                }
            }
            let mut m2 = m_saved;
            let mut dy2 = rhs2;
            if !solve_spd_in_place(&mut m2, p, &mut dy2) {
                break;
            }
            dy = dy2;
            for i in 0..n {
                dx[i] = q[i] * (dot(row(i), &dy) + xi[i] - resid[i] - dxdz[i] + dsdw[i]);
                ds[i] = -dx[i];
                dz[i] = mu / x[i] - z[i] - z[i] / x[i] * dx[i] - dxdz[i];
                dw[i] = mu / s[i] - w[i] - w[i] / s[i] * ds[i] - dsdw[i];
            }
            fp = (STEP_DAMPING * bound(&x, &dx).min(bound(&s, &ds))).min(1.0);
            fd = (STEP_DAMPING * bound(&w, &dw).min(bound(&z, &dz))).min(1.0);
        }
        for i in 0..n {
            x[i] += fp * dx[i];
            s[i] += fp * ds[i];
            w[i] += fd * dw[i];
            z[i] += fd * dz[i];
        }
        for a in 0..p {
            dual[a] += fd * dy[a];
        }
        gap = duality_gap(&z, &x, &w, &s);
    }
    let coef = neg(&dual);
    let converged = tol(gap, &coef);
    Ok((coef, it, converged, gap))
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn duality_gap(z: &[f64], x: &[f64], w: &[f64], s: &[f64]) -> f64 {
    let mut g = 0.0;
    for i in 0..x.len() {
        g += z[i] * x[i] + w[i] * s[i];
    }
    g
}

fn bound(v: &[f64], dv: &[f64]) -> f64 {
    let mut b = 1e20f64;
    for (x, d) in v.iter().zip(dv) {
        if *d < 0.0 {
            b = b.min(-x / d);
        }
    }
    b
}

// Looks for the optimal basic solution among observations nearly
// interpolated by the interior point iterate. Ties across optimal vertices
// are broken by averaging them, which stays on the optimal face.
fn polish_vertex(
    design: &[f64],
    p: usize,
    y: &[f64],
    tau: f64,
    coef: &[f64],
) -> Option<(Vec<f64>, f64, bool)> {
    let n = y.len();
    let resid: Vec<f64> = (0..n)
        .map(|i| y[i] - dot(&design[i * p..(i + 1) * p], coef))
        .collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| resid[a].abs().total_cmp(&resid[b].abs()));

    for extra in [4usize, 10] {
        let k = (p + extra).min(n);
        let cand = &order[..k];
        let mut best: Option<f64> = None;
        let mut tied: Vec<(Vec<f64>, Vec<usize>)> = Vec::new();
        for subset in combinations(k, p) {
            let basis: Vec<usize> = subset.iter().map(|&j| cand[j]).collect();
            let a: Vec<f64> = basis
                .iter()
                .flat_map(|&i| design[i * p..(i + 1) * p].iter().copied())
                .collect();
            let b: Vec<f64> = basis.iter().map(|&i| y[i]).collect();
            let Some(beta) = solve_small(&a, p, &b) else {
                continue;
            };
            let obj = objective(design, p, y, &beta, tau);
            let tol = 1e-12 * (1.0 + obj.abs());
            match best {
                Some(bo) if obj > bo + tol => {}
                Some(bo) if obj >= bo - tol => tied.push((beta, basis)),
                _ => {
                    best = Some(obj);
                    tied.retain(|(bt, _)| objective(design, p, y, bt, tau) <= obj + tol);
                    tied.push((beta, basis));
                }
            }
        }
        let Some(_) = best else { continue };
        let (first, basis) = tied[0].clone();
        let optimal = kkt_holds(design, p, y, tau, &first, &basis);
        let mut avg = vec![0.0; p];
        for (b, _) in &tied {
            for j in 0..p {
                avg[j] += b[j] / tied.len() as f64;
            }
        }
        let avg_obj = objective(design, p, y, &avg, tau);
        let first_obj = objective(design, p, y, &first, tau);
        let chosen = if avg_obj <= first_obj * (1.0 + 1e-12) + 1e-300 {
            (avg, avg_obj)
        } else {
            (first, first_obj)
        };
        if optimal || extra == 10 {
            return Some((chosen.0, chosen.1, optimal));
        }
    }
    None
}

// Subgradient optimality of a basic solution: the basis multipliers that
// balance the non-basic scores must lie in [tau - 1, tau].
fn kkt_holds(design: &[f64], p: usize, y: &[f64], tau: f64, coef: &[f64], basis: &[usize]) -> bool {
    let n = y.len();
    let mut g = vec![0.0; p];
    for i in 0..n {
        if basis.contains(&i) {
            continue;
        }
        let r = &design[i * p..(i + 1) * p];
        let ps = psi(y[i] - dot(r, coef), tau);
        for j in 0..p {
            g[j] -= ps * r[j];
        }
    }
    // X_B' a = g
    let mut at = vec![0.0; p * p];
    for (row_idx, &i) in basis.iter().enumerate() {
        for j in 0..p {
            at[j * p + row_idx] = design[i * p + j];
        }
    }
    match solve_small(&at, p, &g) {
        Some(a) => a.iter().all(|&v| v >= tau - 1.0 - 1e-9 && v <= tau + 1e-9),
        None => false,
    }
}

fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(k);
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    rec(0, n, k, &mut cur, &mut out);
    out
}

/// Sample `tau`-quantile as the minimizer of the check loss with an
/// intercept only.
pub fn rq_intercept(y: &[f64], tau: f64) -> Result<f64> {
    let design = vec![1.0; y.len()];
    Ok(rq_fit(&design, 1, y, tau)?.coef[0])
}

/// Fits `Q_tau(y_t | x_{t-1}) = gamma0 + gamma1 x_{t-1}`.
pub fn solve_qr(data: &PredictiveDataset, tau: f64) -> Result<QuantileFit> {
    check_tau(tau)?;
    let x = data.x_lag();
    let y = data.y();
    if stats::variance_pop(x) <= 0.0 {
        return Err(Error::RankDeficient("lagged predictor is constant".into()));
    }
    let design: Vec<f64> = x.iter().flat_map(|&v| [1.0, v]).collect();
    let sol = rq_fit(&design, 2, y, tau)?;
    let (gamma0, gamma1) = (sol.coef[0], sol.coef[1]);
    let scale = y.iter().fold(1.0f64, |a, v| a.max(v.abs()));
    let residuals: Vec<f64> = y
        .iter()
        .zip(x)
        .map(|(&yi, &xi)| {
            let r = yi - gamma0 - gamma1 * xi;
            if r.abs() <= 1e-11 * scale {
                0.0
            } else {
                r
            }
        })
        .collect();
    let psi: Vec<f64> = residuals.iter().map(|&u| psi(u, tau)).collect();
    let (f_hat, bandwidth_h) = match silverman_bandwidth(&residuals) {
        Ok(h) => (density_at_zero(&residuals, h)?, h),
        Err(e) => return Err(e),
    };
    Ok(QuantileFit {
        tau,
        gamma0,
        gamma1,
        residuals,
        psi,
        f_hat,
        bandwidth_h,
        objective: sol.objective,
        iterations: sol.iterations,
    })
}

/// Rule-of-thumb bandwidth `0.9 min(sd, IQR/1.34) T^{-1/5}`; if the IQR
/// collapses to zero the standard deviation alone is used.
pub fn silverman_bandwidth(residuals: &[f64]) -> Result<f64> {
    let n = residuals.len();
    if n < 2 {
        return Err(Error::SampleTooSmall {
            required: 2,
            actual: n,
        });
    }
    let sd = stats::std_dev(residuals);
    let iqr = stats::iqr(residuals) / 1.34;
    if sd <= 0.0 || !sd.is_finite() {
        return Err(Error::Degenerate("residuals have zero dispersion".into()));
    }
    let spread = if iqr > 0.0 { sd.min(iqr) } else { sd };
    Ok(0.9 * spread * (n as f64).powf(-0.2))
}

/// Gaussian-kernel density estimate of the residual density at zero.
pub fn density_at_zero(residuals: &[f64], h: f64) -> Result<f64> {
    if !(h > 0.0) {
        return Err(Error::domain(format!("bandwidth must be positive, got {h}")));
    }
    if residuals.is_empty() {
        return Err(Error::domain("no residuals"));
    }
    let s: f64 = residuals.iter().map(|u| stats::normal_pdf(u / h)).sum();
    let f = s / (residuals.len() as f64 * h);
    if f > 0.0 {
        Ok(f)
    } else {
        Err(Error::Degenerate("density estimate underflowed to zero".into()))
    }
}
