//! Dense least-squares helpers for the small regressions used by the
//! unit-root and prewhitening code.

use nalgebra::{DMatrix, DVector, Matrix2};

use crate::error::{Error, Result};

/// Ordinary least squares result.
#[derive(Debug, Clone)]
pub struct OlsFit {
    pub coef: Vec<f64>,
    pub residuals: Vec<f64>,
    /// `(X'X)^{-1}` for standard errors.
    pub xtx_inv: DMatrix<f64>,
    pub rss: f64,
}

impl OlsFit {
    /// Classical standard error of coefficient `j` using `rss / (n - k)`.
    pub fn std_error(&self, j: usize) -> f64 {
        let n = self.residuals.len();
        let k = self.coef.len();
        let s2 = self.rss / (n - k) as f64;
        (s2 * self.xtx_inv[(j, j)]).sqrt()
    }
}

/// OLS of `y` on the columns of `x` (n rows, row-major `n * k`).
pub fn ols(x: &[f64], k: usize, y: &[f64]) -> Result<OlsFit> {
    let n = y.len();
    if x.len() != n * k {
        return Err(Error::domain("design size mismatch"));
    }
    if n <= k {
        return Err(Error::SampleTooSmall {
            required: k + 1,
            actual: n,
        });
    }
    let design = DMatrix::from_row_slice(n, k, x);
    let yv = DVector::from_column_slice(y);
    let xtx = design.transpose() * &design;
    let xty = design.transpose() * &yv;
    let chol = xtx
        .clone()
        .cholesky()
        .ok_or_else(|| Error::RankDeficient("regressor cross-product is singular".into()))?;
    let coef = chol.solve(&xty);
    let xtx_inv = chol.inverse();
    let fitted = &design * &coef;
    let residuals: Vec<f64> = y.iter().zip(fitted.iter()).map(|(a, b)| a - b).collect();
    let rss = residuals.iter().map(|e| e * e).sum();
    Ok(OlsFit {
        coef: coef.iter().copied().collect(),
        residuals,
        xtx_inv,
        rss,
    })
}

/// Solves `m a = b` for a symmetric positive definite `p x p` matrix stored
/// row-major; `m` and `b` are overwritten. Returns false when not SPD.
pub(crate) fn solve_spd_in_place(m: &mut [f64], p: usize, b: &mut [f64]) -> bool {
    for j in 0..p {
        let mut d = m[j * p + j];
        for k in 0..j {
            d -= m[j * p + k] * m[j * p + k];
        }
        if d <= 0.0 || !d.is_finite() {
            return false;
        }
        let d = d.sqrt();
        m[j * p + j] = d;
        for i in j + 1..p {
            let mut s = m[i * p + j];
            for k in 0..j {
                s -= m[i * p + k] * m[j * p + k];
            }
            m[i * p + j] = s / d;
        }
    }
    for i in 0..p {
        let mut s = b[i];
        for k in 0..i {
            s -= m[i * p + k] * b[k];
        }
        b[i] = s / m[i * p + i];
    }
    for i in (0..p).rev() {
        let mut s = b[i];
        for k in i + 1..p {
            s -= m[k * p + i] * b[k];
        }
        b[i] = s / m[i * p + i];
    }
    true
}

/// Solves a small general linear system by Gaussian elimination with
/// partial pivoting. Returns `None` when singular.
pub(crate) fn solve_small(a: &[f64], p: usize, b: &[f64]) -> Option<Vec<f64>> {
    let mut m = a.to_vec();
    let mut r = b.to_vec();
    for col in 0..p {
        let piv = (col..p).max_by(|&i, &j| m[i * p + col].abs().total_cmp(&m[j * p + col].abs()))?;
        if m[piv * p + col].abs() < 1e-300 {
            return None;
        }
        if piv != col {
            for k in 0..p {
                m.swap(col * p + k, piv * p + k);
            }
            r.swap(col, piv);
        }
        for i in col + 1..p {
            let f = m[i * p + col] / m[col * p + col];
            for k in col..p {
                m[i * p + k] -= f * m[col * p + k];
            }
            r[i] -= f * r[col];
        }
    }
    let mut x = vec![0.0; p];
    for i in (0..p).rev() {
        let mut s = r[i];
        for k in i + 1..p {
            s -= m[i * p + k] * x[k];
        }
        x[i] = s / m[i * p + i];
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}

/// Symmetrizes a 2x2 matrix.
pub fn symmetrize(m: &Matrix2<f64>) -> Matrix2<f64> {
    (m + m.transpose()) * 0.5
}

/// Floors the eigenvalues of a symmetric 2x2 matrix at `rel * trace`.
/// Returns the repaired matrix and whether any eigenvalue was raised.
pub fn floor_eigenvalues(m: &Matrix2<f64>, rel: f64) -> (Matrix2<f64>, bool) {
    let s = symmetrize(m);
    let floor = rel * s.trace().abs().max(f64::MIN_POSITIVE);
    let eig = s.symmetric_eigen();
    let mut raised = false;
    let vals = eig.eigenvalues.map(|l| {
        if l < floor {
            raised = true;
            floor
        } else {
            l
        }
    });
    if !raised {
        return (s, false);
    }
    let v = eig.eigenvectors;
    let out = v * Matrix2::from_diagonal(&vals) * v.transpose();
    (symmetrize(&out), true)
}
