//! Dense linear algebra helpers on top of nalgebra.
//!
//! Singularity is judged on relative pivots: a pivot smaller than
//! [`PIVOT_TOL`] times the largest one is treated as zero.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

pub const PIVOT_TOL: f64 = 1e-12;

/// Least-squares solution of `x b = y` by column-pivoted QR.
///
/// Rank deficiency is reported with the names of the columns the pivoting
/// pushed past the numerical rank.
pub fn least_squares(x: &DMatrix<f64>, y: &DVector<f64>, names: &[String]) -> Result<DVector<f64>> {
    let (n, k) = x.shape();
    if k == 0 {
        return Ok(DVector::zeros(0));
    }
    if n < k {
        return Err(Error::RankDeficient {
            columns: names.iter().skip(n).cloned().collect(),
        });
    }
    let qr = x.clone().col_piv_qr();
    let r = qr.r();
    let p = qr.p();
    let mut order = DMatrix::from_fn(1, k, |_, j| j as f64);
    p.permute_columns(&mut order);

    let r0 = r[(0, 0)].abs();
    let deficient: Vec<String> = (0..k)
        .filter(|&j| r0 == 0.0 || r[(j, j)].abs() <= PIVOT_TOL * r0)
        .map(|j| names.get(order[(0, j)] as usize).cloned().unwrap_or_else(|| format!("#{}", order[(0, j)])))
        .collect();
    if !deficient.is_empty() {
        return Err(Error::RankDeficient { columns: deficient });
    }

    let qty = qr.q().transpose() * y;
    let mut z = r
        .solve_upper_triangular(&qty)
        .ok_or_else(|| Error::Singular("triangular factor".into()))?;
    p.inv_permute_rows(&mut z);
    Ok(z)
}

/// Cholesky factor of a symmetric positive-definite matrix, rejecting
/// numerically singular input.
pub fn spd_factor(m: &DMatrix<f64>, what: &str) -> Result<Cholesky<f64, Dyn>> {
    let chol = symmetrize(m)
        .cholesky()
        .ok_or_else(|| Error::Singular(format!("{what} is not positive definite")))?;
    let diag = chol.l_dirty().diagonal();
    let max = diag.iter().fold(0.0f64, |a, &b| a.max(b * b));
    let min = diag.iter().fold(f64::INFINITY, |a, &b| a.min(b * b));
    if !(max > 0.0) || min <= PIVOT_TOL * max {
        return Err(Error::Singular(format!(
            "{what} is numerically singular (relative pivot {:.3e})",
            if max > 0.0 { min / max } else { 0.0 }
        )));
    }
    Ok(chol)
}

pub fn spd_inverse(m: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    Ok(symmetrize(&spd_factor(m, what)?.inverse()))
}

pub fn spd_solve(m: &DMatrix<f64>, rhs: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    Ok(spd_factor(m, what)?.solve(rhs))
}

/// `(m + m') / 2`.
pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    symmetrize(m)
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// Sandwich `b * meat * b'`.
pub fn sandwich(bread: &DMatrix<f64>, meat: &DMatrix<f64>) -> DMatrix<f64> {
    symmetrize(&(bread * meat * bread.transpose()))
}

/// Squared Pearson correlation; 0 when either side is constant.
pub fn squared_correlation(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    let n = a.len() as f64;
    let ma = a.sum() / n;
    let mb = b.sum() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b.iter()) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        0.0
    } else {
        sab * sab / (saa * sbb)
    }
}

/// `1 - SSR/SST` with SST about the mean.
pub fn r_squared(actual: &DVector<f64>, fitted: &DVector<f64>) -> f64 {
    let n = actual.len() as f64;
    let mean = actual.sum() / n;
    let sst: f64 = actual.iter().map(|v| (v - mean).powi(2)).sum();
    let ssr: f64 = actual.iter().zip(fitted.iter()).map(|(a, f)| (a - f).powi(2)).sum();
    if sst == 0.0 {
        0.0
    } else {
        1.0 - ssr / sst
    }
}
