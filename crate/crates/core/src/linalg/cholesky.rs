use super::matrix::{Matrix, PsdMatrix};
use crate::error::{Error, Result};

/// Relative pivot threshold (scaled by trace/dim) below which a column is
/// treated as rank deficient.
pub const PIVOT_TOL: f64 = 1e-8;

/// Lower-triangular `L` with `S = L Lᵀ` for a possibly singular PSD `S`.
///
/// Columns whose pivot is at most `PIVOT_TOL * trace/dim` are set to zero, so
/// the number of strictly positive diagonal entries equals the numerical rank.
pub fn psd_cholesky(s: &PsdMatrix) -> Result<Matrix> {
    let a = s.matrix();
    let n = s.dim();
    let scale = if n == 0 { 0.0 } else { a.trace() / n as f64 };
    let tol = PIVOT_TOL * scale;
    let neg_tol = -PIVOT_TOL * scale.max(1.0);

    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let lj = l.row(j);
        let pivot = a[(j, j)] - lj[..j].iter().map(|x| x * x).sum::<f64>();
        if pivot < neg_tol || !pivot.is_finite() {
            return Err(Error::NotPsd { index: j, pivot });
        }
        if pivot <= tol {
            continue;
        }
        let d = pivot.sqrt();
        l[(j, j)] = d;
        for i in j + 1..n {
            let (ri, rj) = (l.row(i), l.row(j));
            let off = a[(i, j)] - ri[..j].iter().zip(&rj[..j]).map(|(x, y)| x * y).sum::<f64>();
            l[(i, j)] = off / d;
        }
    }
    Ok(l)
}

/// Number of strictly positive pivots of a factor returned by [`psd_cholesky`].
pub fn factor_rank(l: &Matrix) -> usize {
    (0..l.rows()).filter(|&i| l[(i, i)] > 0.0).count()
}

/// Row `t` of the Cholesky factor of an extended matrix, given the factor of
/// its leading block. `new_row` holds the first `t + 1` entries of row `t`
/// of the extended matrix; `scale` is the trace/dim used for the pivot
/// threshold.
pub(crate) fn extend_cholesky_row(l_prev: &[Vec<f64>], new_row: &[f64], scale: f64) -> Result<Vec<f64>> {
    let t = l_prev.len();
    debug_assert_eq!(new_row.len(), t + 1);
    let tol = PIVOT_TOL * scale;
    let neg_tol = -PIVOT_TOL * scale.max(1.0);
    let mut row = vec![0.0; t + 1];
    for k in 0..t {
        let d = l_prev[k][k];
        if d <= 0.0 {
            continue;
        }
        let acc: f64 = (0..k).map(|j| row[j] * l_prev[k][j]).sum();
        row[k] = (new_row[k] - acc) / d;
    }
    let pivot = new_row[t] - row[..t].iter().map(|x| x * x).sum::<f64>();
    if pivot < neg_tol || !pivot.is_finite() {
        return Err(Error::NotPsd { index: t, pivot });
    }
    if pivot > tol {
        row[t] = pivot.sqrt();
    }
    Ok(row)
}
