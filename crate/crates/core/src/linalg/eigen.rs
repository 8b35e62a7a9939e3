use super::matrix::{dot, norm2, PsdMatrix};
use super::rng::RngHandle;
use crate::error::{Error, Result};

pub const MAX_POWER_ITERS: usize = 10_000;
pub const DEFAULT_EIG_TOL: f64 = 1e-9;

/// Dominant eigenvector by power iteration, started from a Gaussian vector.
pub fn top_eigvec(s: &PsdMatrix, tol: f64, rng: &mut RngHandle) -> Result<Vec<f64>> {
    let start = rng.normals(s.dim());
    top_eigvec_from(s, tol, &start)
}

/// Power iteration from a caller-chosen start vector. Stops once
/// `|S v - λ v| <= tol λ` with `λ = vᵀ S v`.
pub fn top_eigvec_from(s: &PsdMatrix, tol: f64, start: &[f64]) -> Result<Vec<f64>> {
    let a = s.matrix();
    if start.len() != s.dim() {
        return Err(Error::DimMismatch("start vector length".into()));
    }
    let n0 = norm2(start);
    if n0 == 0.0 || a.max_abs() == 0.0 {
        return Err(Error::NoConvergence(0));
    }
    let mut v: Vec<f64> = start.iter().map(|x| x / n0).collect();
    for _ in 0..MAX_POWER_ITERS {
        let sv = a.matvec(&v)?;
        let lambda = dot(&v, &sv);
        let resid = sv.iter().zip(&v).map(|(p, q)| (p - lambda * q).powi(2)).sum::<f64>().sqrt();
        if lambda > 0.0 && resid <= tol * lambda {
            return Ok(v);
        }
        let norm = norm2(&sv);
        if norm == 0.0 {
            // start vector lies in the kernel
            return Err(Error::NoConvergence(0));
        }
        v = sv.into_iter().map(|x| x / norm).collect();
    }
    Err(Error::NoConvergence(MAX_POWER_ITERS))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Matrix;

    #[test]
    fn diagonal_picks_largest() {
        let s = PsdMatrix::new(Matrix::from_rows(&[vec![3.0, 0.0], vec![0.0, 1.0]]).unwrap()).unwrap();
        let v = top_eigvec(&s, 1e-9, &mut RngHandle::new(0, 0)).unwrap();
        assert!((v[0].abs() - 1.0).abs() < 1e-9);
        assert!(v[1].abs() < 1e-9);
    }

    #[test]
    fn rank_one_recovers_direction() {
        let c = vec![1.0, -2.0, 0.5, 3.0];
        let s = PsdMatrix::new_unchecked_psd(Matrix::outer(&c, &c)).unwrap();
        let v = top_eigvec(&s, 1e-9, &mut RngHandle::new(3, 0)).unwrap();
        let cn = norm2(&c);
        let align = dot(&v, &c) / cn;
        assert!((align.abs() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_matrix_fails() {
        let s = PsdMatrix::new_unchecked_psd(Matrix::zeros(2, 2)).unwrap();
        assert!(top_eigvec(&s, 1e-9, &mut RngHandle::new(0, 0)).is_err());
    }

    #[test]
    fn degenerate_top_eigenspace_does_not_converge() {
        // [[0,1],[1,0]] has eigenvalues ±1; iteration oscillates for generic starts
        let s = PsdMatrix::new_unchecked_psd(Matrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap()).unwrap();
        assert!(matches!(top_eigvec_from(&s, 1e-9, &[1.0, 0.0]), Err(Error::NoConvergence(_))));
    }
}
