//! Dense numeric substrate shared by the rest of the crate.

mod cholesky;
mod eigen;
mod matrix;
mod rng;

pub(crate) use cholesky::extend_cholesky_row;
pub use cholesky::{factor_rank, psd_cholesky, PIVOT_TOL};
pub use eigen::{top_eigvec, top_eigvec_from, DEFAULT_EIG_TOL, MAX_POWER_ITERS};
pub use matrix::{dot, norm2, norm_inf, CorrelationMatrix, Matrix, PsdMatrix};
pub use rng::RngHandle;

use crate::error::Result;

/// One draw of `N(0, S)` as `L ξ` with `L = psd_cholesky(S)`.
pub fn gaussian_vector(s: &PsdMatrix, rng: &mut RngHandle) -> Result<Vec<f64>> {
    let l = psd_cholesky(s)?;
    Ok(gaussian_from_factor(&l, rng))
}

/// `L ξ` for a precomputed lower-triangular factor.
pub fn gaussian_from_factor(l: &Matrix, rng: &mut RngHandle) -> Vec<f64> {
    let xi = rng.normals(l.cols());
    (0..l.rows()).map(|i| dot(l.row(i), &xi)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_covariance_gives_zero() {
        let s = PsdMatrix::new(Matrix::zeros(3, 3)).unwrap();
        let g = gaussian_vector(&s, &mut RngHandle::new(1, 0)).unwrap();
        assert_eq!(g, vec![0.0; 3]);
    }

    #[test]
    fn identity_covariance_lln() {
        let n = 3;
        let s = PsdMatrix::new(Matrix::identity(n)).unwrap();
        let l = psd_cholesky(&s).unwrap();
        let mut rng = RngHandle::new(2, 0);
        let draws = 100_000;
        let mut cov = Matrix::zeros(n, n);
        for _ in 0..draws {
            let g = gaussian_from_factor(&l, &mut rng);
            cov.add_outer(&g, &g);
        }
        let cov = cov.scale(1.0 / draws as f64);
        assert!(cov.max_abs_diff(&Matrix::identity(n)) < 0.05);
    }

    #[test]
    fn signing_coupling_gives_equal_magnitudes() {
        let sigma = [1.0, -1.0, -1.0, 1.0, 1.0];
        let s = PsdMatrix::new(Matrix::outer(&sigma, &sigma)).unwrap();
        let mut rng = RngHandle::new(3, 0);
        for _ in 0..100 {
            let g = gaussian_vector(&s, &mut rng).unwrap();
            let xi = g[0] * sigma[0];
            for (gj, sj) in g.iter().zip(sigma) {
                assert!((gj - xi * sj).abs() < 1e-12);
            }
        }
    }
}
