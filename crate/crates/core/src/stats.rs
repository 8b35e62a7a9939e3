//! Goodness-of-fit and summary statistics used by the experiments.

use serde::{Deserialize, Serialize};

use crate::chi::normal_cdf;
use crate::error::{Error, Result};
use crate::linalg::{Matrix, PsdMatrix};

pub const KS_MIN_SAMPLES: usize = 10;
pub const COV_MIN_SAMPLES: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    pub statistic: f64,
    pub n: usize,
    pub p_value: f64,
    pub level: f64,
    pub pass: bool,
}

impl KsResult {
    fn new(statistic: f64, n_eff: f64, n: usize, level: f64) -> Self {
        let p_value = kolmogorov_sf(ks_lambda(statistic, n_eff));
        KsResult { statistic, n, p_value, level, pass: p_value >= level }
    }
}

fn ks_lambda(d: f64, n_eff: f64) -> f64 {
    let sq = n_eff.sqrt();
    (sq + 0.12 + 0.11 / sq) * d
}

/// Survival function of the Kolmogorov distribution, `P(K > λ)`.
pub fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    if lambda < 1.18 {
        // theta-function form converges fast for small λ
        let pi2 = std::f64::consts::PI.powi(2);
        let c = -pi2 / (8.0 * lambda * lambda);
        let mut sum = 0.0;
        for k in 1..=50 {
            let odd = (2 * k - 1) as f64;
            sum += (c * odd * odd).exp();
        }
        let cdf = (2.0 * std::f64::consts::PI).sqrt() / lambda * sum;
        (1.0 - cdf).clamp(0.0, 1.0)
    } else {
        let mut sum = 0.0;
        let mut sign = 1.0;
        for k in 1..=100 {
            let kf = k as f64;
            let term = (-2.0 * kf * kf * lambda * lambda).exp();
            sum += sign * term;
            if term < 1e-18 {
                break;
            }
            sign = -sign;
        }
        (2.0 * sum).clamp(0.0, 1.0)
    }
}

/// One-sample Kolmogorov–Smirnov test with the asymptotic p-value.
pub fn ks_test(samples: &[f64], cdf: impl Fn(f64) -> f64, level: f64) -> Result<KsResult> {
    let n = samples.len();
    if n < KS_MIN_SAMPLES {
        return Err(Error::TooFewSamples { needed: KS_MIN_SAMPLES, got: n });
    }
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let nf = n as f64;
    let mut d = 0.0f64;
    for (i, &x) in xs.iter().enumerate() {
        let f = cdf(x);
        d = d.max(f - i as f64 / nf).max((i + 1) as f64 / nf - f);
    }
    Ok(KsResult::new(d, nf, n, level))
}

/// Two-sample Kolmogorov–Smirnov test.
pub fn ks_two_sample(a: &[f64], b: &[f64], level: f64) -> Result<KsResult> {
    let (na, nb) = (a.len(), b.len());
    if na.min(nb) < KS_MIN_SAMPLES {
        return Err(Error::TooFewSamples { needed: KS_MIN_SAMPLES, got: na.min(nb) });
    }
    let mut xa = a.to_vec();
    let mut xb = b.to_vec();
    xa.sort_by(f64::total_cmp);
    xb.sort_by(f64::total_cmp);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < na && j < nb {
        let x = xa[i].min(xb[j]);
        while i < na && xa[i] <= x {
            i += 1;
        }
        while j < nb && xb[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na as f64 - j as f64 / nb as f64).abs());
    }
    let n_eff = (na * nb) as f64 / (na + nb) as f64;
    Ok(KsResult::new(d, n_eff, na + nb, level))
}

pub fn normal_ks(samples: &[f64], var: f64, level: f64) -> Result<KsResult> {
    ks_test(samples, |x| normal_cdf(x, var), level)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CovTest {
    pub pass: bool,
    pub max_deviation: f64,
    pub tol: f64,
}

pub fn sample_mean(samples: &[Vec<f64>]) -> Vec<f64> {
    let d = samples.first().map_or(0, |s| s.len());
    let mut mean = vec![0.0; d];
    for s in samples {
        for (m, x) in mean.iter_mut().zip(s) {
            *m += x;
        }
    }
    let n = samples.len().max(1) as f64;
    mean.iter_mut().for_each(|m| *m /= n);
    mean
}

/// Unbiased sample covariance.
pub fn sample_covariance(samples: &[Vec<f64>]) -> Matrix {
    let d = samples.first().map_or(0, |s| s.len());
    let mean = sample_mean(samples);
    let mut cov = Matrix::zeros(d, d);
    let mut centered = vec![0.0; d];
    for s in samples {
        for ((c, x), m) in centered.iter_mut().zip(s).zip(&mean) {
            *c = x - m;
        }
        cov.add_outer(&centered, &centered);
    }
    cov.scale(1.0 / (samples.len().max(2) - 1) as f64)
}

/// Entrywise comparison of the sample covariance with `target`.
pub fn cov_test(samples: &[Vec<f64>], target: &PsdMatrix, tol: f64) -> Result<CovTest> {
    if samples.len() < COV_MIN_SAMPLES {
        return Err(Error::TooFewSamples { needed: COV_MIN_SAMPLES, got: samples.len() });
    }
    if samples.iter().any(|s| s.len() != target.dim()) {
        return Err(Error::DimMismatch("sample dimension differs from target".into()));
    }
    let dev = sample_covariance(samples).max_abs_diff(target.matrix());
    Ok(CovTest { pass: dev <= tol, max_deviation: dev, tol })
}

/// Two-sided p-value for `k` successes out of `n` fair coin flips (normal approximation).
pub fn sign_test_p_value(k: usize, n: usize) -> f64 {
    if n == 0 {
        return 1.0;
    }
    let z = (k as f64 - n as f64 / 2.0) / (n as f64 / 4.0).sqrt();
    2.0 * (1.0 - normal_cdf(z.abs(), 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

/// Ordinary least squares `y ≈ slope·x + intercept`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> LinearFit {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = x.iter().zip(y).map(|(a, b)| (b - slope * a - intercept).powi(2)).sum();
    let r_squared = if syy == 0.0 { 1.0 } else { 1.0 - ss_res / syy };
    LinearFit { slope, intercept, r_squared }
}

pub fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Mean and standard error of the mean.
pub fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::RngHandle;

    #[test]
    fn kolmogorov_sf_known_points() {
        // P(K > 1.3581) ≈ 0.05, P(K > 1.6276) ≈ 0.01
        assert!((kolmogorov_sf(1.358_1) - 0.05).abs() < 1e-4);
        assert!((kolmogorov_sf(1.627_6) - 0.01).abs() < 1e-4);
        assert!((kolmogorov_sf(0.5) - 0.963_945).abs() < 1e-5);
        // both series agree where they meet
        let lo = {
            let pi2 = std::f64::consts::PI.powi(2);
            let s: f64 = (1..=50).map(|k| (-pi2 * ((2 * k - 1) as f64).powi(2) / (8.0 * 1.18f64.powi(2))).exp()).sum();
            1.0 - (2.0 * std::f64::consts::PI).sqrt() / 1.18 * s
        };
        assert!((lo - kolmogorov_sf(1.18)).abs() < 1e-12);
    }

    #[test]
    fn too_few_samples() {
        assert!(matches!(ks_test(&[0.1; 5], |x| x, 0.01), Err(Error::TooFewSamples { .. })));
    }

    #[test]
    fn self_consistency_meta_trials() {
        let mut passes = 0;
        let meta = 100;
        for t in 0..meta {
            let mut rng = RngHandle::new(100, t);
            let xs = rng.normals(5000);
            if normal_ks(&xs, 1.0, 0.01).unwrap().pass {
                passes += 1;
            }
        }
        assert!(passes >= 98, "{passes}");
    }

    #[test]
    fn separation() {
        let mut rng = RngHandle::new(101, 0);
        let xs = rng.normals(5000);
        let res = normal_ks(&xs, 4.0, 0.01).unwrap();
        assert!(!res.pass);
        assert!(res.statistic > 0.0 && res.statistic <= 1.0);
    }

    #[test]
    fn two_sample_same_and_different() {
        let mut rng = RngHandle::new(102, 0);
        let a = rng.normals(4000);
        let b = rng.normals(3000);
        assert!(ks_two_sample(&a, &b, 0.01).unwrap().pass);
        let c: Vec<f64> = rng.normals(3000).into_iter().map(|x| x + 0.3).collect();
        assert!(!ks_two_sample(&a, &c, 0.01).unwrap().pass);
    }

    #[test]
    fn cov_test_examples() {
        let mut rng = RngHandle::new(103, 0);
        let samples: Vec<Vec<f64>> = (0..10_000).map(|_| rng.normals(3)).collect();
        let id = PsdMatrix::new(Matrix::identity(3)).unwrap();
        assert!(cov_test(&samples, &id, 0.05).unwrap().pass);
        let two = PsdMatrix::new(Matrix::identity(3).scale(2.0)).unwrap();
        assert!(!cov_test(&samples, &two, 0.05).unwrap().pass);
        let zeros = vec![vec![0.0; 3]; 100];
        let zero = PsdMatrix::new(Matrix::zeros(3, 3)).unwrap();
        assert!(cov_test(&zeros, &zero, 0.05).unwrap().pass);
        assert!(cov_test(&zeros[..50], &zero, 0.05).is_err());
    }

    #[test]
    fn linear_fit_exact_line() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let y = [3.0, 5.0, 7.0, 9.0];
        let f = linear_fit(&x, &y);
        assert!((f.slope - 2.0).abs() < 1e-12);
        assert!((f.intercept - 1.0).abs() < 1e-12);
        assert!((f.r_squared - 1.0).abs() < 1e-12);
    }

    #[test]
    fn sign_test() {
        assert!(sign_test_p_value(5000, 10_000) > 0.99);
        assert!(sign_test_p_value(5300, 10_000) < 0.01);
    }
}
