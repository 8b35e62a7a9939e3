//! Markov kernel on `R^r` with unit-length increments whose stationary law is
//! `N(0, σ² I_r)`.
//!
//! From a point `x` with `t = |x|` the chain jumps to a uniform point at
//! distance one that either keeps the radius (`S_x`, available for
//! `t >= 1/2`) or reflects it to `1 - t` (`S'_x`, available for `t <= 1`):
//!
//! * `t < 1/2`: always reflect;
//! * `1/2 <= t < 1`: reflect with probability `χ(1-t)/χ(t)`, else keep;
//! * `t >= 1`: always keep.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::chi::sigma_star;
use crate::error::{Error, Result};
use crate::linalg::{dot, norm2, RngHandle};

/// Redraw budget for the (probability zero) event of a Gaussian direction
/// parallel to `x`.
const MAX_PROJECTION_RETRIES: usize = 100;

/// `λ` values this close to ±1 are snapped so the single-point slice is hit exactly.
const LAMBDA_SNAP: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    r: usize,
    sigma2: f64,
}

impl KernelParams {
    pub fn new(r: usize, sigma2: f64) -> Result<Self> {
        let star = sigma_star(r)?;
        let threshold = star * star;
        if !sigma2.is_finite() || sigma2 < threshold - 1e-12 {
            return Err(Error::BadVariance { r, sigma2, threshold });
        }
        Ok(KernelParams { r, sigma2 })
    }

    pub fn r(&self) -> usize {
        self.r
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    /// Probability of reflecting to radius `1 - t` from radius `t`.
    pub fn reflect_probability(&self, t: f64) -> Result<f64> {
        if t < 0.5 {
            return Ok(1.0);
        }
        if t >= 1.0 {
            return Ok(0.0);
        }
        // ln χ(1-t) - ln χ(t); the normalizing constants cancel
        let ln_ratio = (self.r as f64 - 1.0) * ((1.0 - t) / t).ln() - (1.0 - 2.0 * t) / (2.0 * self.sigma2);
        let p = ln_ratio.exp();
        if p > 1.0 + 1e-9 {
            return Err(Error::BadVariance {
                r: self.r,
                sigma2: self.sigma2,
                threshold: 1.0 / (4.0 * (self.r as f64 - 1.0)),
            });
        }
        Ok(p.min(1.0))
    }
}

/// A point `x` and target radius `s`; the slice is `{y : |y - x| = 1, |y| = s}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliceSpec {
    pub x: Vec<f64>,
    pub s: f64,
}

pub fn slice_feasible(spec: &SliceSpec) -> bool {
    let t = norm2(&spec.x);
    let s2 = spec.s * spec.s;
    if !s2.is_finite() || spec.s < 0.0 {
        return false;
    }
    let slack = 1e-12 * (t + 1.0).powi(2).max(1.0);
    (t - 1.0).powi(2) - slack <= s2 && s2 <= (t + 1.0).powi(2) + slack
}

/// Uniform draw from the slice (sphere-slice sampler).
pub fn slice_sample(spec: &SliceSpec, rng: &mut RngHandle) -> Result<Vec<f64>> {
    let t = norm2(&spec.x);
    if !slice_feasible(spec) {
        return Err(Error::InfeasibleSlice { norm: t, radius: spec.s });
    }
    if t == 0.0 {
        return Ok(rng.unit_vector(spec.x.len()).into_iter().map(|v| v * spec.s).collect());
    }
    let lambda = (spec.s * spec.s - t * t - 1.0) / (2.0 * t);
    let delta = unit_increment(&spec.x, t, lambda, rng)?;
    Ok(spec.x.iter().zip(&delta).map(|(a, b)| a + b).collect())
}

/// Unit vector `δ = λ x/|x| + √(1-λ²) w` with `w` uniform on the unit sphere
/// of `x^⊥`. Requires `|x| = t > 0`.
fn unit_increment(x: &[f64], t: f64, lambda: f64, rng: &mut RngHandle) -> Result<Vec<f64>> {
    let mut lambda = lambda.clamp(-1.0, 1.0);
    if 1.0 - lambda.abs() < LAMBDA_SNAP {
        lambda = lambda.signum();
    }
    let xhat: Vec<f64> = x.iter().map(|v| v / t).collect();
    let perp = (1.0 - lambda * lambda).sqrt();
    if perp == 0.0 {
        return Ok(xhat.into_iter().map(|v| lambda * v).collect());
    }
    for _ in 0..MAX_PROJECTION_RETRIES {
        let g = rng.normals(x.len());
        let along = dot(&g, &xhat);
        let w: Vec<f64> = g.iter().zip(&xhat).map(|(gi, xi)| gi - along * xi).collect();
        let wn = norm2(&w);
        if wn > 1e-12 * norm2(&g) {
            return Ok(xhat.iter().zip(&w).map(|(xi, wi)| lambda * xi + perp * wi / wn).collect());
        }
    }
    Err(Error::DegenerateProjection)
}

/// Draws the increment `y - x` of one kernel step.
pub fn kernel_increment(params: &KernelParams, x: &[f64], rng: &mut RngHandle) -> Result<Vec<f64>> {
    if x.len() != params.r {
        return Err(Error::DimMismatch(format!("state has dimension {}, kernel rank {}", x.len(), params.r)));
    }
    let t = norm2(x);
    if t == 0.0 {
        return Ok(rng.unit_vector(params.r));
    }
    let p = params.reflect_probability(t)?;
    let reflect = p >= 1.0 || (p > 0.0 && rng.bernoulli(p));
    // reflecting to 1 - t forces λ = -1; keeping the radius gives λ = -1/(2t)
    let lambda = if reflect { -1.0 } else { -1.0 / (2.0 * t) };
    unit_increment(x, t, lambda, rng)
}

pub fn kernel_step(params: &KernelParams, x: &[f64], rng: &mut RngHandle) -> Result<Vec<f64>> {
    let d = kernel_increment(params, x, rng)?;
    Ok(x.iter().zip(&d).map(|(a, b)| a + b).collect())
}

/// Trajectory `x0, x1, ..., x_steps`.
pub fn run_chain(params: &KernelParams, x0: &[f64], steps: usize, rng: &mut RngHandle) -> Result<Vec<Vec<f64>>> {
    if x0.len() != params.r {
        return Err(Error::DimMismatch(format!("start has dimension {}, kernel rank {}", x0.len(), params.r)));
    }
    let mut traj = Vec::with_capacity(steps + 1);
    traj.push(x0.to_vec());
    for _ in 0..steps {
        let next = kernel_step(params, traj.last().unwrap(), rng)?;
        traj.push(next);
    }
    Ok(traj)
}

/// One point per line, coordinates separated by spaces.
pub fn write_trajectory<W: Write>(traj: &[Vec<f64>], mut out: W) -> Result<()> {
    for p in traj {
        let line: Vec<String> = p.iter().map(|v| format!("{v:?}")).collect();
        writeln!(out, "{}", line.join(" "))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chi::ChiLaw;

    fn dist(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
    }

    #[test]
    fn params_enforce_threshold() {
        assert!(KernelParams::new(2, 0.25).is_ok());
        assert!(matches!(KernelParams::new(2, 0.2), Err(Error::BadVariance { .. })));
        assert!(matches!(KernelParams::new(1, 1.0), Err(Error::RankTooSmall(1))));
    }

    #[test]
    fn feasibility_examples() {
        assert!(!slice_feasible(&SliceSpec { x: vec![3.0, 0.0], s: 0.5 }));
        assert!(slice_feasible(&SliceSpec { x: vec![1.0, 0.0], s: 1.0 }));
        assert!(slice_feasible(&SliceSpec { x: vec![0.0, 0.0], s: 1.0 }));
        assert!(!slice_feasible(&SliceSpec { x: vec![0.0, 0.0], s: 0.5 }));
        assert!(!slice_feasible(&SliceSpec { x: vec![1.0, 0.0], s: -1.0 }));
    }

    #[test]
    fn infeasible_slice_errors() {
        let spec = SliceSpec { x: vec![3.0, 0.0], s: 0.5 };
        assert!(matches!(slice_sample(&spec, &mut RngHandle::new(0, 0)), Err(Error::InfeasibleSlice { .. })));
    }

    #[test]
    fn reflected_point_is_unique() {
        let x = vec![0.3 * 0.6, 0.3 * 0.8];
        let y = slice_sample(&SliceSpec { x: x.clone(), s: 0.7 }, &mut RngHandle::new(1, 0)).unwrap();
        for (yi, xi) in y.iter().zip(&x) {
            assert!((yi - (-7.0 / 3.0) * xi).abs() < 1e-12);
        }
    }

    #[test]
    fn unit_radius_slice() {
        let x = vec![1.0, 0.0];
        let mut rng = RngHandle::new(2, 0);
        for _ in 0..100 {
            let y = slice_sample(&SliceSpec { x: x.clone(), s: 1.0 }, &mut rng).unwrap();
            assert!((y[0] - 0.5).abs() < 1e-12);
            assert!((y[1].abs() - 0.75f64.sqrt()).abs() < 1e-12);
            assert!((dist(&x, &y) - 1.0).abs() < 1e-9);
            assert!((norm2(&y) - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn zero_point_samples_sphere() {
        let mut rng = RngHandle::new(3, 0);
        let y = slice_sample(&SliceSpec { x: vec![0.0; 4], s: 1.0 }, &mut rng).unwrap();
        assert!((norm2(&y) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rotational_symmetry_about_axis() {
        let x = vec![2.0, 0.0];
        let mut rng = RngHandle::new(4, 0);
        let n = 10_000;
        let positive =
            (0..n).filter(|_| slice_sample(&SliceSpec { x: x.clone(), s: 2.0 }, &mut rng).unwrap()[1] > 0.0).count();
        let sd = (n as f64 * 0.25).sqrt();
        assert!((positive as f64 - n as f64 / 2.0).abs() < 3.0 * sd);
    }

    #[test]
    fn inner_branch_always_reflects() {
        let p = KernelParams::new(2, 0.25).unwrap();
        let mut rng = RngHandle::new(5, 0);
        for _ in 0..200 {
            let y = kernel_step(&p, &[0.25, 0.0], &mut rng).unwrap();
            assert!((norm2(&y) - 0.75).abs() < 1e-12);
        }
    }

    #[test]
    fn outer_branch_keeps_radius() {
        let p = KernelParams::new(2, 0.25).unwrap();
        let mut rng = RngHandle::new(6, 0);
        let traj = run_chain(&p, &[2.0, 0.0], 500, &mut rng).unwrap();
        assert_eq!(traj.len(), 501);
        for w in traj.windows(2) {
            assert!((norm2(&w[1]) - 2.0).abs() < 1e-9);
            assert!((dist(&w[0], &w[1]) - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn zero_steps_returns_start() {
        let p = KernelParams::new(3, 1.0).unwrap();
        let traj = run_chain(&p, &[0.1, 0.2, 0.3], 0, &mut RngHandle::new(0, 0)).unwrap();
        assert_eq!(traj, vec![vec![0.1, 0.2, 0.3]]);
    }

    #[test]
    fn mixture_weight_matches_chi_ratio() {
        let p = KernelParams::new(2, 0.25).unwrap();
        let law = ChiLaw::new(2, 0.25).unwrap();
        let expected = law.density(0.4) / law.density(0.6);
        assert!((p.reflect_probability(0.6).unwrap() - expected).abs() < 1e-12);

        let mut rng = RngHandle::new(7, 0);
        let n = 100_000;
        let x = [0.6, 0.0];
        let inner = (0..n).filter(|_| (norm2(&kernel_step(&p, &x, &mut rng).unwrap()) - 0.4).abs() < 1e-9).count();
        let se = (expected * (1.0 - expected) / n as f64).sqrt();
        assert!((inner as f64 / n as f64 - expected).abs() < 3.0 * se);
    }

    #[test]
    fn double_reflection_returns_radius() {
        let p = KernelParams::new(4, 10.0).unwrap();
        let mut rng = RngHandle::new(8, 0);
        let x = vec![0.2, 0.1, 0.0, 0.05];
        let t = norm2(&x);
        let y = kernel_step(&p, &x, &mut rng).unwrap();
        assert!((norm2(&y) - (1.0 - t)).abs() < 1e-12);
        let z = kernel_step(&p, &y, &mut rng).unwrap();
        // 1 - t > 1/2 so the second step may keep or reflect; reflection restores t
        let rz = norm2(&z);
        assert!((rz - t).abs() < 1e-12 || (rz - (1.0 - t)).abs() < 1e-12);
    }

    #[test]
    fn below_threshold_variance_rejected_by_weight() {
        // bypass the constructor to hit the runtime guard
        let p = KernelParams { r: 2, sigma2: 0.1 };
        assert!(matches!(p.reflect_probability(0.6), Err(Error::BadVariance { .. })));
    }

    #[test]
    fn trajectory_dump_format() {
        let mut buf = Vec::new();
        write_trajectory(&[vec![1.0, 2.5], vec![-0.5, 0.0]], &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "1.0 2.5\n-0.5 0.0\n");
    }
}
