//! Objectives for combinatorial, vector, spherical and Gaussian discrepancy,
//! and constructors for the couplings that relate them.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dot, norm2, norm_inf, psd_cholesky, CorrelationMatrix, Matrix, PsdMatrix, RngHandle};

pub const MAX_BRUTE_FORCE_COLS: usize = 26;
pub const DEFAULT_MC_SAMPLES: usize = 100_000;
const MC_BLOCK: usize = 4096;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Signing(Vec<f64>);

impl Signing {
    pub fn new(entries: Vec<f64>) -> Result<Self> {
        if entries.iter().any(|&x| x != 1.0 && x != -1.0) {
            return Err(Error::BadSpec("signing entries must be exactly +1 or -1".into()));
        }
        Ok(Signing(entries))
    }

    /// Entrywise sign, with `sgn(0) = +1`.
    pub fn sign_of(v: &[f64]) -> Self {
        Signing(v.iter().map(|&x| if x < 0.0 { -1.0 } else { 1.0 }).collect())
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn negated(&self) -> Signing {
        Signing(self.0.iter().map(|x| -x).collect())
    }
}

/// Point on the sphere of radius `√n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SphericalPoint(Vec<f64>);

impl SphericalPoint {
    pub fn new(x: Vec<f64>) -> Result<Self> {
        let n = x.len() as f64;
        let norm = norm2(&x);
        if (norm - n.sqrt()).abs() > 1e-9 * n.sqrt().max(1.0) {
            return Err(Error::NotUnit { index: 0, norm: norm / n.sqrt() });
        }
        Ok(SphericalPoint(x))
    }

    /// Rescales a non-zero vector onto the sphere.
    pub fn project(x: &[f64]) -> Result<Self> {
        let norm = norm2(x);
        if norm == 0.0 {
            return Err(Error::BadSpec("cannot project the zero vector".into()));
        }
        let scale = (x.len() as f64).sqrt() / norm;
        Ok(SphericalPoint(x.iter().map(|v| v * scale).collect()))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

impl From<&Signing> for SphericalPoint {
    fn from(s: &Signing) -> Self {
        SphericalPoint(s.0.clone())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub samples: usize,
    pub seed: u64,
    pub stream: u64,
}

impl McEstimate {
    fn from_sums(sum: f64, sumsq: f64, samples: usize, rng: &RngHandle) -> Self {
        let n = samples as f64;
        let mean = if samples == 0 { 0.0 } else { sum / n };
        let var = if samples > 1 { ((sumsq - n * mean * mean) / (n - 1.0)).max(0.0) } else { 0.0 };
        McEstimate { mean, std_error: (var / n.max(1.0)).sqrt(), samples, seed: rng.seed(), stream: rng.stream() }
    }
}

fn check_cols(a: &Matrix, n: usize) -> Result<()> {
    if a.cols() != n {
        return Err(Error::DimMismatch(format!("matrix has {} columns, coupling has dimension {n}", a.cols())));
    }
    Ok(())
}

fn check_unit_rows(u: &Matrix) -> Result<()> {
    for i in 0..u.rows() {
        let norm = norm2(u.row(i));
        if (norm - 1.0).abs() > 1e-9 {
            return Err(Error::NotUnit { index: i, norm });
        }
    }
    Ok(())
}

/// `min_σ |Aσ|_∞` by Gray-code enumeration with `σ_1 = +1` fixed.
pub fn disc_bruteforce(a: &Matrix) -> Result<(f64, Signing)> {
    let n = a.cols();
    if n > MAX_BRUTE_FORCE_COLS {
        return Err(Error::TooLarge(n));
    }
    if n == 0 {
        return Ok((0.0, Signing(Vec::new())));
    }
    let mut sigma = vec![1.0; n];
    let mut image: Vec<f64> = (0..a.rows()).map(|i| a.row(i).iter().sum()).collect();
    let mut best = norm_inf(&image);
    let mut best_sigma = sigma.clone();
    let cols = a.columns();
    for k in 1u64..(1u64 << (n - 1)) {
        let j = k.trailing_zeros() as usize + 1;
        sigma[j] = -sigma[j];
        let delta = 2.0 * sigma[j];
        for (y, c) in image.iter_mut().zip(&cols[j]) {
            *y += delta * c;
        }
        let val = norm_inf(&image);
        if val < best {
            best = val;
            best_sigma.copy_from_slice(&sigma);
        }
    }
    // recompute to drop accumulated rounding from the incremental updates
    let exact = norm_inf(&a.matvec(&best_sigma)?);
    Ok((exact, Signing(best_sigma)))
}

pub fn disc_of_signing(a: &Matrix, sigma: &Signing) -> Result<f64> {
    Ok(norm_inf(&a.matvec(sigma.as_slice())?))
}

/// `√(max_i <A_i, Σ A_i>)`.
pub fn vdisc_objective(a: &Matrix, sigma: &CorrelationMatrix) -> Result<f64> {
    check_cols(a, sigma.dim())?;
    let mut best = 0.0f64;
    for i in 0..a.rows() {
        let row = a.row(i);
        let q = dot(row, &sigma.matrix().matvec(row)?);
        best = best.max(q);
    }
    Ok(best.max(0.0).sqrt())
}

/// `max_i |Σ_j A_ij u_j|_2` for unit rows `u_j` of `U`.
pub fn vdisc_objective_units(a: &Matrix, u: &Matrix) -> Result<f64> {
    check_unit_rows(u)?;
    check_cols(a, u.rows())?;
    Ok(a.matmul(u)?.norm_2_inf())
}

/// `|Ax|_∞` for `x` on the radius-`√n` sphere.
pub fn discs_objective(a: &Matrix, x: &SphericalPoint) -> Result<f64> {
    check_cols(a, x.0.len())?;
    Ok(norm_inf(&a.matvec(&x.0)?))
}

/// Runs `samples` draws of `|B ξ|_∞`-style statistics in parallel blocks,
/// block `k` drawing from `rng.split(k)`.
fn mc_blocks<F>(samples: usize, rng: &RngHandle, draw: F) -> (f64, f64)
where
    F: Fn(&mut RngHandle) -> f64 + Sync,
{
    let blocks = samples.div_ceil(MC_BLOCK);
    (0..blocks)
        .into_par_iter()
        .map(|k| {
            let mut local = rng.split(k as u64);
            let count = MC_BLOCK.min(samples - k * MC_BLOCK);
            let (mut s, mut ss) = (0.0, 0.0);
            for _ in 0..count {
                let x = draw(&mut local);
                s += x;
                ss += x * x;
            }
            (s, ss)
        })
        .collect::<Vec<_>>()
        .into_iter()
        .fold((0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1))
}

/// Monte-Carlo estimate of `E|Ag|_∞` for `g ~ N(0, Σ)`.
pub fn disc_g_mc(a: &Matrix, sigma: &CorrelationMatrix, samples: usize, rng: &RngHandle) -> Result<McEstimate> {
    disc_g_mc_psd(a, sigma.psd(), samples, rng)
}

/// Same as [`disc_g_mc`] for any PSD covariance.
pub fn disc_g_mc_psd(a: &Matrix, sigma: &PsdMatrix, samples: usize, rng: &RngHandle) -> Result<McEstimate> {
    check_cols(a, sigma.dim())?;
    let l = psd_cholesky(sigma)?;
    // keep only the non-zero columns of L: A g = (A L_+) ξ_+
    let active: Vec<usize> = (0..l.cols()).filter(|&j| l[(j, j)] > 0.0).collect();
    let al = a.matmul(&l)?;
    let mut b = Matrix::zeros(a.rows(), active.len());
    for i in 0..a.rows() {
        for (k, &j) in active.iter().enumerate() {
            b[(i, k)] = al[(i, j)];
        }
    }
    let (s, ss) = mc_blocks(samples, rng, |r| {
        let xi = r.normals(b.cols());
        (0..b.rows()).fold(0.0f64, |m, i| m.max(dot(b.row(i), &xi).abs()))
    });
    Ok(McEstimate::from_sums(s, ss, samples, rng))
}

/// Estimates `max_t E|Σ_{s<=t} g_s v_s|_∞` for `g ~ N(0, Gram(u))`, drawn as
/// `g_s = <u_s, ξ>`. The same draws serve every prefix `t`; the reported
/// standard error is that of the maximizing prefix.
pub fn online_disc_g(vs: &[Vec<f64>], us: &[Vec<f64>], samples: usize, rng: &RngHandle) -> Result<McEstimate> {
    if vs.len() != us.len() {
        return Err(Error::DimMismatch(format!("{} columns but {} unit vectors", vs.len(), us.len())));
    }
    if vs.is_empty() {
        return Ok(McEstimate::from_sums(0.0, 0.0, samples, rng));
    }
    let m = vs[0].len();
    let r = us[0].len();
    if vs.iter().any(|v| v.len() != m) || us.iter().any(|u| u.len() != r) {
        return Err(Error::DimMismatch("ragged stream".into()));
    }
    for (i, u) in us.iter().enumerate() {
        let n = norm2(u);
        if (n - 1.0).abs() > 1e-9 {
            return Err(Error::NotUnit { index: i, norm: n });
        }
    }
    let big_t = vs.len();
    let blocks = samples.div_ceil(MC_BLOCK);
    let (sum, sumsq) = (0..blocks)
        .into_par_iter()
        .map(|k| {
            let mut local = rng.split(k as u64);
            let count = MC_BLOCK.min(samples - k * MC_BLOCK);
            let mut s = vec![0.0; big_t];
            let mut ss = vec![0.0; big_t];
            let mut partial = vec![0.0; m];
            for _ in 0..count {
                let xi = local.normals(r);
                partial.iter_mut().for_each(|p| *p = 0.0);
                for t in 0..big_t {
                    let g = dot(&us[t], &xi);
                    for (p, v) in partial.iter_mut().zip(&vs[t]) {
                        *p += g * v;
                    }
                    let val = norm_inf(&partial);
                    s[t] += val;
                    ss[t] += val * val;
                }
            }
            (s, ss)
        })
        .collect::<Vec<_>>()
        .into_iter()
        .fold((vec![0.0; big_t], vec![0.0; big_t]), |mut a, b| {
            a.0.iter_mut().zip(&b.0).for_each(|(x, y)| *x += y);
            a.1.iter_mut().zip(&b.1).for_each(|(x, y)| *x += y);
            a
        });
    let t_star = (0..big_t).max_by(|&i, &j| sum[i].total_cmp(&sum[j])).unwrap();
    Ok(McEstimate::from_sums(sum[t_star], sumsq[t_star], samples, rng))
}

/// `σσᵀ`.
pub fn coupling_from_signing(sigma: &Signing) -> Result<CorrelationMatrix> {
    CorrelationMatrix::from_psd(PsdMatrix::new_unchecked_psd(Matrix::outer(&sigma.0, &sigma.0))?)
}

/// `U Uᵀ`, normalized so the diagonal is exactly one.
pub fn coupling_from_units(u: &Matrix) -> Result<CorrelationMatrix> {
    check_unit_rows(u)?;
    let mut g = u.gram_rows();
    let d: Vec<f64> = (0..g.rows()).map(|i| g[(i, i)].sqrt()).collect();
    for i in 0..g.rows() {
        for j in 0..g.cols() {
            g[(i, j)] /= d[i] * d[j];
        }
        g[(i, i)] = 1.0;
    }
    CorrelationMatrix::from_psd(PsdMatrix::new_unchecked_psd(g)?)
}

/// Labels splitting `n` indices into three contiguous blocks of near-equal size.
pub fn equal_blocks(n: usize) -> Vec<usize> {
    (0..n).map(|j| (3 * j / n.max(1)).min(2)).collect()
}

/// Rank-2 unit vectors `u_j = sgn(a_j) w_{block(j)}` with `Σ_j a_j u_j = 0`,
/// where `w_1, w_2, w_3` close a triangle with side lengths `ℓ_i = Σ_{j∈i} |a_j|`.
pub fn triangle_rank2(a: &[f64], blocks: &[usize]) -> Result<Matrix> {
    if a.len() != blocks.len() {
        return Err(Error::DimMismatch("one block label per entry".into()));
    }
    if blocks.iter().any(|&b| b > 2) {
        return Err(Error::BadSpec("block labels must be 0, 1 or 2".into()));
    }
    let mut ell = [0.0f64; 3];
    for (&x, &b) in a.iter().zip(blocks) {
        ell[b] += x.abs();
    }
    let total: f64 = ell.iter().sum();
    let longest = ell.iter().cloned().fold(0.0, f64::max);
    if 2.0 * longest > total * (1.0 + 1e-12) {
        return Err(Error::Infeasible);
    }
    let w = triangle_directions(ell);
    let mut u = Matrix::zeros(a.len(), 2);
    for (j, (&x, &b)) in a.iter().zip(blocks).enumerate() {
        let s = if x < 0.0 { -1.0 } else { 1.0 };
        u[(j, 0)] = s * w[b][0];
        u[(j, 1)] = s * w[b][1];
    }
    let mut resid = [0.0; 2];
    for (j, &x) in a.iter().enumerate() {
        resid[0] += x * u[(j, 0)];
        resid[1] += x * u[(j, 1)];
    }
    if norm2(&resid) > 1e-8 * total.max(1.0) {
        return Err(Error::Infeasible);
    }
    Ok(u)
}

/// Unit `w_i` with `Σ ℓ_i w_i = 0`; `w_1 = e_1` and `w_2` in the upper half plane.
fn triangle_directions(ell: [f64; 3]) -> [[f64; 2]; 3] {
    let e1 = [1.0, 0.0];
    if let Some(zero) = ell.iter().position(|&l| l == 0.0) {
        // two equal sides cancel head-on
        let mut w = [e1; 3];
        let others: Vec<usize> = (0..3).filter(|&i| i != zero).collect();
        w[others[1]] = [-1.0, 0.0];
        return w;
    }
    let [l1, l2, l3] = ell;
    let cos = ((l3 * l3 - l1 * l1 - l2 * l2) / (2.0 * l1 * l2)).clamp(-1.0, 1.0);
    let sin = (1.0 - cos * cos).max(0.0).sqrt();
    let w2 = [cos, sin];
    let w3 = [-(l1 + l2 * cos) / l3, -(l2 * sin) / l3];
    let n3 = norm2(&w3);
    [e1, w2, [w3[0] / n3, w3[1] / n3]]
}

/// Monte-Carlo estimate of `E|Aσ|_∞` over uniform signings.
pub fn random_signing_baseline(a: &Matrix, trials: usize, rng: &RngHandle) -> Result<McEstimate> {
    let cols = a.cols();
    let (s, ss) = mc_blocks(trials, rng, |r| {
        let sigma: Vec<f64> = (0..cols).map(|_| r.sign()).collect();
        (0..a.rows()).fold(0.0f64, |m, i| m.max(dot(a.row(i), &sigma).abs()))
    });
    Ok(McEstimate::from_sums(s, ss, trials, rng))
}
