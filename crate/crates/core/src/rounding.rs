//! Goemans–Williamson and PCA rounding of correlation matrices, and the
//! planted instances on which both fail.
//!
//! The planted coupling is `Σ = c cᵀ + s sᵀ` with `c_j = cos(2πj/n)`,
//! `s_j = sin(2πj/n)`. Rows of the planted matrix are Gaussian on the
//! orthogonal complement of `span{c, s}`, so `Σ` has zero Gaussian
//! discrepancy, while both roundings return a cyclic shift of
//! `w = (1_{n/2}, -1_{n/2})`, which does not cancel.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::discrepancy::{disc_g_mc, disc_of_signing, random_signing_baseline, Signing};
use crate::error::{Error, Result};
use crate::linalg::{
    dot, gaussian_from_factor, psd_cholesky, top_eigvec_from, CorrelationMatrix, Matrix, PsdMatrix, RngHandle,
    DEFAULT_EIG_TOL,
};
use crate::stats::median;

/// Scale `c` in `A' = A / (c √ln n)`.
pub const DEFAULT_C_SCALE: f64 = 3.0;
const PCA_START_SEED: u64 = 0x5043_4131;

/// `sgn(ξ)` for `ξ ~ N(0, Σ)`.
pub fn gw_round(sigma: &CorrelationMatrix, rng: &mut RngHandle) -> Result<Signing> {
    let l = psd_cholesky(sigma.psd())?;
    Ok(gw_round_with_factor(&l, rng))
}

/// [`gw_round`] with a precomputed Cholesky factor of `Σ`.
pub fn gw_round_with_factor(l: &Matrix, rng: &mut RngHandle) -> Signing {
    Signing::sign_of(&gaussian_from_factor(l, rng))
}

/// `sgn v_1(Σ)`, power iteration from a fixed pseudo-random start.
pub fn pca_round(sigma: &CorrelationMatrix) -> Result<Signing> {
    let start = RngHandle::new(PCA_START_SEED, 0).normals(sigma.dim());
    pca_round_from(sigma, &start)
}

/// `sgn v_1(Σ)` with the power iteration started at `start`; within a
/// degenerate top eigenspace the start vector selects the eigenvector.
pub fn pca_round_from(sigma: &CorrelationMatrix, start: &[f64]) -> Result<Signing> {
    let v = top_eigvec_from(sigma.psd(), DEFAULT_EIG_TOL, start)?;
    Ok(Signing::sign_of(&v))
}

/// Cyclic left shift `(v_2, ..., v_n, v_1)`.
pub fn shift(v: &[f64]) -> Vec<f64> {
    let mut out = v.to_vec();
    if !out.is_empty() {
        out.rotate_left(1);
    }
    out
}

/// `(1_{n/2}, -1_{n/2})`.
pub fn half_signing(n: usize) -> Vec<f64> {
    (0..n).map(|j| if j < n / 2 { 1.0 } else { -1.0 }).collect()
}

/// Smallest `k` with `shift^k(w) = σ`, if any.
pub fn shift_orbit_index(sigma: &[f64], w: &[f64]) -> Option<usize> {
    let n = w.len();
    if sigma.len() != n {
        return None;
    }
    (0..n.max(1)).find(|&k| (0..n).all(|j| sigma[j] == w[(j + k) % n]))
}

/// Cosine and sine vectors `c_j = cos(2πj/n)`, `s_j = sin(2πj/n)`, `j = 1..n`.
pub fn trig_vectors(n: usize) -> (Vec<f64>, Vec<f64>) {
    let step = 2.0 * std::f64::consts::PI / n as f64;
    ((1..=n).map(|j| (step * j as f64).cos()).collect(), (1..=n).map(|j| (step * j as f64).sin()).collect())
}

/// `Σ^⊥ = I - c cᵀ/|c|² - s sᵀ/|s|²`.
pub fn complement_projector(n: usize) -> Matrix {
    let (c, s) = trig_vectors(n);
    let (cc, ss) = (dot(&c, &c), dot(&s, &s));
    let mut p = Matrix::identity(n);
    for i in 0..n {
        for j in 0..n {
            p[(i, j)] -= c[i] * c[j] / cc + s[i] * s[j] / ss;
        }
    }
    p
}

/// `wᵀ Σ^⊥ w / n` for `w = (1_{n/2}, -1_{n/2})`.
pub fn half_signing_variance_ratio(n: usize) -> f64 {
    let (c, s) = trig_vectors(n);
    let w = half_signing(n);
    let (wc, ws) = (dot(&w, &c), dot(&w, &s));
    (dot(&w, &w) - wc * wc / dot(&c, &c) - ws * ws / dot(&s, &s)) / n as f64
}

fn check_n(n: usize) -> Result<()> {
    if n % 4 != 2 || n < 6 {
        return Err(Error::BadN(n));
    }
    Ok(())
}

/// The planted coupling for a given `n`, shared by every instance of that size.
#[derive(Debug, Clone)]
pub struct PlantedCoupling {
    pub n: usize,
    pub c: Vec<f64>,
    pub s: Vec<f64>,
    pub sigma: CorrelationMatrix,
    factor: Matrix,
}

impl PlantedCoupling {
    pub fn new(n: usize) -> Result<Self> {
        check_n(n)?;
        let (c, s) = trig_vectors(n);
        let mut m = Matrix::outer(&c, &c);
        for i in 0..n {
            for j in 0..n {
                m[(i, j)] += s[i] * s[j];
            }
        }
        let psd = PsdMatrix::new_unchecked_psd(m)?;
        let factor = psd_cholesky(&psd)?;
        let sigma = CorrelationMatrix::from_psd(psd)?;
        Ok(PlantedCoupling { n, c, s, sigma, factor })
    }

    pub fn factor(&self) -> &Matrix {
        &self.factor
    }

    /// Power-iteration start `c + 0.001 s`, which stays in the top eigenspace.
    pub fn pca_start(&self) -> Vec<f64> {
        self.c.iter().zip(&self.s).map(|(c, s)| c + 1e-3 * s).collect()
    }

    /// `m` rows `g - (2/n)<g,c>c - (2/n)<g,s>s` with `g` standard normal.
    pub fn sample_matrix(&self, m: usize, rng: &mut RngHandle) -> Matrix {
        let n = self.n;
        let (cc, ss) = (dot(&self.c, &self.c), dot(&self.s, &self.s));
        let mut a = Matrix::zeros(m, n);
        for i in 0..m {
            let g = rng.normals(n);
            let (gc, gs) = (dot(&g, &self.c) / cc, dot(&g, &self.s) / ss);
            for (j, out) in a.row_mut(i).iter_mut().enumerate() {
                *out = g[j] - gc * self.c[j] - gs * self.s[j];
            }
        }
        a
    }
}

#[derive(Debug, Clone)]
pub struct PlantedInstance {
    pub n: usize,
    pub m: usize,
    pub a: Matrix,
    pub coupling: PlantedCoupling,
    pub seed: u64,
}

impl PlantedInstance {
    pub fn c(&self) -> &[f64] {
        &self.coupling.c
    }

    pub fn s(&self) -> &[f64] {
        &self.coupling.s
    }

    pub fn sigma_planted(&self) -> &CorrelationMatrix {
        &self.coupling.sigma
    }
}

pub fn make_planted(m: usize, n: usize, rng: &mut RngHandle) -> Result<PlantedInstance> {
    let coupling = PlantedCoupling::new(n)?;
    let a = coupling.sample_matrix(m, rng);
    Ok(PlantedInstance { n, m, a, coupling, seed: rng.seed() })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Setting {
    Spencer,
    Komlos,
}

impl Setting {
    /// `⌊n / ln n⌋` (Spencer) or `⌊10 ln n⌋` (Komlós).
    pub fn rows(self, n: usize) -> usize {
        let ln = (n as f64).ln();
        match self {
            Setting::Spencer => (n as f64 / ln).floor() as usize,
            Setting::Komlos => (10.0 * ln).floor() as usize,
        }
    }

    /// Lower bound asserted on `|A'σ_GW|_∞`: `0.5 √n` or `0.5 √(n / ln n)`.
    pub fn gw_threshold(self, n: usize) -> f64 {
        let nf = n as f64;
        match self {
            Setting::Spencer => 0.5 * nf.sqrt(),
            Setting::Komlos => 0.5 * (nf / nf.ln()).sqrt(),
        }
    }

    /// Entry bound (Spencer) or column-norm bound (Komlós) of the scaled matrix.
    pub fn feasibility_statistic(self, a: &Matrix) -> f64 {
        match self {
            Setting::Spencer => a.max_abs(),
            Setting::Komlos => a.columns().iter().map(|c| dot(c, c).sqrt()).fold(0.0, f64::max),
        }
    }
}

impl std::str::FromStr for Setting {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "spencer" => Ok(Setting::Spencer),
            "komlos" | "komlós" => Ok(Setting::Komlos),
            other => Err(Error::BadSpec(format!("unknown setting {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoundingOptions {
    pub trials: usize,
    pub c_scale: f64,
    pub baseline_trials: usize,
    pub mc_samples: usize,
}

impl Default for RoundingOptions {
    fn default() -> Self {
        RoundingOptions { trials: 50, c_scale: DEFAULT_C_SCALE, baseline_trials: 200, mc_samples: 1000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundingTrial {
    pub stream: u64,
    pub feasibility_statistic: f64,
    pub feasible: bool,
    pub gw_linf: f64,
    pub pca_linf: f64,
    pub gw_shift: Option<usize>,
    pub pca_shift: Option<usize>,
    pub random_baseline: f64,
    pub random_baseline_se: f64,
    #[serde(rename = "planted_discG")]
    pub planted_disc_g: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundingVerdicts {
    pub gw_threshold: f64,
    pub gw_fraction_above: f64,
    pub feasible_fraction: f64,
    pub all_in_orbit: bool,
    pub max_planted_disc_g: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundingReport {
    pub schema: u32,
    pub setting: Setting,
    pub n: usize,
    pub m: usize,
    pub c_scale: f64,
    pub seed: u64,
    /// Fraction of trials meeting the setting's entry or column bound.
    pub feasibility: f64,
    /// Median over trials.
    pub gw_linf: f64,
    pub pca_linf: f64,
    pub random_baseline: f64,
    /// Largest planted-coupling estimate over trials.
    #[serde(rename = "planted_discG")]
    pub planted_disc_g: f64,
    pub trials: Vec<RoundingTrial>,
    pub verdicts: RoundingVerdicts,
}

/// Pass fractions used by the verdicts.
pub const ROUNDING_PASS_FRACTION: f64 = 0.95;
pub const PLANTED_DISC_G_TOL: f64 = 1e-6;

impl RoundingReport {
    pub fn recompute_verdicts(&self) -> RoundingVerdicts {
        let k = self.trials.len().max(1) as f64;
        let threshold = self.setting.gw_threshold(self.n);
        let above = self.trials.iter().filter(|t| t.gw_linf >= threshold).count() as f64 / k;
        let feasible = self.trials.iter().filter(|t| t.feasible).count() as f64 / k;
        let orbit = self.trials.iter().all(|t| t.gw_shift.is_some() && t.pca_shift.is_some());
        let max_dg = self.trials.iter().map(|t| t.planted_disc_g).fold(0.0, f64::max);
        RoundingVerdicts {
            gw_threshold: threshold,
            gw_fraction_above: above,
            feasible_fraction: feasible,
            all_in_orbit: orbit,
            max_planted_disc_g: max_dg,
            pass: above >= ROUNDING_PASS_FRACTION
                && feasible >= ROUNDING_PASS_FRACTION
                && orbit
                && max_dg <= PLANTED_DISC_G_TOL,
        }
    }
}

/// Runs `opts.trials` independent planted trials; trial `k` draws from
/// stream `k` of `seed`.
pub fn rounding_experiment(setting: Setting, n: usize, seed: u64, opts: &RoundingOptions) -> Result<RoundingReport> {
    let coupling = PlantedCoupling::new(n)?;
    let m = setting.rows(n);
    let scale = 1.0 / (opts.c_scale * (n as f64).ln().sqrt());
    let w = half_signing(n);
    let pca = pca_round_from(&coupling.sigma, &coupling.pca_start())?;
    let pca_shift = shift_orbit_index(pca.as_slice(), &w);

    let trials: Vec<RoundingTrial> = (0..opts.trials as u64)
        .into_par_iter()
        .map(|k| {
            let base = RngHandle::new(seed, k);
            let a = coupling.sample_matrix(m, &mut base.split(0)).scale(scale);
            let stat = setting.feasibility_statistic(&a);
            let gw = gw_round_with_factor(coupling.factor(), &mut base.split(1));
            let baseline = random_signing_baseline(&a, opts.baseline_trials, &base.split(2))?;
            let planted = disc_g_mc(&a, &coupling.sigma, opts.mc_samples, &base.split(3))?;
            Ok(RoundingTrial {
                stream: k,
                feasibility_statistic: stat,
                feasible: stat <= 1.0,
                gw_linf: disc_of_signing(&a, &gw)?,
                pca_linf: disc_of_signing(&a, &pca)?,
                gw_shift: shift_orbit_index(gw.as_slice(), &w),
                pca_shift,
                random_baseline: baseline.mean,
                random_baseline_se: baseline.std_error,
                planted_disc_g: planted.mean,
            })
        })
        .collect::<Result<_>>()?;

    let col = |f: fn(&RoundingTrial) -> f64| median(&trials.iter().map(f).collect::<Vec<_>>());
    let mut report = RoundingReport {
        schema: 1,
        setting,
        n,
        m,
        c_scale: opts.c_scale,
        seed,
        feasibility: trials.iter().filter(|t| t.feasible).count() as f64 / trials.len().max(1) as f64,
        gw_linf: col(|t| t.gw_linf),
        pca_linf: col(|t| t.pca_linf),
        random_baseline: col(|t| t.random_baseline),
        planted_disc_g: trials.iter().map(|t| t.planted_disc_g).fold(0.0, f64::max),
        verdicts: RoundingVerdicts {
            gw_threshold: 0.0,
            gw_fraction_above: 0.0,
            feasible_fraction: 0.0,
            all_in_orbit: false,
            max_planted_disc_g: 0.0,
            pass: false,
        },
        trials,
    };
    report.verdicts = report.recompute_verdicts();
    Ok(report)
}
