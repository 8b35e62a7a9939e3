//! Rank-r Gaussian fixed-point walk for online vector balancing.
//!
//! The walk keeps `W_t = W_0 + Σ_{s<=t} v_s u_sᵀ ∈ R^{m×r}` with
//! `W_0 ~ N(0, σ⋆² I)`. Each round projects `W` onto the incoming column,
//! `z = Wᵀ v / |v|²`, and moves `z` one unit step along the kernel with
//! variance `σ⋆²/|v|²`. The step is the output vector `u_t`, and every
//! `W_t` stays exactly `N(0, σ⋆² I)` distributed.

use serde::{Deserialize, Serialize};

use crate::chi::sigma_star;
use crate::error::{Error, Result};
use crate::kernel::{kernel_increment, KernelParams};
use crate::linalg::{extend_cholesky_row, norm2, psd_cholesky, CorrelationMatrix, Matrix, PsdMatrix, RngHandle};

/// Columns may exceed unit norm by this much.
pub const NORM_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WalkConfig {
    pub m: usize,
    pub r: usize,
    pub seed: u64,
    pub stream: u64,
}

impl WalkConfig {
    pub fn new(m: usize, r: usize, seed: u64) -> Self {
        WalkConfig { m, r, seed, stream: 0 }
    }

    pub fn with_stream(mut self, stream: u64) -> Self {
        self.stream = stream;
        self
    }
}

#[derive(Debug, Clone)]
pub struct WalkState {
    w: Matrix,
    w0: Matrix,
    prefix: Matrix,
    t: usize,
    sigma_star: f64,
    rng: RngHandle,
}

pub fn walk_init(config: &WalkConfig) -> Result<WalkState> {
    let sigma_star = sigma_star(config.r)?;
    if config.m == 0 {
        return Err(Error::DimMismatch("walk needs m >= 1".into()));
    }
    let mut rng = RngHandle::new(config.seed, config.stream);
    let entries = rng.normals(config.m * config.r).into_iter().map(|g| g * sigma_star).collect();
    let w = Matrix::from_vec(config.m, config.r, entries)?;
    Ok(WalkState { w0: w.clone(), w, prefix: Matrix::zeros(config.m, config.r), t: 0, sigma_star, rng })
}

impl WalkState {
    pub fn m(&self) -> usize {
        self.w.rows()
    }

    pub fn r(&self) -> usize {
        self.w.cols()
    }

    pub fn round(&self) -> usize {
        self.t
    }

    /// Current accumulator `W_t`.
    pub fn w(&self) -> &Matrix {
        &self.w
    }

    pub fn w0(&self) -> &Matrix {
        &self.w0
    }

    /// `Σ_{s<=t} v_s u_sᵀ`, accumulated separately from `W`.
    pub fn prefix_sum(&self) -> &Matrix {
        &self.prefix
    }

    /// Processes one column and returns the unit vector `u_t`.
    pub fn step(&mut self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.m() {
            return Err(Error::DimMismatch(format!("column has length {}, walk has m = {}", v.len(), self.m())));
        }
        let nv = norm2(v);
        if nv > 1.0 + NORM_SLACK || !nv.is_finite() {
            return Err(Error::NormTooLarge(nv));
        }
        self.t += 1;
        if nv == 0.0 {
            let mut u = vec![0.0; self.r()];
            u[0] = 1.0;
            return Ok(u);
        }
        let nv2 = nv * nv;
        let params = KernelParams::new(self.r(), self.sigma_star * self.sigma_star / nv2)?;
        let z: Vec<f64> = self.w.tr_matvec(v)?.into_iter().map(|x| x / nv2).collect();
        let u = kernel_increment(&params, &z, &mut self.rng)?;
        self.w.add_outer(v, &u);
        self.prefix.add_outer(v, &u);
        Ok(u)
    }
}

pub fn walk_step(state: &mut WalkState, v: &[f64]) -> Result<Vec<f64>> {
    state.step(v)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoundMetrics {
    pub round: usize,
    /// `max_{s<=t} |Σ_{j<=s} v_j u_jᵀ|_{2→∞}`.
    pub disc_2inf: f64,
    /// `|Σ_{j<=t} v_j u_jᵀ|_{2→∞}` at this round.
    pub max_row_norm: f64,
}

#[derive(Debug, Clone)]
pub struct WalkOutput {
    pub us: Vec<Vec<f64>>,
    pub metrics: Vec<RoundMetrics>,
    pub state: WalkState,
}

impl WalkOutput {
    /// Running maximum after the last round (0 for an empty stream).
    pub fn max_disc(&self) -> f64 {
        self.metrics.last().map_or(0.0, |m| m.disc_2inf)
    }

    /// Output vectors as a `T x r` matrix.
    pub fn stream_matrix(&self) -> Result<Matrix> {
        if self.us.is_empty() {
            return Ok(Matrix::zeros(0, self.state.r()));
        }
        Matrix::from_rows(&self.us)
    }
}

pub fn walk_run(config: &WalkConfig, vs: &[Vec<f64>]) -> Result<WalkOutput> {
    let mut state = walk_init(config)?;
    let mut us = Vec::with_capacity(vs.len());
    let mut metrics = Vec::with_capacity(vs.len());
    let mut running = 0.0f64;
    for v in vs {
        let u = state.step(v)?;
        us.push(u);
        let current = state.prefix.norm_2_inf();
        running = running.max(current);
        metrics.push(RoundMetrics { round: state.t, disc_2inf: running, max_row_norm: current });
    }
    Ok(WalkOutput { us, metrics, state })
}

/// Rank giving `max_t |Σ v_s u_sᵀ|_{2→∞} <= 1 + ε` with probability `1 - δ`:
/// `max(1 + ⌈8 ln(2mT/δ)/ε²⌉, ⌈2/ε⌉)`.
pub fn komlos_rank(m: usize, t: usize, eps: f64, delta: f64) -> usize {
    let log_term = (2.0 * m as f64 * t as f64 / delta).ln();
    let r = 1 + (8.0 * log_term / (eps * eps)).ceil() as usize;
    r.max((2.0 / eps).ceil() as usize).max(2)
}

/// Rank for the online Gaussian discrepancy run: `max(2, ⌈ln(mT/δ)⌉)`.
pub fn banaszczyk_rank(m: usize, t: usize, delta: f64) -> usize {
    ((m as f64 * t as f64 / delta).ln().ceil() as usize).max(2)
}

/// `√(2 ln(mT)/(r-1)) + √(r/(r-1))`, the bound on the expected running maximum.
pub fn expected_disc_bound(m: usize, t: usize, r: usize) -> f64 {
    let rf = r as f64;
    (2.0 * (m as f64 * t as f64).ln() / (rf - 1.0)).sqrt() + (rf / (rf - 1.0)).sqrt()
}

/// `√(2 ln(2mT/δ)/(r-1)) + √(r/(r-1))`, the bound holding with probability `1 - δ`.
pub fn high_probability_disc_bound(m: usize, t: usize, r: usize, delta: f64) -> f64 {
    let rf = r as f64;
    (2.0 * (2.0 * m as f64 * t as f64 / delta).ln() / (rf - 1.0)).sqrt() + (rf / (rf - 1.0)).sqrt()
}

/// Unit vectors received so far together with their full Gram matrix.
#[derive(Debug, Clone, Default)]
pub struct GramStream {
    us: Vec<Vec<f64>>,
}

impl GramStream {
    pub fn new() -> Self {
        GramStream::default()
    }

    pub fn push(&mut self, u: Vec<f64>) -> Result<()> {
        let n = norm2(&u);
        if (n - 1.0).abs() > 1e-9 {
            return Err(Error::NotUnit { index: self.us.len(), norm: n });
        }
        if let Some(first) = self.us.first() {
            if first.len() != u.len() {
                return Err(Error::DimMismatch("unit vectors of different dimensions".into()));
            }
        }
        self.us.push(u);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.us.len()
    }

    pub fn is_empty(&self) -> bool {
        self.us.is_empty()
    }

    /// `Σ^{(t)}_{ij} = <u_i, u_j>/(|u_i||u_j|)`, so the diagonal is exactly one.
    pub fn correlation(&self, t: usize) -> Result<CorrelationMatrix> {
        let mut g = Matrix::zeros(t, t);
        let norms: Vec<f64> = self.us[..t].iter().map(|u| norm2(u)).collect();
        for i in 0..t {
            g[(i, i)] = 1.0;
            for j in 0..i {
                let c = crate::linalg::dot(&self.us[i], &self.us[j]) / (norms[i] * norms[j]);
                g[(i, j)] = c;
                g[(j, i)] = c;
            }
        }
        CorrelationMatrix::new(g)
    }
}

/// Correlation matrices `Σ^{(1)}, ..., Σ^{(T)}` of a unit-vector stream.
pub fn gram_of_stream(us: &[Vec<f64>]) -> Result<Vec<CorrelationMatrix>> {
    let mut stream = GramStream::new();
    for u in us {
        stream.push(u.clone())?;
    }
    // every Σ^{(t)} is a leading block of Σ^{(T)}
    let full = match us.len() {
        0 => return Ok(Vec::new()),
        t => stream.correlation(t)?,
    };
    (1..=us.len())
        .map(|t| CorrelationMatrix::from_psd(PsdMatrix::new_unchecked_psd(full.matrix().leading_block(t))?))
        .collect()
}

fn check_consistency(sigmas: &[CorrelationMatrix]) -> Result<()> {
    for (t, s) in sigmas.iter().enumerate() {
        if s.dim() != t + 1 {
            return Err(Error::DimMismatch(format!("round {} matrix is {}x{}", t + 1, s.dim(), s.dim())));
        }
        if t > 0 {
            let prev = sigmas[t - 1].matrix();
            if s.matrix().leading_block(t).max_abs_diff(prev) > 1e-10 {
                return Err(Error::Inconsistent(t + 1));
            }
        }
    }
    Ok(())
}

/// Unit vectors `u_t ∈ R^T` with `u_t` = row `t` of the Cholesky factor of
/// `Σ^{(t)}`; only the first `t` coordinates are non-zero. Recomputes the
/// full factor every round.
pub fn stream_of_grams(sigmas: &[CorrelationMatrix]) -> Result<Vec<Vec<f64>>> {
    check_consistency(sigmas)?;
    let big_t = sigmas.len();
    sigmas
        .iter()
        .enumerate()
        .map(|(t, s)| {
            let l = psd_cholesky(s.psd())?;
            let mut u = vec![0.0; big_t];
            u[..=t].copy_from_slice(&l.row(t)[..=t]);
            Ok(u)
        })
        .collect()
}

/// Same output as [`stream_of_grams`], extending the factor by one row per round.
pub fn stream_of_grams_incremental(sigmas: &[CorrelationMatrix]) -> Result<Vec<Vec<f64>>> {
    check_consistency(sigmas)?;
    let big_t = sigmas.len();
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(big_t);
    for (t, s) in sigmas.iter().enumerate() {
        let row = extend_cholesky_row(&rows, &s.matrix().row(t)[..=t], 1.0)?;
        rows.push(row);
    }
    Ok(rows
        .into_iter()
        .map(|r| {
            let mut u = vec![0.0; big_t];
            u[..r.len()].copy_from_slice(&r);
            u
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_variance_rank_two() {
        let st = walk_init(&WalkConfig::new(3, 2, 1)).unwrap();
        assert_eq!(st.sigma_star, 0.5);
        assert_eq!(st.round(), 0);
        assert!(matches!(walk_init(&WalkConfig::new(3, 1, 1)), Err(Error::RankTooSmall(1))));
    }

    #[test]
    fn init_is_deterministic() {
        let a = walk_init(&WalkConfig::new(4, 3, 9)).unwrap();
        let b = walk_init(&WalkConfig::new(4, 3, 9)).unwrap();
        assert_eq!(a.w(), b.w());
    }

    #[test]
    fn init_entry_variance() {
        let n = 100_000u64;
        let mut acc = 0.0;
        for k in 0..n {
            let st = walk_init(&WalkConfig::new(2, 2, 4).with_stream(k)).unwrap();
            acc += st.w().as_slice().iter().map(|x| x * x).sum::<f64>();
        }
        let var = acc / (4 * n) as f64;
        assert!((var - 0.25).abs() < 0.02 * 0.25, "{var}");
    }

    #[test]
    fn zero_column_leaves_state() {
        let mut st = walk_init(&WalkConfig::new(3, 4, 2)).unwrap();
        let before = st.w().clone();
        let u = st.step(&[0.0; 3]).unwrap();
        assert_eq!(u, vec![1.0, 0.0, 0.0, 0.0]);
        assert_eq!(st.w(), &before);
        assert_eq!(st.round(), 1);
    }

    #[test]
    fn long_column_rejected() {
        let mut st = walk_init(&WalkConfig::new(2, 2, 2)).unwrap();
        assert!(matches!(st.step(&[1.0, 0.1]), Err(Error::NormTooLarge(_))));
        assert!(st.step(&[0.6, 0.8]).is_ok());
    }

    #[test]
    fn update_and_telescoping() {
        let mut rng = RngHandle::new(77, 0);
        let mut st = walk_init(&WalkConfig::new(5, 3, 3)).unwrap();
        for _ in 0..300 {
            let v: Vec<f64> = rng.unit_vector(5).into_iter().map(|x| x * rng.uniform()).collect();
            let before = st.w().clone();
            let u = st.step(&v).unwrap();
            assert!((norm2(&u) - 1.0).abs() < 1e-9);
            let mut expect = before;
            expect.add_outer(&v, &u);
            assert!(expect.max_abs_diff(st.w()) < 1e-14);
        }
        let diff = st.w().sub(st.w0()).unwrap();
        assert!(diff.max_abs_diff(st.prefix_sum()) < 1e-7);
    }

    #[test]
    fn online_prefix_replay() {
        let mut rng = RngHandle::new(5, 5);
        let vs: Vec<Vec<f64>> = (0..40).map(|_| rng.unit_vector(6)).collect();
        let cfg = WalkConfig::new(6, 4, 21);
        let full = walk_run(&cfg, &vs).unwrap();
        let half = walk_run(&cfg, &vs[..17]).unwrap();
        assert_eq!(&full.us[..17], &half.us[..]);
    }

    #[test]
    fn empty_stream() {
        let out = walk_run(&WalkConfig::new(3, 2, 0), &[]).unwrap();
        assert!(out.us.is_empty());
        assert_eq!(out.max_disc(), 0.0);
    }

    #[test]
    fn identity_stream_rows_are_unit() {
        let m = 8;
        let vs: Vec<Vec<f64>> = Matrix::identity(m).columns();
        let out = walk_run(&WalkConfig::new(m, 4, 1), &vs).unwrap();
        for i in 0..m {
            assert!((norm2(out.state.prefix_sum().row(i)) - 1.0).abs() < 1e-9);
        }
        assert!((out.max_disc() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn rank_rules() {
        assert_eq!(komlos_rank(10, 500, 0.5, 0.05), 392);
        assert_eq!(banaszczyk_rank(16, 128, 0.05), 11);
        let b = expected_disc_bound(64, 64, 32);
        assert!((b - ((2.0 * 4096f64.ln() / 31.0).sqrt() + (32.0f64 / 31.0).sqrt())).abs() < 1e-15);
    }

    #[test]
    fn gram_examples() {
        let s = gram_of_stream(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        assert_eq!(s[1].matrix(), &Matrix::identity(2));
        let s = gram_of_stream(&[vec![0.6, 0.8], vec![0.6, 0.8]]).unwrap();
        assert!(s[1].matrix().max_abs_diff(&Matrix::from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap()) < 1e-15);
        assert!(matches!(gram_of_stream(&[vec![2.0, 0.0]]), Err(Error::NotUnit { .. })));
    }

    #[test]
    fn identity_grams_give_basis() {
        let sigmas: Vec<CorrelationMatrix> =
            (1..=4).map(|t| CorrelationMatrix::new(Matrix::identity(t)).unwrap()).collect();
        let us = stream_of_grams(&sigmas).unwrap();
        for (t, u) in us.iter().enumerate() {
            let mut e = vec![0.0; 4];
            e[t] = 1.0;
            assert_eq!(u, &e);
        }
    }

    #[test]
    fn all_ones_gram_repeats_first_vector() {
        let ones = Matrix::from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap();
        let sigmas = vec![CorrelationMatrix::new(Matrix::identity(1)).unwrap(), CorrelationMatrix::new(ones).unwrap()];
        let us = stream_of_grams(&sigmas).unwrap();
        assert_eq!(us, vec![vec![1.0, 0.0], vec![1.0, 0.0]]);
        assert_eq!(stream_of_grams_incremental(&sigmas).unwrap(), us);
    }

    #[test]
    fn inconsistent_stream_rejected() {
        let a = Matrix::from_rows(&[vec![1.0, 0.5], vec![0.5, 1.0]]).unwrap();
        let b = Matrix::from_rows(&[vec![1.0, 0.4, 0.0], vec![0.4, 1.0, 0.0], vec![0.0, 0.0, 1.0]]).unwrap();
        let sigmas = vec![
            CorrelationMatrix::new(Matrix::identity(1)).unwrap(),
            CorrelationMatrix::new(a).unwrap(),
            CorrelationMatrix::new(b).unwrap(),
        ];
        assert_eq!(stream_of_grams(&sigmas), Err(Error::Inconsistent(3)));
        assert_eq!(stream_of_grams_incremental(&sigmas), Err(Error::Inconsistent(3)));
    }
}
