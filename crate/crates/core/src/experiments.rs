//! Reproducible experiments and the JSON report they produce.
//!
//! Independent runs draw from stream `k` of the experiment seed, so results
//! do not depend on thread scheduling.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::chi::{sigma_star, ChiLaw};
use crate::discrepancy::{online_disc_g, McEstimate};
use crate::error::{Error, Result};
use crate::instances::{gen, InstanceKind, InstanceSpec};
use crate::kernel::{kernel_step, KernelParams};
use crate::linalg::{Matrix, PsdMatrix, RngHandle};
use crate::stats::{cov_test, ks_test, linear_fit, median, normal_ks, sample_mean, CovTest, KsResult, LinearFit};
use crate::walk::{banaszczyk_rank, walk_init, walk_run, RoundMetrics, WalkConfig};

pub const REPORT_SCHEMA: u32 = 1;
pub const DEFAULT_LEVEL: f64 = 0.01;
pub const DEFAULT_TRIALS: usize = 50;
pub const MIN_BENCH_REPS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Comparison {
    Le,
    Ge,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub name: String,
    pub value: f64,
    pub op: Comparison,
    pub threshold: f64,
    pub pass: bool,
}

impl Verdict {
    pub fn le(name: impl Into<String>, value: f64, threshold: f64) -> Self {
        Self::new(name.into(), value, Comparison::Le, threshold)
    }

    pub fn ge(name: impl Into<String>, value: f64, threshold: f64) -> Self {
        Self::new(name.into(), value, Comparison::Ge, threshold)
    }

    fn new(name: String, value: f64, op: Comparison, threshold: f64) -> Self {
        let mut v = Verdict { name, value, op, threshold, pass: false };
        v.pass = v.evaluate();
        v
    }

    /// Re-derives `pass` from the stored value and threshold.
    pub fn evaluate(&self) -> bool {
        match self.op {
            Comparison::Le => self.value <= self.threshold,
            Comparison::Ge => self.value >= self.threshold,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub schema: u32,
    pub experiment: String,
    pub spec: Value,
    pub seed: u64,
    pub metrics: Value,
    pub summary: Value,
    pub verdicts: Vec<Verdict>,
    pub timings_ms: BTreeMap<String, f64>,
}

impl ExperimentReport {
    pub fn new(experiment: &str, spec: impl Serialize, seed: u64) -> Result<Self> {
        Ok(ExperimentReport {
            schema: REPORT_SCHEMA,
            experiment: experiment.to_string(),
            spec: to_value(spec)?,
            seed,
            metrics: Value::Null,
            summary: Value::Null,
            verdicts: Vec::new(),
            timings_ms: BTreeMap::new(),
        })
    }

    pub fn passed(&self) -> bool {
        self.verdicts.iter().all(|v| v.pass)
    }

    /// True when every stored `pass` flag matches its value and threshold.
    pub fn verdicts_consistent(&self) -> bool {
        self.verdicts.iter().all(|v| v.pass == v.evaluate())
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let report: ExperimentReport = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        if report.schema != REPORT_SCHEMA {
            return Err(Error::Parse(format!("unsupported report schema {}", report.schema)));
        }
        Ok(report)
    }

    pub fn write_file(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()? + "\n")?;
        Ok(())
    }

    pub fn read_file(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

pub fn to_value(x: impl Serialize) -> Result<Value> {
    serde_json::to_value(x).map_err(|e| Error::Parse(e.to_string()))
}

/// One JSON object per line.
pub fn write_jsonl<T: Serialize, W: Write>(items: &[T], mut out: W) -> Result<()> {
    for item in items {
        serde_json::to_writer(&mut out, item).map_err(|e| Error::Io(e.to_string()))?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_metrics_jsonl(text: &str) -> Result<Vec<RoundMetrics>> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(|e| Error::Parse(e.to_string())))
        .collect()
}

fn millis(start: Instant) -> f64 {
    start.elapsed().as_secs_f64() * 1e3
}

/// Milliseconds spent in `f`, for report timings.
pub fn timed<T>(f: impl FnOnce() -> T) -> (T, f64) {
    let start = Instant::now();
    let out = f();
    (out, millis(start))
}

/// `m × t` input with uniform unit columns, drawn from stream 0 of `seed`.
pub fn unit_column_stream(m: usize, t: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    Ok(gen(&InstanceSpec::new(InstanceKind::RandomUnitColumns { m, t }, seed))?.columns())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StationarityOptions {
    pub r: usize,
    pub sigma: f64,
    pub runs: usize,
    pub steps: usize,
    pub level: f64,
    pub cov_tol: f64,
}

impl StationarityOptions {
    pub fn new(r: usize, sigma: f64, runs: usize, steps: usize) -> Self {
        StationarityOptions { r, sigma, runs, steps, level: DEFAULT_LEVEL, cov_tol: 0.05 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationarityResult {
    pub radius_ks: KsResult,
    pub coordinate_ks: Vec<KsResult>,
    pub covariance: CovTest,
    pub pass: bool,
}

/// Final states of `runs` kernel chains started from `N(0, σ² I_r)`.
pub fn kernel_marginals(opts: &StationarityOptions, seed: u64) -> Result<Vec<Vec<f64>>> {
    let params = KernelParams::new(opts.r, opts.sigma * opts.sigma)?;
    (0..opts.runs as u64)
        .into_par_iter()
        .map(|k| {
            let mut rng = RngHandle::new(seed, k);
            let mut x: Vec<f64> = rng.normals(opts.r).into_iter().map(|g| g * opts.sigma).collect();
            for _ in 0..opts.steps {
                x = kernel_step(&params, &x, &mut rng)?;
            }
            Ok(x)
        })
        .collect()
}

/// KS on the radius against the χ law, KS on every coordinate against
/// `N(0, σ²)`, and the covariance against `σ² I`.
pub fn stationarity(opts: &StationarityOptions, seed: u64) -> Result<StationarityResult> {
    let finals = kernel_marginals(opts, seed)?;
    let sigma2 = opts.sigma * opts.sigma;
    let law = ChiLaw::new(opts.r, sigma2)?;
    let radii: Vec<f64> = finals.iter().map(|x| crate::linalg::norm2(x)).collect();
    let radius_ks = ks_test(&radii, |s| law.cdf(s), opts.level)?;
    let coordinate_ks = (0..opts.r)
        .map(|j| normal_ks(&finals.iter().map(|x| x[j]).collect::<Vec<_>>(), sigma2, opts.level))
        .collect::<Result<Vec<_>>>()?;
    let target = PsdMatrix::new(Matrix::identity(opts.r).scale(sigma2))?;
    let covariance = cov_test(&finals, &target, opts.cov_tol)?;
    let pass = radius_ks.pass && coordinate_ks.iter().all(|k| k.pass) && covariance.pass;
    Ok(StationarityResult { radius_ks, coordinate_ks, covariance, pass })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WalkDistributionOptions {
    pub m: usize,
    pub r: usize,
    pub t: usize,
    pub runs: usize,
    pub level: f64,
    pub tol: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WalkDistributionResult {
    pub max_abs_mean: f64,
    pub covariance: CovTest,
    pub entry_ks: Vec<KsResult>,
    pub pass: bool,
}

/// Law of `vec(W_T)` over independent walks on one fixed random-unit-column
/// input; `W_T` should be `N(0, σ⋆² I)`.
pub fn walk_distribution(opts: &WalkDistributionOptions, seed: u64) -> Result<WalkDistributionResult> {
    let vs = unit_column_stream(opts.m, opts.t, seed)?;
    let finals: Vec<Vec<f64>> = (0..opts.runs as u64)
        .into_par_iter()
        .map(|k| {
            let mut state = walk_init(&WalkConfig::new(opts.m, opts.r, seed).with_stream(k + 1))?;
            for v in &vs {
                state.step(v)?;
            }
            Ok(state.w().as_slice().to_vec())
        })
        .collect::<Result<_>>()?;
    let s2 = sigma_star(opts.r)?.powi(2);
    let dim = opts.m * opts.r;
    let max_abs_mean = sample_mean(&finals).iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let covariance = cov_test(&finals, &PsdMatrix::new(Matrix::identity(dim).scale(s2))?, opts.tol)?;
    let entry_ks = (0..dim)
        .map(|j| normal_ks(&finals.iter().map(|x| x[j]).collect::<Vec<_>>(), s2, opts.level))
        .collect::<Result<Vec<_>>>()?;
    let pass = max_abs_mean <= opts.tol && covariance.pass && entry_ks.iter().all(|k| k.pass);
    Ok(WalkDistributionResult { max_abs_mean, covariance, entry_ks, pass })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BanaszczykOptions {
    pub m: usize,
    pub t: usize,
    pub delta: f64,
    pub rank: Option<usize>,
    pub mc_samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BanaszczykResult {
    pub r: usize,
    pub online_disc_g: McEstimate,
    pub threshold: f64,
    pub max_disc_2inf: f64,
    pub pass: bool,
}

/// `6 √(ln(2mT/δ))`.
pub fn banaszczyk_threshold(m: usize, t: usize, delta: f64) -> f64 {
    6.0 * (2.0 * m as f64 * t as f64 / delta).ln().sqrt()
}

/// Walk on a random-unit-column stream followed by an online Gaussian
/// discrepancy estimate of its output. Trial `k` uses stream `k`.
pub fn banaszczyk_run(opts: &BanaszczykOptions, seed: u64, trial: u64) -> Result<BanaszczykResult> {
    if !(opts.delta > 0.0 && opts.delta < 1.0) {
        return Err(Error::BadSpec(format!("delta must lie in (0, 1), got {}", opts.delta)));
    }
    let r = opts.rank.unwrap_or_else(|| banaszczyk_rank(opts.m, opts.t, opts.delta));
    let base = RngHandle::new(seed, trial);
    let input_seed = base.split(0).seed();
    let vs = unit_column_stream(opts.m, opts.t, input_seed)?;
    let walk = walk_run(&WalkConfig::new(opts.m, r, input_seed).with_stream(1), &vs)?;
    let est = online_disc_g(&vs, &walk.us, opts.mc_samples, &base.split(1))?;
    let threshold = banaszczyk_threshold(opts.m, opts.t, opts.delta);
    Ok(BanaszczykResult {
        r,
        online_disc_g: est,
        threshold,
        max_disc_2inf: walk.max_disc(),
        pass: est.mean <= threshold,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchPoint {
    pub m: usize,
    pub r: usize,
    pub rounds: usize,
    /// Per-round time of each repetition, nanoseconds.
    pub samples_ns: Vec<f64>,
    pub median_ns: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub points: Vec<BenchPoint>,
    /// Median per-round time against `m·r`.
    pub fit: LinearFit,
}

/// Times `rounds` walk steps, `reps` times after one warm-up pass.
pub fn bench_point(m: usize, r: usize, rounds: usize, reps: usize, seed: u64) -> Result<BenchPoint> {
    if reps < MIN_BENCH_REPS {
        return Err(Error::BadSpec(format!("bench needs at least {MIN_BENCH_REPS} repetitions")));
    }
    let pool = unit_column_stream(m, 8, seed)?;
    let mut samples_ns = Vec::with_capacity(reps);
    for rep in 0..=reps {
        let mut state = walk_init(&WalkConfig::new(m, r, seed).with_stream(rep as u64 + 1))?;
        let start = Instant::now();
        for k in 0..rounds {
            std::hint::black_box(state.step(&pool[k % pool.len()])?);
        }
        let ns = start.elapsed().as_secs_f64() * 1e9 / rounds.max(1) as f64;
        if rep > 0 {
            samples_ns.push(ns);
        }
    }
    Ok(BenchPoint { m, r, rounds, median_ns: median(&samples_ns), samples_ns })
}

/// Rounds per repetition, aiming at a roughly constant amount of work.
pub fn default_bench_rounds(m: usize, r: usize) -> usize {
    (4_000_000 / (m * r).max(1)).clamp(20, 2000)
}

pub fn bench(ms: &[usize], rs: &[usize], reps: usize, seed: u64) -> Result<BenchReport> {
    let mut points = Vec::new();
    for &m in ms {
        for &r in rs {
            points.push(bench_point(m, r, default_bench_rounds(m, r), reps, seed)?);
        }
    }
    let x: Vec<f64> = points.iter().map(|p| (p.m * p.r) as f64).collect();
    let y: Vec<f64> = points.iter().map(|p| p.median_ns).collect();
    Ok(BenchReport { fit: linear_fit(&x, &y), points })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn verdicts_evaluate() {
        assert!(Verdict::le("a", 1.0, 1.0).pass);
        assert!(!Verdict::le("a", 1.1, 1.0).pass);
        assert!(Verdict::ge("a", 2.0, 1.0).pass);
        let mut v = Verdict::ge("a", 0.5, 1.0);
        v.pass = true;
        assert!(!v.evaluate());
    }

    #[test]
    fn report_round_trip() {
        let mut r = ExperimentReport::new("demo", serde_json::json!({"m": 3}), 9).unwrap();
        r.metrics = serde_json::json!({"x": [0.1, 1e-300, 2.0 / 3.0]});
        r.verdicts.push(Verdict::le("x", 0.1, 0.2));
        r.timings_ms.insert("total".into(), 1.5);
        let back = ExperimentReport::from_json(&r.to_json().unwrap()).unwrap();
        assert_eq!(back, r);
        assert!(back.verdicts_consistent() && back.passed());
        let bad = r.to_json().unwrap().replace("\"schema\": 1", "\"schema\": 2");
        assert!(ExperimentReport::from_json(&bad).is_err());
    }

    #[test]
    fn jsonl_round_trip() {
        let ms = vec![
            RoundMetrics { round: 1, disc_2inf: 0.5, max_row_norm: 0.5 },
            RoundMetrics { round: 2, disc_2inf: 0.7, max_row_norm: 0.3 },
        ];
        let mut buf = Vec::new();
        write_jsonl(&ms, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 2);
        assert_eq!(read_metrics_jsonl(&text).unwrap(), ms);
    }

    #[test]
    fn small_stationarity_is_reproducible() {
        let opts = StationarityOptions::new(3, 0.5, 500, 20);
        let a = stationarity(&opts, 4).unwrap();
        assert_eq!(a, stationarity(&opts, 4).unwrap());
        assert!(a.radius_ks.statistic > 0.0);
    }

    #[test]
    fn stationarity_rejects_small_sigma() {
        let opts = StationarityOptions::new(2, 0.4, 100, 5);
        assert!(matches!(stationarity(&opts, 1), Err(Error::BadVariance { .. })));
    }

    #[test]
    fn banaszczyk_small_run() {
        let opts = BanaszczykOptions { m: 4, t: 16, delta: 0.05, rank: None, mc_samples: 500 };
        let a = banaszczyk_run(&opts, 3, 0).unwrap();
        assert_eq!(a.r, banaszczyk_rank(4, 16, 0.05));
        assert_eq!(a, banaszczyk_run(&opts, 3, 0).unwrap());
        assert!(a.online_disc_g.mean > 0.0 && a.online_disc_g.std_error > 0.0);
        assert!(banaszczyk_run(&BanaszczykOptions { delta: 1.5, ..opts }, 3, 0).is_err());
    }

    #[test]
    fn bench_needs_reps() {
        assert!(bench_point(4, 2, 10, 3, 0).is_err());
        let p = bench_point(4, 2, 10, 5, 0).unwrap();
        assert_eq!(p.samples_ns.len(), 5);
        assert!(p.median_ns > 0.0);
    }
}
