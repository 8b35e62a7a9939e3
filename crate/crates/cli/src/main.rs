//! `discforge`: run the walk, the evaluators and the experiments from the
//! command line.
//!
//! Exit codes: 0 success or pass, 1 a statistical check failed, 2 usage or
//! input error. `DISCFORGE_THREADS` caps the worker pool.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use discforge::discrepancy::{
    disc_bruteforce, disc_g_mc, discs_objective, online_disc_g, vdisc_objective, vdisc_objective_units, SphericalPoint,
    DEFAULT_MC_SAMPLES,
};
use discforge::experiments::{
    banaszczyk_run, bench, timed, to_value, write_jsonl, BanaszczykOptions, ExperimentReport, StationarityOptions,
    Verdict, DEFAULT_LEVEL, DEFAULT_TRIALS, MIN_BENCH_REPS,
};
use discforge::instances::{gen, komlos_normalize, InstanceSpec};
use discforge::linalg::{CorrelationMatrix, Matrix, RngHandle};
use discforge::rounding::{rounding_experiment, RoundingOptions, Setting, DEFAULT_C_SCALE};
use discforge::walk::{walk_run, WalkConfig};
use discforge::Error;

#[derive(Parser)]
#[command(name = "discforge", version, about = "Online Gaussian discrepancy toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the rank-r walk on the columns of a matrix file.
    Walk {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        rank: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Rescale columns of norm above 1 before running.
        #[arg(long)]
        komlos_normalize: bool,
    },
    /// Kernel marginal after `steps` steps from the stationary law.
    Stationarity {
        #[arg(long)]
        r: usize,
        #[arg(long)]
        sigma: f64,
        #[arg(long, default_value_t = 5000)]
        runs: usize,
        #[arg(long, default_value_t = 100)]
        steps: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = DEFAULT_LEVEL)]
        level: f64,
        #[arg(long, default_value_t = 0.05)]
        cov_tol: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate a discrepancy objective.
    Eval {
        op: EvalOp,
        #[arg(long)]
        matrix: PathBuf,
        /// Correlation matrix (vdisc, discg).
        #[arg(long)]
        coupling: Option<PathBuf>,
        /// Unit-row matrix (vdisc, online-discg).
        #[arg(long)]
        units: Option<PathBuf>,
        /// 1 x n point of norm √n (discs).
        #[arg(long)]
        point: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_MC_SAMPLES)]
        samples: usize,
        /// Required for the Monte Carlo estimators.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// GW and PCA rounding on planted instances.
    Rounding {
        #[arg(long)]
        setting: Setting,
        #[arg(long, default_value_t = 502)]
        n: usize,
        #[arg(long, default_value_t = DEFAULT_TRIALS)]
        trials: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = DEFAULT_C_SCALE)]
        c_scale: f64,
        #[arg(long, default_value_t = 1000)]
        samples: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Walk plus online Gaussian discrepancy on random unit columns.
    Banaszczyk {
        #[arg(long)]
        m: usize,
        #[arg(long)]
        t: usize,
        #[arg(long)]
        delta: f64,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        rank: Option<usize>,
        #[arg(long, default_value_t = DEFAULT_TRIALS)]
        trials: usize,
        #[arg(long, default_value_t = 20_000)]
        samples: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Per-round timing; comma-separated lists give a grid and a linear fit in m·r.
    Bench {
        #[arg(long, value_delimiter = ',')]
        m: Vec<usize>,
        /// Rounds per repetition (default scales with m·r).
        #[arg(long)]
        t: Option<usize>,
        #[arg(long, value_delimiter = ',')]
        rank: Vec<usize>,
        #[arg(long, default_value_t = MIN_BENCH_REPS)]
        reps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate an instance from key=value pairs or a config file.
    Gen {
        /// `key=value` pairs, e.g. `kind=identity t=5`.
        pairs: Vec<String>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum EvalOp {
    Disc,
    Vdisc,
    Discs,
    Discg,
    OnlineDiscg,
}

impl EvalOp {
    fn name(self) -> &'static str {
        match self {
            EvalOp::Disc => "disc",
            EvalOp::Vdisc => "vdisc",
            EvalOp::Discs => "discs",
            EvalOp::Discg => "discg",
            EvalOp::OnlineDiscg => "online-discg",
        }
    }
}

enum Failure {
    Usage(String),
    Check,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Usage(e.to_string())
    }
}

type CmdResult = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(msg) = configure_threads() {
        eprintln!("error: {msg}");
        return ExitCode::from(2);
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Check) => ExitCode::from(1),
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn configure_threads() -> Result<(), String> {
    let Ok(v) = std::env::var("DISCFORGE_THREADS") else { return Ok(()) };
    let n: usize = v.trim().parse().map_err(|_| format!("DISCFORGE_THREADS must be a positive integer, got {v:?}"))?;
    if n == 0 {
        return Err("DISCFORGE_THREADS must be positive".into());
    }
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| e.to_string())
}

fn run(cmd: Command) -> CmdResult {
    match cmd {
        Command::Walk { input, rank, seed, out, komlos_normalize: normalize } => {
            walk(&input, rank, seed, &out, normalize)
        }
        Command::Stationarity { r, sigma, runs, steps, seed, level, cov_tol, out } => {
            let opts = StationarityOptions { r, sigma, runs, steps, level, cov_tol };
            stationarity(opts, seed, out.as_deref())
        }
        Command::Eval { op, matrix, coupling, units, point, samples, seed, out } => {
            eval(op, &matrix, coupling.as_deref(), units.as_deref(), point.as_deref(), samples, seed, out.as_deref())
        }
        Command::Rounding { setting, n, trials, seed, c_scale, samples, out } => {
            let opts = RoundingOptions { trials, c_scale, mc_samples: samples, ..Default::default() };
            rounding(setting, n, seed, opts, out.as_deref())
        }
        Command::Banaszczyk { m, t, delta, seed, rank, trials, samples, out } => {
            banaszczyk(BanaszczykOptions { m, t, delta, rank, mc_samples: samples }, trials, seed, out.as_deref())
        }
        Command::Bench { m, t, rank, reps, seed, out } => bench_cmd(&m, t, &rank, reps, seed, out.as_deref()),
        Command::Gen { pairs, config, out } => gen_cmd(&pairs, config.as_deref(), out.as_deref()),
    }
}

fn emit(text: &str, out: Option<&Path>) -> CmdResult {
    match out {
        Some(path) => {
            fs::write(path, format!("{text}\n")).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
        }
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn finish(report: &ExperimentReport, out: Option<&Path>) -> CmdResult {
    emit(&report.to_json()?, out)?;
    if report.passed() {
        Ok(())
    } else {
        Err(Failure::Check)
    }
}

fn read_matrix(path: &Path) -> Result<(Matrix, Vec<u8>), Failure> {
    let bytes = fs::read(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    let text =
        String::from_utf8(bytes.clone()).map_err(|_| Failure::Usage(format!("{}: not UTF-8", path.display())))?;
    let m = Matrix::parse(&text).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    Ok((m, bytes))
}

fn walk(input: &Path, rank: usize, seed: u64, out: &Path, normalize: bool) -> CmdResult {
    let (mut a, _) = read_matrix(input)?;
    if normalize {
        a = komlos_normalize(&a);
    }
    let config = WalkConfig::new(a.rows(), rank, seed);
    let (res, ms) = timed(|| walk_run(&config, &a.columns()));
    let output = res?;
    fs::create_dir_all(out).map_err(|e| Failure::Usage(format!("{}: {e}", out.display())))?;
    output.stream_matrix()?.write_file(out.join("stream.txt"))?;
    let mut metrics = Vec::new();
    write_jsonl(&output.metrics, &mut metrics)?;
    fs::write(out.join("metrics.jsonl"), metrics).map_err(Error::from)?;
    let mut report =
        ExperimentReport::new("walk", json!({"input": input, "m": a.rows(), "t": a.cols(), "rank": rank}), seed)?;
    report.metrics = json!({"stream": "stream.txt", "rounds": "metrics.jsonl"});
    report.summary = json!({"max_disc_2inf": output.max_disc(), "rounds": output.us.len()});
    report.timings_ms.insert("walk".into(), ms);
    report.write_file(out.join("report.json"))?;
    Ok(())
}

fn stationarity(opts: StationarityOptions, seed: u64, out: Option<&Path>) -> CmdResult {
    let (res, ms) = timed(|| discforge::experiments::stationarity(&opts, seed));
    let res = res?;
    let mut report = ExperimentReport::new("stationarity", opts, seed)?;
    report.verdicts.push(Verdict::ge("radius_ks_p", res.radius_ks.p_value, opts.level));
    for (j, k) in res.coordinate_ks.iter().enumerate() {
        report.verdicts.push(Verdict::ge(format!("coordinate_{j}_ks_p"), k.p_value, opts.level));
    }
    report.verdicts.push(Verdict::le("covariance_max_deviation", res.covariance.max_deviation, opts.cov_tol));
    report.metrics = to_value(&res)?;
    report.summary = json!({"pass": res.pass});
    report.timings_ms.insert("total".into(), ms);
    finish(&report, out)
}

fn digest(parts: &[&[u8]]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    hex::encode(h.finalize())
}

fn required<'a>(p: Option<&'a Path>, flag: &str, op: EvalOp) -> Result<&'a Path, Failure> {
    p.ok_or_else(|| Failure::Usage(format!("eval {} needs --{flag}", op.name())))
}

fn need_seed(seed: Option<u64>, op: EvalOp) -> Result<u64, Failure> {
    seed.ok_or_else(|| Failure::Usage(format!("eval {} needs --seed", op.name())))
}

#[allow(clippy::too_many_arguments)]
fn eval(
    op: EvalOp,
    matrix: &Path,
    coupling: Option<&Path>,
    units: Option<&Path>,
    point: Option<&Path>,
    samples: usize,
    seed: Option<u64>,
    out: Option<&Path>,
) -> CmdResult {
    let (a, a_bytes) = read_matrix(matrix)?;
    let (value, std_error, used_samples, used_seed, extra): (f64, Option<f64>, Option<usize>, Option<u64>, Vec<u8>) =
        match op {
            EvalOp::Disc => (disc_bruteforce(&a)?.0, None, None, None, Vec::new()),
            EvalOp::Vdisc => match (coupling, units) {
                (Some(c), None) => {
                    let (s, bytes) = read_matrix(c)?;
                    (vdisc_objective(&a, &CorrelationMatrix::new(s)?)?, None, None, None, bytes)
                }
                (None, Some(u)) => {
                    let (u, bytes) = read_matrix(u)?;
                    (vdisc_objective_units(&a, &u)?, None, None, None, bytes)
                }
                _ => return Err(Failure::Usage("eval vdisc needs exactly one of --coupling or --units".into())),
            },
            EvalOp::Discs => {
                let (p, bytes) = read_matrix(required(point, "point", op)?)?;
                if p.rows() != 1 {
                    return Err(Failure::Usage("--point must be a 1 x n matrix".into()));
                }
                (discs_objective(&a, &SphericalPoint::new(p.row(0).to_vec())?)?, None, None, None, bytes)
            }
            EvalOp::Discg => {
                let seed = need_seed(seed, op)?;
                let (s, bytes) = read_matrix(required(coupling, "coupling", op)?)?;
                let est = disc_g_mc(&a, &CorrelationMatrix::new(s)?, samples, &RngHandle::new(seed, 0))?;
                (est.mean, Some(est.std_error), Some(samples), Some(seed), bytes)
            }
            EvalOp::OnlineDiscg => {
                let seed = need_seed(seed, op)?;
                let (u, bytes) = read_matrix(required(units, "units", op)?)?;
                let us: Vec<Vec<f64>> = (0..u.rows()).map(|i| u.row(i).to_vec()).collect();
                let est = online_disc_g(&a.columns(), &us, samples, &RngHandle::new(seed, 0))?;
                (est.mean, Some(est.std_error), Some(samples), Some(seed), bytes)
            }
        };
    let out_json = json!({
        "op": op.name(),
        "inputs_digest": digest(&[&a_bytes, &extra]),
        "value": value,
        "std_error": std_error,
        "samples": used_samples,
        "seed": used_seed,
    });
    emit(&serde_json::to_string_pretty(&out_json).expect("json"), out)
}

fn rounding(setting: Setting, n: usize, seed: u64, opts: RoundingOptions, out: Option<&Path>) -> CmdResult {
    let (res, ms) = timed(|| rounding_experiment(setting, n, seed, &opts));
    let rep = res?;
    let v = &rep.verdicts;
    let mut report = ExperimentReport::new("rounding", json!({"setting": setting, "n": n, "options": opts}), seed)?;
    report.verdicts = vec![
        Verdict::le("planted_discG_max", v.max_planted_disc_g, discforge::rounding::PLANTED_DISC_G_TOL),
        Verdict::ge("orbit_membership", if v.all_in_orbit { 1.0 } else { 0.0 }, 1.0),
        Verdict::ge("gw_fraction_above_threshold", v.gw_fraction_above, discforge::rounding::ROUNDING_PASS_FRACTION),
        Verdict::ge("feasible_fraction", v.feasible_fraction, discforge::rounding::ROUNDING_PASS_FRACTION),
    ];
    report.summary =
        json!({"gw_threshold": v.gw_threshold, "gw_linf_median": rep.gw_linf, "pca_linf_median": rep.pca_linf});
    report.metrics = to_value(&rep)?;
    report.timings_ms.insert("total".into(), ms);
    finish(&report, out)
}

fn banaszczyk(opts: BanaszczykOptions, trials: usize, seed: u64, out: Option<&Path>) -> CmdResult {
    if trials == 0 {
        return Err(Failure::Usage("--trials must be positive".into()));
    }
    let (res, ms) = timed(|| (0..trials as u64).map(|k| banaszczyk_run(&opts, seed, k)).collect::<Result<Vec<_>, _>>());
    let runs = res?;
    let passed = runs.iter().filter(|r| r.pass).count();
    let threshold = runs[0].threshold;
    let worst = runs.iter().map(|r| r.online_disc_g.mean).fold(0.0, f64::max);
    let mut report = ExperimentReport::new("banaszczyk", json!({"options": opts, "trials": trials}), seed)?;
    report.verdicts.push(Verdict::ge("pass_fraction", passed as f64 / trials as f64, 0.95));
    report.summary = json!({"r": runs[0].r, "threshold": threshold, "worst_online_discG": worst, "passed": passed});
    report.metrics = to_value(&runs)?;
    report.timings_ms.insert("total".into(), ms);
    finish(&report, out)
}

fn bench_cmd(ms: &[usize], t: Option<usize>, rs: &[usize], reps: usize, seed: u64, out: Option<&Path>) -> CmdResult {
    if ms.is_empty() || rs.is_empty() {
        return Err(Failure::Usage("bench needs --m and --rank".into()));
    }
    let mut report = ExperimentReport::new("bench", json!({"m": ms, "rank": rs, "t": t, "reps": reps}), seed)?;
    let (res, total) = timed(|| match t {
        Some(rounds) => {
            let points = ms
                .iter()
                .flat_map(|&m| rs.iter().map(move |&r| (m, r)))
                .map(|(m, r)| discforge::experiments::bench_point(m, r, rounds, reps, seed))
                .collect::<Result<Vec<_>, _>>()?;
            let x: Vec<f64> = points.iter().map(|p| (p.m * p.r) as f64).collect();
            let y: Vec<f64> = points.iter().map(|p| p.median_ns).collect();
            let fit = (points.len() > 1).then(|| discforge::stats::linear_fit(&x, &y));
            Ok::<Value, Error>(json!({"points": points, "fit": fit}))
        }
        None => to_value(bench(ms, rs, reps, seed)?),
    });
    report.metrics = res?;
    report.timings_ms.insert("total".into(), total);
    emit(&report.to_json()?, out)
}

fn gen_cmd(pairs: &[String], config: Option<&Path>, out: Option<&Path>) -> CmdResult {
    let mut text = match config {
        Some(p) => fs::read_to_string(p).map_err(|e| Failure::Usage(format!("{}: {e}", p.display())))?,
        None => String::new(),
    };
    for p in pairs {
        text.push('\n');
        text.push_str(p);
    }
    let a = gen(&InstanceSpec::parse(&text)?)?;
    emit(a.to_text().trim_end(), out)
}
