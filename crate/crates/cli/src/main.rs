#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::json;

use hmm_lab::bench::{self, ExperimentConfig, Preset, RateCurve};
use hmm_lab::delta::{estimate_rho_with, RhoOptions};
use hmm_lab::joint::{algorithm1, JointConfig};
use hmm_lab::linalg::EigenConfig;
use hmm_lab::oracle::{self, Sabotage, VerifyOptions};
use hmm_lab::{estimate_theta_known_delta, loss, sample_hmm, ModelParams, RngStream, SampleSet};

const THREADS_ENV: &str = "HMM_LAB_THREADS";

#[derive(Parser)]
#[command(name = "hmm-lab", version, about = "Estimation harness for the binary hidden-Markov Gaussian mean model")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw samples and write them as CSV, with a truth sidecar.
    Simulate(SimulateArgs),
    /// Block-PCA mean estimate for a known flip probability.
    EstimateTheta(EstimateThetaArgs),
    /// Correlation estimate of the flip probability.
    EstimateDelta(EstimateDeltaArgs),
    /// Three-step estimate for an unknown flip probability.
    Joint(JointArgs),
    /// Monte Carlo rate curve from a preset or a JSON config.
    Bench(BenchArgs),
    /// Run the oracle verification suite.
    Verify(VerifyArgs),
}

#[derive(Args, Serialize)]
struct SimulateArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    d: usize,
    #[arg(long)]
    delta: f64,
    /// Norm of the mean; its direction is drawn uniformly from the seed.
    #[arg(long, required_unless_present = "theta_file", conflicts_with = "theta_file")]
    theta_norm: Option<f64>,
    /// JSON array holding the mean vector.
    #[arg(long)]
    theta_file: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Serialize)]
struct EigenArgs {
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
    #[arg(long, default_value_t = 10_000)]
    max_iter: usize,
}

impl EigenArgs {
    fn config(&self) -> Result<EigenConfig, Failure> {
        if !(self.tol > 0.0) || self.max_iter == 0 {
            return Err(Failure::usage("--tol and --max-iter must be positive"));
        }
        Ok(EigenConfig {
            tol: self.tol,
            max_iter: self.max_iter,
        })
    }
}

#[derive(Args, Serialize)]
struct EstimateThetaArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    delta: f64,
    /// Truth sidecar written by `simulate`; adds the realized loss.
    #[arg(long)]
    truth: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    eigen: EigenArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Serialize)]
struct EstimateDeltaArgs {
    #[arg(long)]
    input: PathBuf,
    /// JSON array holding the reference mean.
    #[arg(long)]
    theta_sharp_file: PathBuf,
    #[arg(long)]
    truth: Option<PathBuf>,
    #[arg(long, default_value_t = 0.0)]
    clamp_lo: f64,
    #[arg(long, default_value_t = 1.0)]
    clamp_hi: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Serialize)]
struct JointArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value_t = 1.0)]
    lambda_theta: f64,
    #[arg(long, default_value_t = 1.0)]
    lambda_delta: f64,
    #[arg(long)]
    truth: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    eigen: EigenArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    /// One of fig-theta, fig-delta-mismatched, fig-delta-matched, fig-joint.
    #[arg(long, required_unless_present = "config", conflicts_with = "config")]
    preset: Option<String>,
    /// JSON experiment config, e.g. a `.config.json` written by an earlier run.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Trials per grid point for presets.
    #[arg(long, default_value_t = Preset::DEFAULT_TRIALS, conflicts_with = "config")]
    trials: usize,
    #[arg(long, default_value_t = 0, conflicts_with = "config")]
    seed: u64,
    /// CSV destination; the resolved config goes next to it as `<out>.config.json`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long, default_value_t = 16)]
    max_ell: usize,
    #[arg(long, default_value_t = 40)]
    quad_order: usize,
    /// Number of points in the flip-probability grid over [0, 1/2].
    #[arg(long, default_value_t = 11)]
    grid: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Deliberately break a formula to check that the suite fails.
    #[arg(long, value_parser = ["xi"])]
    sabotage: Option<String>,
}

/// Truth sidecar written next to simulated samples.
#[derive(Serialize, Deserialize)]
struct Truth {
    theta_star: Vec<f64>,
    delta: f64,
    signs: Vec<i8>,
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Self {
            code: 2,
            message: message.into(),
        }
    }
}

macro_rules! input_error {
    ($($t:ty),*) => {$(
        impl From<$t> for Failure {
            fn from(e: $t) -> Self {
                Failure::usage(e.to_string())
            }
        }
    )*};
}
input_error!(hmm_lab::Error, io::Error, csv::Error, serde_json::Error);

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let result = match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::EstimateTheta(a) => estimate_theta(a),
        Command::EstimateDelta(a) => estimate_delta(a),
        Command::Joint(a) => joint(a),
        Command::Bench(a) => run_bench(a),
        Command::Verify(a) => verify(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn sidecar(out: &Path, suffix: &str) -> PathBuf {
    let mut name = out.as_os_str().to_os_string();
    name.push(suffix);
    PathBuf::from(name)
}

fn read_vector(path: &Path) -> Result<Vec<f64>, Failure> {
    let v: Vec<f64> = serde_json::from_str(&fs::read_to_string(path)?)
        .map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?;
    Ok(v)
}

fn read_samples(path: &Path) -> Result<SampleSet, Failure> {
    let mut reader = csv::Reader::from_path(path)?;
    let d = reader.headers()?.len();
    let mut data = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        for field in record.iter() {
            let v: f64 = field.trim().parse().map_err(|_| {
                Failure::usage(format!("{}: row {}: bad number {field:?}", path.display(), i + 1))
            })?;
            data.push(v);
        }
    }
    if d == 0 || data.is_empty() {
        return Err(Failure::usage(format!("{}: no samples", path.display())));
    }
    let n = data.len() / d;
    Ok(SampleSet::from_flat(data, n, d)?)
}

fn read_truth(path: &Option<PathBuf>) -> Result<Option<Truth>, Failure> {
    match path {
        None => Ok(None),
        Some(p) => serde_json::from_str(&fs::read_to_string(p)?)
            .map(Some)
            .map_err(|e| Failure::usage(format!("{}: {e}", p.display()))),
    }
}

fn emit_json(value: &serde_json::Value, out: &Option<PathBuf>) -> Result<(), Failure> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    match out {
        Some(p) => fs::write(p, text)?,
        None => io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn simulate(args: SimulateArgs) -> Result<(), Failure> {
    let root = RngStream::new(args.seed, 0);
    let theta = match (&args.theta_file, args.theta_norm) {
        (Some(path), _) => {
            let v = read_vector(path)?;
            if v.len() != args.d {
                return Err(Failure::usage(format!("theta file has {} entries, expected {}", v.len(), args.d)));
            }
            v
        }
        (None, Some(t)) => {
            if !(t >= 0.0 && t.is_finite()) {
                return Err(Failure::usage("--theta-norm must be finite and nonnegative"));
            }
            bench::random_direction(root.substream(0), args.d)
                .into_iter()
                .map(|x| x * t)
                .collect()
        }
        (None, None) => unreachable!("clap requires one of the two"),
    };
    let params = ModelParams::new(theta, args.delta, args.n)?;
    let (signs, x) = sample_hmm(&params, root.substream(1))?;

    let mut writer = csv::Writer::from_path(&args.out)?;
    writer.write_record((1..=args.d).map(|j| format!("x{j}")))?;
    for row in x.rows() {
        writer.write_record(row.iter().map(|v| v.to_string()))?;
    }
    writer.flush()?;

    let truth = Truth {
        theta_star: params.theta_star().to_vec(),
        delta: params.delta(),
        signs: signs.values().to_vec(),
    };
    fs::write(sidecar(&args.out, ".truth.json"), serde_json::to_string(&truth)? + "\n")?;
    let config = json!({ "command": "simulate", "args": args, "theta_star": params.theta_star() });
    fs::write(sidecar(&args.out, ".config.json"), serde_json::to_string_pretty(&config)? + "\n")?;
    Ok(())
}

fn estimate_theta(args: EstimateThetaArgs) -> Result<(), Failure> {
    let x = read_samples(&args.input)?;
    let est = estimate_theta_known_delta(&x, args.delta, &args.eigen.config()?, RngStream::new(args.seed, 0))?;
    let truth = read_truth(&args.truth)?;
    let realized = truth.map(|t| loss(&est.theta_hat, &t.theta_star)).transpose()?;
    emit_json(&json!({ "config": &args, "estimate": est, "loss": realized }), &args.out)
}

fn estimate_delta(args: EstimateDeltaArgs) -> Result<(), Failure> {
    let x = read_samples(&args.input)?;
    let sharp = read_vector(&args.theta_sharp_file)?;
    let opts = RhoOptions {
        clamp: (args.clamp_lo, args.clamp_hi),
        ..Default::default()
    };
    let est = estimate_rho_with(&x, &sharp, &opts)?;
    let truth = read_truth(&args.truth)?;
    let realized = truth.map(|t| (est.delta_raw - t.delta).abs());
    emit_json(&json!({ "config": &args, "estimate": est, "loss": realized }), &args.out)
}

fn joint(args: JointArgs) -> Result<(), Failure> {
    let x = read_samples(&args.input)?;
    let cfg = JointConfig {
        eigen: args.eigen.config()?,
        ..JointConfig::new(args.lambda_theta, args.lambda_delta)?
    };
    let est = algorithm1(&x, &cfg, RngStream::new(args.seed, 0))?;
    let truth = read_truth(&args.truth)?;
    let realized = truth.map(|t| loss(&est.theta_hat, &t.theta_star)).transpose()?;
    emit_json(
        &json!({ "config": &args, "joint_config": cfg, "estimate": est, "loss": realized }),
        &args.out,
    )
}

fn thread_cap() -> Result<usize, Failure> {
    match std::env::var(THREADS_ENV) {
        Err(_) => Ok(0),
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| Failure::usage(format!("{THREADS_ENV} must be a nonnegative integer, got {v:?}"))),
    }
}

fn run_bench(args: BenchArgs) -> Result<(), Failure> {
    let cfg: ExperimentConfig = match (&args.preset, &args.config) {
        (Some(name), _) => {
            let preset = Preset::from_name(name).ok_or_else(|| {
                let names: Vec<_> = Preset::ALL.iter().map(|p| p.name()).collect();
                Failure::usage(format!("unknown preset {name:?}; expected one of {}", names.join(", ")))
            })?;
            preset.config(args.trials, args.seed)
        }
        (None, Some(path)) => serde_json::from_str(&fs::read_to_string(path)?)
            .map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?,
        (None, None) => unreachable!("clap requires one of the two"),
    };
    cfg.validate()?;
    let curve = bench::with_thread_cap(thread_cap()?, || bench::run_curve(&cfg))??;

    let csv_bytes = curve_csv(&curve)?;
    match &args.out {
        Some(p) => {
            fs::write(p, csv_bytes)?;
            fs::write(sidecar(p, ".config.json"), serde_json::to_string_pretty(&cfg)? + "\n")?;
        }
        None => io::stdout().write_all(&csv_bytes)?,
    }
    Ok(())
}

fn curve_csv(curve: &RateCurve) -> Result<Vec<u8>, Failure> {
    let joint = curve.points.iter().any(|p| p.branches.is_some());
    let mut writer = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["t", "mean_loss", "std_loss", "theory_rate", "trials"];
    if joint {
        header.extend(["frac_zero", "frac_a", "frac_a_smalldelta", "frac_c"]);
    }
    writer.write_record(&header)?;
    for p in &curve.points {
        let mut row = vec![
            p.t.to_string(),
            p.mean_loss.to_string(),
            p.std_loss.to_string(),
            p.theory_rate.to_string(),
            p.trials.to_string(),
        ];
        if let Some(b) = p.branches {
            row.extend([b.zero, b.a_large, b.a_small_delta, b.c].map(|v| v.to_string()));
        }
        writer.write_record(&row)?;
    }
    writer
        .into_inner()
        .map_err(|e| Failure::usage(e.to_string()))
}

fn verify(args: VerifyArgs) -> Result<(), Failure> {
    let opts = VerifyOptions {
        max_ell: args.max_ell,
        quad_order: args.quad_order,
        grid: args.grid,
        seed: args.seed,
        sabotage: args.sabotage.map(|_| Sabotage::Xi),
        ..Default::default()
    };
    if opts.quad_order == 0 || opts.grid == 0 {
        return Err(Failure::usage("--quad-order and --grid must be positive"));
    }
    let reports = oracle::run_verification(&opts)?;
    let width = reports.iter().map(|r| r.name.len()).max().unwrap_or(0);
    let mut failed = 0;
    for r in &reports {
        let status = if r.passed() { "PASS" } else { "FAIL" };
        println!("{:<width$}  {:>8} cases  {status}", r.name, r.cases);
        if !r.passed() {
            failed += 1;
            for v in r.violations.iter().take(10) {
                println!("    {v}");
            }
            if r.violations.len() > 10 {
                println!("    ... {} more", r.violations.len() - 10);
            }
        }
    }
    if failed > 0 {
        return Err(Failure {
            code: 1,
            message: format!("{failed} of {} checks failed", reports.len()),
        });
    }
    Ok(())
}
