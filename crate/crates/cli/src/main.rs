use std::fs::File;
use std::io::{self, BufReader, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use dimfft::estimate::estimate_flat;
use dimfft::harness::{self, Algorithm, RunConfig, SignalModel, SignalSpec, SweepGrid};
use dimfft::pruning::{hamming_ball_size, verify_lower_bound};
use dimfft::random_support::{
    bernoulli_collision_stats, make_bucket, sparse_fft_random_support, RandomSupportConfig,
};
use dimfft::signal::read_signal;
use dimfft::sparse_fft::{sparse_fft_random_phase, sparse_fft_worst_case, RecoveryConfig};
use dimfft::{Dims, SignalOracle};

#[derive(Parser)]
#[command(name = "dimfft", version, about = "Sparse FFT recovery and simulation tools")]
struct Cli {
    /// Global seed.
    #[arg(long, global = true, env = "DIMFFT_SEED", default_value_t = 0)]
    seed: u64,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Estimate a spectrum on a known support.
    Estimate(EstimateArgs),
    /// Recover a sparse spectrum.
    Recover(RecoverArgs),
    /// Simulate the threshold pruning process on Hamming-ball trees.
    PruneSim(PruneArgs),
    /// Bucket collision statistics of Bernoulli supports.
    BernoulliStats(BernoulliArgs),
    /// Run a grid of experiments described by a JSON file.
    Sweep(SweepArgs),
    /// Quick end-to-end check of every algorithm.
    Selftest,
}

#[derive(Args)]
struct SignalArgs {
    #[arg(long, default_value_t = 16)]
    n: usize,
    #[arg(long, default_value_t = 1)]
    d: usize,
    #[arg(long, default_value_t = 4)]
    k: usize,
    /// Signal model for generated instances.
    #[arg(long, value_enum)]
    model: Option<ModelArg>,
    /// Binary signal file; replaces generated instances.
    #[arg(long)]
    signal: Option<PathBuf>,
}

#[derive(Args)]
struct EstimateArgs {
    #[command(flatten)]
    signal: SignalArgs,
    /// Comma-separated flattened support; required with --signal.
    #[arg(long, value_delimiter = ',')]
    support: Vec<u64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Worst,
    RandomPhase,
    RandomSupport,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelArg {
    WorstCase,
    RandomPhase,
    RandomSupport,
    HammingBall,
}

impl From<ModelArg> for SignalModel {
    fn from(m: ModelArg) -> Self {
        match m {
            ModelArg::WorstCase => SignalModel::WorstCase,
            ModelArg::RandomPhase => SignalModel::RandomPhase,
            ModelArg::RandomSupport => SignalModel::RandomSupport,
            ModelArg::HammingBall => SignalModel::HammingBall,
        }
    }
}

#[derive(Args)]
struct RecoverArgs {
    #[arg(long, value_enum)]
    mode: ModeArg,
    #[command(flatten)]
    signal: SignalArgs,
    #[arg(long, default_value_t = 1)]
    trials: u64,
    #[arg(long, default_value_t = 2.0)]
    c_rip: f64,
    #[arg(long, default_value_t = 2.0)]
    c_phase: f64,
    #[arg(long, default_value_t = 1e-12)]
    eps_zero: f64,
    #[arg(long, default_value_t = 4)]
    gamma: usize,
    #[arg(long, default_value_t = 1.0)]
    c_hash: f64,
    #[arg(long, default_value_t = 0.1)]
    c_test: f64,
    /// Iteration cap for the tree-based modes.
    #[arg(long)]
    max_iterations: Option<usize>,
}

#[derive(Args)]
struct PruneArgs {
    #[arg(long, default_value_t = 64)]
    log_n: u32,
    #[arg(long, default_value_t = 3)]
    c: u32,
    #[arg(long, default_value_t = 16)]
    tau: u32,
    /// Run the grid log_n in {16,32,64}, c in {1,2,3}, tau = ceil(log2 k) + {0,1,2}.
    #[arg(long)]
    sweep: bool,
}

#[derive(Args)]
struct BernoulliArgs {
    #[arg(long, default_value_t = 16)]
    n: usize,
    #[arg(long, default_value_t = 3)]
    d: usize,
    #[arg(long, default_value_t = 16)]
    k: usize,
    /// Total bucket count |B|.
    #[arg(long, default_value_t = 64)]
    buckets: usize,
    /// Total coarse bucket count |B'|.
    #[arg(long)]
    coarse: Option<usize>,
    #[arg(long, default_value_t = 1000)]
    trials: usize,
}

#[derive(Args)]
struct SweepArgs {
    /// JSON grid description.
    #[arg(long)]
    grid: PathBuf,
    /// Output stem; writes <stem>.csv and <stem>.json.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    threads: Option<usize>,
}

fn print_json<T: serde::Serialize>(v: &T) -> Result<()> {
    let mut out = io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, v)?;
    writeln!(out)?;
    Ok(())
}

fn load_signal(path: &PathBuf) -> Result<SignalOracle> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let (dims, x) = read_signal(BufReader::new(f))?;
    Ok(SignalOracle::from_dense(dims, x)?)
}

fn generated_runs(
    sig: &SignalArgs,
    default_model: SignalModel,
    alg: Algorithm,
    trials: u64,
    seed: u64,
    cfg: &RunConfig,
) -> Result<bool> {
    let model = sig.model.map(SignalModel::from).unwrap_or(default_model);
    let mut reports = Vec::new();
    for t in 0..trials {
        let spec = SignalSpec::new(model, sig.n, sig.d, sig.k, seed.wrapping_add(t));
        reports.push(harness::run(&spec, alg, cfg)?);
    }
    let ok = reports.iter().all(|r| r.success);
    if reports.len() == 1 {
        print_json(&reports[0])?;
    } else {
        print_json(&reports)?;
    }
    Ok(ok)
}

fn cmd_estimate(a: &EstimateArgs, seed: u64) -> Result<bool> {
    match &a.signal.signal {
        Some(p) => {
            if a.support.is_empty() {
                bail!("--support is required with --signal");
            }
            let mut o = load_signal(p)?;
            let r = estimate_flat(&mut o, &a.support, |_, _| {})?;
            print_json(&r)?;
            Ok(true)
        }
        None => generated_runs(&a.signal, SignalModel::WorstCase, Algorithm::Estimate, 1, seed, &RunConfig::default()),
    }
}

fn cmd_recover(a: &RecoverArgs, seed: u64) -> Result<bool> {
    let recovery = RecoveryConfig { c_rip: a.c_rip, c_phase: a.c_phase, eps_zero: a.eps_zero, seed, max_iterations: a.max_iterations };
    let random_support =
        RandomSupportConfig { gamma: a.gamma, c_hash: a.c_hash, c_test: a.c_test, eps_zero: a.eps_zero, seed };
    if let Some(p) = &a.signal.signal {
        let mut o = load_signal(p)?;
        let dims = o.dims();
        if dims != Dims::new(a.signal.n, a.signal.d)? {
            eprintln!("note: using n={} d={} from the signal file", dims.n, dims.d);
        }
        let ok = match a.mode {
            ModeArg::Worst => {
                let r = sparse_fft_worst_case(&mut o, a.signal.k, &recovery)?;
                print_json(&r)?;
                r.success
            }
            ModeArg::RandomPhase => {
                let r = sparse_fft_random_phase(&mut o, a.signal.k, &recovery)?;
                print_json(&r)?;
                r.success
            }
            ModeArg::RandomSupport => {
                let r = sparse_fft_random_support(&mut o, a.signal.k, &random_support)?;
                print_json(&r)?;
                r.recovery.success
            }
        };
        return Ok(ok);
    }
    let (model, alg) = match a.mode {
        ModeArg::Worst => (SignalModel::WorstCase, Algorithm::Worst),
        ModeArg::RandomPhase => (SignalModel::RandomPhase, Algorithm::RandomPhase),
        ModeArg::RandomSupport => (SignalModel::RandomSupport, Algorithm::RandomSupport),
    };
    let cfg = RunConfig { recovery, random_support };
    generated_runs(&a.signal, model, alg, a.trials, seed, &cfg)
}

fn cmd_prune(a: &PruneArgs) -> Result<bool> {
    let mut points = Vec::new();
    if a.sweep {
        for log_n in [16u32, 32, 64] {
            for c in 1..=3u32 {
                let k = hamming_ball_size(log_n, c) as f64;
                let base = k.log2().ceil() as u32;
                points.extend((0..3).map(|j| (log_n, c, base + j)));
            }
        }
    } else {
        points.push((a.log_n, a.c, a.tau));
    }
    let mut out = csv::Writer::from_writer(io::stdout().lock());
    out.write_record(["log_n", "c", "tau", "leaves", "D", "bound", "holds"])?;
    let mut ok = true;
    for (log_n, c, tau) in points {
        let r = verify_lower_bound(log_n, c, tau)?;
        ok &= r.holds && r.monotone;
        out.write_record([
            log_n.to_string(),
            c.to_string(),
            tau.to_string(),
            r.leaves.to_string(),
            r.rounds.to_string(),
            format!("{:.6}", r.bound),
            r.holds.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(ok)
}

fn cmd_bernoulli(a: &BernoulliArgs, seed: u64) -> Result<bool> {
    let dims = Dims::new(a.n, a.d)?;
    let b = make_bucket(a.buckets, dims)?;
    let coarse = a.coarse.map(|c| make_bucket(c, dims)).transpose()?;
    let stats = bernoulli_collision_stats(dims, a.k, &b, coarse.as_ref(), a.trials, seed)?;
    let mut out = csv::Writer::from_writer(io::stdout().lock());
    out.write_record(["trial", "colliding", "max_per_bucket"])?;
    for (i, t) in stats.trials.iter().enumerate() {
        out.write_record([i.to_string(), t.colliding.to_string(), t.max_per_coarse_bucket.to_string()])?;
    }
    out.flush()?;
    eprintln!("mean={:.4} std_err={:.4} bound={:.4}", stats.mean, stats.std_err, (a.k * a.k) as f64 / a.buckets as f64);
    Ok(true)
}

fn cmd_sweep(a: &SweepArgs) -> Result<bool> {
    let f = File::open(&a.grid).with_context(|| format!("opening {}", a.grid.display()))?;
    let grid: SweepGrid = serde_json::from_reader(BufReader::new(f))?;
    let (res, csv_path, json_path) = harness::sweep(&grid, &a.out, a.threads)?;
    print_json(&res.groups)?;
    eprintln!("wrote {} and {}", csv_path.display(), json_path.display());
    Ok(res.all_succeeded())
}

fn cmd_selftest(seed: u64) -> Result<bool> {
    let cfg = RunConfig::default();
    let cases = [
        (SignalSpec::new(SignalModel::WorstCase, 16, 2, 4, seed), Algorithm::Estimate),
        (SignalSpec::new(SignalModel::WorstCase, 64, 1, 4, seed), Algorithm::Worst),
        (SignalSpec::new(SignalModel::WorstCase, 16, 2, 4, seed), Algorithm::Worst),
        (SignalSpec::new(SignalModel::RandomPhase, 16, 2, 4, seed), Algorithm::RandomPhase),
        (SignalSpec::new(SignalModel::RandomSupport, 16, 2, 2, seed), Algorithm::RandomSupport),
        (SignalSpec::new(SignalModel::RandomPhase, 8, 2, 4, seed), Algorithm::DenseFftBaseline),
    ];
    let mut ok = true;
    for (spec, alg) in cases {
        let r = harness::run(&spec, alg, &cfg)?;
        println!(
            "{} {} n={} d={} k={}: {}",
            spec.model.name(),
            alg.name(),
            spec.n,
            spec.d,
            spec.k,
            if r.success { "pass" } else { "FAIL" }
        );
        ok &= r.success;
    }
    let p = verify_lower_bound(16, 2, 8)?;
    println!("prune-sim log_n=16 c=2 tau=8: {}", if p.holds { "pass" } else { "FAIL" });
    Ok(ok && p.holds)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match &cli.cmd {
        Cmd::Estimate(a) => cmd_estimate(a, cli.seed),
        Cmd::Recover(a) => cmd_recover(a, cli.seed),
        Cmd::PruneSim(a) => cmd_prune(a),
        Cmd::BernoulliStats(a) => cmd_bernoulli(a, cli.seed),
        Cmd::Sweep(a) => cmd_sweep(a),
        Cmd::Selftest => cmd_selftest(cli.seed),
    };
    match res {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
