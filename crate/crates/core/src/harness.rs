//! Signal generators, end-to-end runs against the dense FFT, and sweeps.

use std::f64::consts::TAU;
use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::estimate::estimate_flat;
use crate::pruning::{hamming_ball, hamming_ball_size};
use crate::random_support::{bernoulli_support, sparse_fft_random_support, RandomSupportConfig};
use crate::rng;
use crate::signal::{dft, Dims, SignalOracle, SparseSpectrum};
use crate::sparse_fft::{sparse_fft_random_phase, sparse_fft_worst_case, RecoveryConfig};

pub const SCHEMA: u32 = 1;
/// Relative l2 error at or below which a run counts as exact.
pub const SUCCESS_TOL: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SignalModel {
    WorstCase,
    RandomPhase,
    RandomSupport,
    HammingBall,
}

impl SignalModel {
    pub fn default_algorithm(self) -> Algorithm {
        match self {
            SignalModel::WorstCase | SignalModel::HammingBall => Algorithm::Worst,
            SignalModel::RandomPhase => Algorithm::RandomPhase,
            SignalModel::RandomSupport => Algorithm::RandomSupport,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SignalModel::WorstCase => "worst-case",
            SignalModel::RandomPhase => "random-phase",
            SignalModel::RandomSupport => "random-support",
            SignalModel::HammingBall => "hamming-ball",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    Estimate,
    Worst,
    RandomPhase,
    RandomSupport,
    DenseFftBaseline,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Estimate => "estimate",
            Algorithm::Worst => "worst",
            Algorithm::RandomPhase => "random-phase",
            Algorithm::RandomSupport => "random-support",
            Algorithm::DenseFftBaseline => "dense-fft-baseline",
        }
    }

    fn suits(self, model: SignalModel) -> bool {
        match self {
            Algorithm::Estimate | Algorithm::DenseFftBaseline | Algorithm::Worst => true,
            Algorithm::RandomPhase => model == SignalModel::RandomPhase,
            Algorithm::RandomSupport => model == SignalModel::RandomSupport,
        }
    }
}

/// Magnitudes are drawn uniformly from `[min, max]`; phases uniformly.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Magnitudes {
    pub min: f64,
    pub max: f64,
}

impl Default for Magnitudes {
    fn default() -> Self {
        Magnitudes { min: 1.0, max: 1.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SignalSpec {
    pub model: SignalModel,
    pub n: usize,
    pub d: usize,
    pub k: usize,
    pub seed: u64,
    #[serde(default)]
    pub magnitudes: Magnitudes,
}

impl SignalSpec {
    pub fn new(model: SignalModel, n: usize, d: usize, k: usize, seed: u64) -> Self {
        SignalSpec { model, n, d, k, seed, magnitudes: Magnitudes::default() }
    }

    pub fn dims(&self) -> Result<Dims> {
        Dims::new(self.n, self.d)
    }
}

fn random_value<R: Rng>(m: &Magnitudes, rng: &mut R) -> Complex64 {
    let beta = if m.max > m.min { rng.gen_range(m.min..=m.max) } else { m.min };
    Complex64::from_polar(beta, rng.gen::<f64>() * TAU)
}

/// `k` elements of the smallest Hamming ball holding `k`: the whole next-smaller
/// ball plus a random part of the outer layer.
fn hamming_support<R: Rng>(log_n: u32, k: usize, rng: &mut R) -> Result<Vec<u64>> {
    let c = (0..=log_n).find(|&c| hamming_ball_size(log_n, c) >= k as u128).unwrap_or(log_n);
    let ball = hamming_ball(log_n, c)?;
    let (mut inner, mut outer): (Vec<u64>, Vec<u64>) =
        ball.into_iter().partition(|f| f.count_ones() < c);
    outer.shuffle(rng);
    inner.extend(outer.into_iter().take(k - inner.len()));
    inner.sort_unstable();
    Ok(inner)
}

/// Draws the reference spectrum of `spec` and an oracle for its time domain.
pub fn generate(spec: &SignalSpec) -> Result<(SignalOracle, SparseSpectrum)> {
    let dims = spec.dims()?;
    if !dims.is_dense_ok() {
        return invalid("signal too large for a dense-backed oracle");
    }
    if spec.k > dims.total() {
        return invalid(format!("k={} exceeds N={}", spec.k, dims.total()));
    }
    if !(spec.magnitudes.min > 0.0 && spec.magnitudes.max >= spec.magnitudes.min) {
        return invalid("magnitudes must satisfy 0 < min <= max");
    }
    let mut gen = rng::stream(spec.seed, 17 + spec.model as u64);
    let support: Vec<u64> = match spec.model {
        SignalModel::WorstCase if spec.d == 1 => hamming_support(dims.log_n(), spec.k, &mut gen)?,
        SignalModel::WorstCase | SignalModel::RandomPhase => {
            let mut s: Vec<u64> = rand::seq::index::sample(&mut gen, dims.total(), spec.k)
                .into_iter()
                .map(|i| i as u64)
                .collect();
            s.sort_unstable();
            s
        }
        SignalModel::RandomSupport => bernoulli_support(dims, spec.k, &mut gen),
        SignalModel::HammingBall => {
            let l = dims.log_n();
            let c = (0..=l).find(|&c| hamming_ball_size(l, c) == spec.k as u128);
            match (spec.d, c) {
                (1, Some(c)) => hamming_ball(l, c)?,
                _ => return invalid("hamming-ball needs d=1 and k equal to a Hamming ball size"),
            }
        }
    };
    let mut x = SparseSpectrum::new(dims);
    for f in support {
        x.insert_flat(f, random_value(&spec.magnitudes, &mut gen));
    }
    let oracle = SignalOracle::from_spectrum(&x)?;
    Ok((oracle, x))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub recovery: RecoveryConfig,
    pub random_support: RandomSupportConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema: u32,
    pub spec: SignalSpec,
    pub algorithm: Algorithm,
    pub success: bool,
    pub l2_error: f64,
    pub reference_norm: f64,
    pub realized_k: usize,
    pub samples_read: u64,
    pub distinct_points_read: u64,
    pub wall_time_ms: f64,
    pub iterations: usize,
    /// The algorithm's assumptions do not match the signal model.
    pub model_mismatch: bool,
    pub error: Option<String>,
}

impl RunReport {
    /// Success as implied by the stored errors.
    pub fn recomputed_success(&self) -> bool {
        self.error.is_none() && self.l2_error <= SUCCESS_TOL * self.reference_norm
    }
}

fn dense_baseline(oracle: &mut SignalOracle) -> Result<SparseSpectrum> {
    let dims = oracle.dims();
    let x: Vec<Complex64> = (0..dims.total() as u64).map(|i| oracle.read_flat(i)).collect();
    let xh = dft(dims, &x)?;
    SparseSpectrum::from_dense(dims, &xh, 1e-9)
}

/// Runs `algorithm` on a fresh instance of `spec` and scores it against the reference.
pub fn run(spec: &SignalSpec, algorithm: Algorithm, cfg: &RunConfig) -> Result<RunReport> {
    let (mut oracle, reference) = generate(spec)?;
    let started = Instant::now();
    let mut rec = cfg.recovery;
    rec.seed = rng::mix(spec.seed, rec.seed);
    let mut rs = cfg.random_support;
    rs.seed = rng::mix(spec.seed, rs.seed);
    let outcome: Result<(SparseSpectrum, usize, bool)> = match algorithm {
        Algorithm::Estimate => {
            let support = reference.support_flat();
            if support.is_empty() {
                Ok((SparseSpectrum::new(reference.dims()), 0, true))
            } else {
                estimate_flat(&mut oracle, &support, |_, _| {}).map(|r| (r.spectrum, r.iterations, true))
            }
        }
        Algorithm::Worst => sparse_fft_worst_case(&mut oracle, spec.k, &rec)
            .map(|r| (r.spectrum, r.iterations, r.success)),
        Algorithm::RandomPhase => sparse_fft_random_phase(&mut oracle, spec.k, &rec)
            .map(|r| (r.spectrum, r.iterations, r.success)),
        Algorithm::RandomSupport => sparse_fft_random_support(&mut oracle, spec.k, &rs)
            .map(|r| (r.recovery.spectrum, r.rounds, r.recovery.success)),
        Algorithm::DenseFftBaseline => dense_baseline(&mut oracle).map(|s| (s, 1, true)),
    };
    let wall_time_ms = started.elapsed().as_secs_f64() * 1e3;
    let counts = oracle.counts();
    let reference_norm = reference.norm_sqr().sqrt();
    let (l2_error, iterations, error) = match outcome {
        Ok((s, it, _)) => (s.l2_distance(&reference), it, None),
        Err(Error::InvalidInput(m)) => return Err(Error::InvalidInput(m)),
        Err(e) => (reference_norm, 0, Some(e.to_string())),
    };
    let mut report = RunReport {
        schema: SCHEMA,
        spec: spec.clone(),
        algorithm,
        success: false,
        l2_error,
        reference_norm,
        realized_k: reference.len(),
        samples_read: counts.samples_read,
        distinct_points_read: counts.distinct_points_read,
        wall_time_ms,
        iterations,
        model_mismatch: !algorithm.suits(spec.model),
        error,
    };
    report.success = report.recomputed_success();
    Ok(report)
}

/// Cartesian grid of runs. An empty `algorithms` list uses each model's default.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SweepGrid {
    pub models: Vec<SignalModel>,
    #[serde(default)]
    pub algorithms: Vec<Algorithm>,
    pub ns: Vec<usize>,
    pub ds: Vec<usize>,
    pub ks: Vec<usize>,
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub config: RunConfig,
}

impl SweepGrid {
    /// Grid points in deterministic order.
    pub fn points(&self) -> Vec<(SignalSpec, Algorithm)> {
        let mut out = Vec::new();
        for &model in &self.models {
            let algs =
                if self.algorithms.is_empty() { vec![model.default_algorithm()] } else { self.algorithms.clone() };
            for &alg in &algs {
                for &n in &self.ns {
                    for &d in &self.ds {
                        for &k in &self.ks {
                            for &seed in &self.seeds {
                                out.push((SignalSpec::new(model, n, d, k, seed), alg));
                            }
                        }
                    }
                }
            }
        }
        out
    }
}

/// Aggregate over one `(model, algorithm, n, d)` group.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub model: SignalModel,
    pub algorithm: Algorithm,
    pub n: usize,
    pub d: usize,
    pub runs: usize,
    pub success_rate: f64,
    /// `(k, mean samples_read)` per distinct `k`.
    pub samples_by_k: Vec<(usize, f64)>,
    /// Least-squares slope of `log samples` against `log k`; needs two distinct `k`.
    pub slope: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub schema: u32,
    pub runs: Vec<RunReport>,
    pub groups: Vec<GroupSummary>,
}

impl SweepResult {
    pub fn all_succeeded(&self) -> bool {
        self.runs.iter().all(|r| r.success)
    }
}

/// Slope of the least-squares line through `(ln x, ln y)`.
pub fn log_log_slope(points: &[(f64, f64)]) -> Option<f64> {
    let pts: Vec<(f64, f64)> =
        points.iter().filter(|(x, y)| *x > 0.0 && *y > 0.0).map(|(x, y)| (x.ln(), y.ln())).collect();
    if pts.len() < 2 {
        return None;
    }
    let m = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    Some(sxy / sxx)
}

fn summarize(runs: &[RunReport]) -> Vec<GroupSummary> {
    use std::collections::BTreeMap;
    let mut groups: BTreeMap<(SignalModel, Algorithm, usize, usize), Vec<&RunReport>> = BTreeMap::new();
    for r in runs {
        groups.entry((r.spec.model, r.algorithm, r.spec.n, r.spec.d)).or_default().push(r);
    }
    groups
        .into_iter()
        .map(|((model, algorithm, n, d), rs)| {
            let mut by_k: BTreeMap<usize, (f64, usize)> = BTreeMap::new();
            for r in &rs {
                let e = by_k.entry(r.spec.k).or_default();
                e.0 += r.samples_read as f64;
                e.1 += 1;
            }
            let samples_by_k: Vec<(usize, f64)> =
                by_k.into_iter().map(|(k, (s, c))| (k, s / c as f64)).collect();
            let pts: Vec<(f64, f64)> = samples_by_k.iter().map(|&(k, s)| (k as f64, s)).collect();
            GroupSummary {
                model,
                algorithm,
                n,
                d,
                runs: rs.len(),
                success_rate: rs.iter().filter(|r| r.success).count() as f64 / rs.len() as f64,
                slope: log_log_slope(&pts),
                samples_by_k,
            }
        })
        .collect()
}

/// Runs every grid point, in parallel when `threads != Some(1)`, keeping grid order.
pub fn run_grid(grid: &SweepGrid, threads: Option<usize>) -> Result<SweepResult> {
    let points = grid.points();
    let work = || -> Result<Vec<RunReport>> {
        points.par_iter().map(|(spec, alg)| run(spec, *alg, &grid.config)).collect()
    };
    let runs = match threads {
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| Error::InvalidInput(e.to_string()))?
            .install(work)?,
        None => work()?,
    };
    let groups = summarize(&runs);
    Ok(SweepResult { schema: SCHEMA, runs, groups })
}

pub const CSV_HEADER: [&str; 15] = [
    "schema",
    "model",
    "algorithm",
    "n",
    "d",
    "k",
    "seed",
    "realized_k",
    "success",
    "l2_error",
    "reference_norm",
    "samples_read",
    "distinct_points_read",
    "iterations",
    "wall_time_ms",
];

pub fn write_csv<W: Write>(w: W, runs: &[RunReport]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(CSV_HEADER).map_err(csv_err)?;
    for r in runs {
        out.write_record([
            r.schema.to_string(),
            r.spec.model.name().to_string(),
            r.algorithm.name().to_string(),
            r.spec.n.to_string(),
            r.spec.d.to_string(),
            r.spec.k.to_string(),
            r.spec.seed.to_string(),
            r.realized_k.to_string(),
            r.success.to_string(),
            format!("{:e}", r.l2_error),
            format!("{:e}", r.reference_norm),
            r.samples_read.to_string(),
            r.distinct_points_read.to_string(),
            r.iterations.to_string(),
            format!("{:.3}", r.wall_time_ms),
        ])
        .map_err(csv_err)?;
    }
    out.flush()?;
    Ok(())
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

/// Runs the grid and writes `<stem>.csv` and `<stem>.json`.
pub fn sweep(grid: &SweepGrid, stem: &Path, threads: Option<usize>) -> Result<(SweepResult, PathBuf, PathBuf)> {
    let result = run_grid(grid, threads)?;
    let csv_path = stem.with_extension("csv");
    let json_path = stem.with_extension("json");
    write_csv(File::create(&csv_path)?, &result.runs)?;
    serde_json::to_writer_pretty(File::create(&json_path)?, &result)?;
    Ok((result, csv_path, json_path))
}
