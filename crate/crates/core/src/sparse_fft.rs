//! Sparse recovery without a known support.
//!
//! Both variants grow a splitting tree from the root. A leaf above full depth
//! is replaced by those of its two children whose cones still carry residual
//! energy on a random sample set; a leaf at full depth is estimated and peeled.

use std::time::Instant;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::estimate::{filtered_sample, peel_value};
use crate::filter::build_isolating_filter;
use crate::rng;
use crate::signal::{Dims, FreqVec, SampleCounts, SignalOracle, SparseSpectrum, Twiddles};
use crate::tree::{NodeId, Side, SplittingTree};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SampleKind {
    Rip,
    UniformPhase,
}

/// Multiset of i.i.d. uniform points of `[n]^d`.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleSet {
    kind: SampleKind,
    dims: Dims,
    coords: Vec<usize>,
}

impl SampleSet {
    pub fn kind(&self) -> SampleKind {
        self.kind
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dims.d
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &[usize]> + '_ {
        self.coords.chunks_exact(self.dims.d)
    }

    pub fn points(&self) -> Vec<FreqVec> {
        self.iter().map(|p| FreqVec(p.to_vec())).collect()
    }

    pub fn from_points(kind: SampleKind, dims: Dims, points: &[FreqVec]) -> Result<Self> {
        let mut coords = Vec::with_capacity(points.len() * dims.d);
        for p in points {
            dims.check(&p.0)?;
            coords.extend_from_slice(&p.0);
        }
        Ok(SampleSet { kind, dims, coords })
    }
}

fn log2f(x: f64) -> f64 {
    x.log2()
}

/// `ceil(c k log2^2 k d log2 n)`, with `log2 k` floored at 1.
pub fn rip_size(k: usize, dims: Dims, c: f64) -> usize {
    let lk = log2f(k as f64).max(1.0);
    (c * k as f64 * lk * lk * dims.height() as f64).ceil() as usize
}

/// `ceil(c d^3 log2^3 n)`.
pub fn phase_size(dims: Dims, c: f64) -> usize {
    let dl = dims.d as f64 * dims.log_n() as f64;
    (c * dl * dl * dl).ceil() as usize
}

pub fn make_sample_set(
    kind: SampleKind,
    k: usize,
    dims: Dims,
    c: f64,
    seed: u64,
) -> Result<SampleSet> {
    if k < 1 {
        return invalid("sparsity k must be at least 1");
    }
    if !c.is_finite() || c <= 0.0 {
        return invalid("oversampling constant must be positive");
    }
    let m = match kind {
        SampleKind::Rip => rip_size(k, dims, c),
        SampleKind::UniformPhase => phase_size(dims, c),
    };
    let mut r = rng::stream(seed, kind as u64 + 1);
    let coords = (0..m * dims.d).map(|_| r.gen_range(0..dims.n)).collect();
    Ok(SampleSet { kind, dims, coords })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecoveryConfig {
    pub c_rip: f64,
    pub c_phase: f64,
    /// Relative zero threshold on mean residual energy.
    pub eps_zero: f64,
    pub seed: u64,
    /// Iteration cap; defaults to `2 (1 + d log n)(k + 1)`.
    pub max_iterations: Option<usize>,
}

impl Default for RecoveryConfig {
    fn default() -> Self {
        RecoveryConfig { c_rip: 2.0, c_phase: 2.0, eps_zero: 1e-12, seed: 0, max_iterations: None }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct RecoveryReport {
    pub spectrum: SparseSpectrum,
    pub samples_used: SampleCounts,
    pub zero_tests_run: usize,
    pub iterations: usize,
    pub sample_set_size: usize,
    pub wall_time_ms: f64,
    /// Residual on the sample set is below threshold and the loop finished.
    pub success: bool,
}

/// State passed to an observer after every iteration.
pub struct IterationView<'a> {
    pub iteration: usize,
    pub tree: &'a SplittingTree,
    pub chi: &'a SparseSpectrum,
}

/// Residual probe on a fixed sample set.
struct Probe<'a> {
    samples: &'a SampleSet,
    tw: Twiddles,
}

impl<'a> Probe<'a> {
    fn new(samples: &'a SampleSet) -> Self {
        Probe { samples, tw: Twiddles::new(samples.dims.n) }
    }

    /// `(1/|Delta|) sum_Delta |(G * x)(Delta) - h^Delta|^2` for the filter of `v`.
    fn energy(
        &self,
        oracle: &mut SignalOracle,
        chi: &SparseSpectrum,
        tree: &SplittingTree,
        v: NodeId,
    ) -> Result<f64> {
        let dims = oracle.dims();
        let g = build_isolating_filter(tree, v, dims)?;
        let inv_n = 1.0 / dims.total_f64();
        let mut terms: Vec<(Vec<usize>, Complex64)> = Vec::new();
        let mut xi = vec![0; dims.d];
        for (k, c) in chi.iter_flat() {
            dims.unflatten_into(k, &mut xi);
            let gh = g.frequency(&xi);
            if gh != Complex64::default() {
                terms.push((xi.clone(), c * gh * inv_n));
            }
        }
        let mut scratch = vec![0; dims.d];
        let mut total = 0.0;
        for delta in self.samples.iter() {
            let mut h = Complex64::default();
            for (f, c) in &terms {
                h += c * self.tw.character(f, delta);
            }
            let big_h = filtered_sample(oracle, &g, delta, &mut scratch) - h;
            total += big_h.norm_sqr();
        }
        Ok(total / self.samples.len().max(1) as f64)
    }
}

/// Mean residual energy of the cone of `v` on `samples`.
pub fn cone_energy(
    oracle: &mut SignalOracle,
    chi: &SparseSpectrum,
    tree: &SplittingTree,
    v: NodeId,
    samples: &SampleSet,
) -> Result<f64> {
    Probe::new(samples).energy(oracle, chi, tree, v)
}

/// Whether the residual `x^hat - chi^hat` is nonzero on the cone of `v`, i.e.
/// whether its mean energy on `samples` exceeds `threshold`.
pub fn zero_test(
    oracle: &mut SignalOracle,
    chi: &SparseSpectrum,
    tree: &SplittingTree,
    v: NodeId,
    samples: &SampleSet,
    threshold: f64,
) -> Result<bool> {
    Ok(cone_energy(oracle, chi, tree, v, samples)? > threshold)
}

/// Mean of `|x_t|^2` over the sample set, together with the samples read.
fn reference_energy(oracle: &mut SignalOracle, samples: &SampleSet) -> (f64, Vec<Complex64>) {
    let dims = oracle.dims();
    let vals: Vec<_> = samples.iter().map(|t| oracle.read_flat(dims.flatten_unchecked(t) as u64)).collect();
    let e = vals.iter().map(|z| z.norm_sqr()).sum::<f64>() / vals.len().max(1) as f64;
    (e, vals)
}

/// Worst-case recovery with a RIP sample set.
pub fn sparse_fft_worst_case(
    oracle: &mut SignalOracle,
    k: usize,
    cfg: &RecoveryConfig,
) -> Result<RecoveryReport> {
    let samples = make_sample_set(SampleKind::Rip, k, oracle.dims(), cfg.c_rip, cfg.seed)?;
    recover_with_samples(oracle, k, &samples, cfg, &mut |_| {})
}

/// Recovery of random-phase signals with a `k`-independent uniform sample set.
pub fn sparse_fft_random_phase(
    oracle: &mut SignalOracle,
    k: usize,
    cfg: &RecoveryConfig,
) -> Result<RecoveryReport> {
    let samples =
        make_sample_set(SampleKind::UniformPhase, k, oracle.dims(), cfg.c_phase, cfg.seed)?;
    recover_with_samples(oracle, k, &samples, cfg, &mut |_| {})
}

/// The shared recovery loop on an explicit sample set.
pub fn recover_with_samples(
    oracle: &mut SignalOracle,
    k: usize,
    samples: &SampleSet,
    cfg: &RecoveryConfig,
    observe: &mut dyn FnMut(IterationView<'_>),
) -> Result<RecoveryReport> {
    let started = Instant::now();
    let dims = oracle.dims();
    if samples.dims() != dims {
        return invalid("sample set dimensions differ from the oracle");
    }
    let h = dims.height();
    let cap = cfg.max_iterations.unwrap_or(2 * (1 + h as usize) * (k + 1));
    let start = oracle.counts();
    let probe = Probe::new(samples);
    let (ref_energy, x_delta) = reference_energy(oracle, samples);
    let threshold = cfg.eps_zero * ref_energy;

    let mut tree = SplittingTree::root_only(h);
    let mut chi = SparseSpectrum::new(dims);
    let mut iterations = 0;
    let mut zero_tests = 0;
    let mut capped = false;
    while let Some(v) = tree.min_weight_leaf() {
        if iterations == cap {
            capped = true;
            break;
        }
        iterations += 1;
        if tree.level(v) == h {
            let g = build_isolating_filter(&tree, v, dims)?;
            let val = peel_value(oracle, &chi, &g);
            chi.add_flat(tree.label(v), val);
            tree.remove_leaf(v)?;
        } else {
            let w = tree.add_child(v, Side::Right)?;
            let u = tree.add_child(v, Side::Left)?;
            let keep_w = probe.energy(oracle, &chi, &tree, w)? > threshold;
            let keep_u = probe.energy(oracle, &chi, &tree, u)? > threshold;
            zero_tests += 2;
            if !keep_w {
                tree.remove_leaf(w)?;
            }
            if !keep_u {
                tree.remove_leaf(u)?;
            }
        }
        observe(IterationView { iteration: iterations, tree: &tree, chi: &chi });
    }

    let tw = &probe.tw;
    let mut resid = 0.0;
    for (t, x) in samples.iter().zip(&x_delta) {
        resid += (x - chi.evaluate(t, tw)).norm_sqr();
    }
    resid /= samples.len().max(1) as f64;
    let success = !capped && resid <= threshold;
    Ok(RecoveryReport {
        spectrum: chi,
        samples_used: oracle.counts() - start,
        zero_tests_run: zero_tests,
        iterations,
        sample_set_size: samples.len(),
        wall_time_ms: started.elapsed().as_secs_f64() * 1e3,
        success,
    })
}

/// `(1/s) sum_j |x_{t_j}|^2` divided by `||x^hat||^2 / N^2`.
pub fn sample_energy_ratio(oracle: &mut SignalOracle, spectrum_norm_sqr: f64, samples: &SampleSet) -> f64 {
    let (e, _) = reference_energy(oracle, samples);
    let n = oracle.dims().total_f64();
    e * n * n / spectrum_norm_sqr
}
