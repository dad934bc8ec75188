//! Near-linear recovery for signals with Bernoulli random support.
//!
//! Frequencies are hashed into congruence classes modulo a bucket vector `B`.
//! Each round refines the classes that still hold collisions, computing the
//! finer bucket values from a coarse downsampled FFT by least squares, then
//! decodes every bucket that turns out to hold a single frequency.

use std::collections::{BTreeMap, BTreeSet};
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::rng;
use crate::signal::{fft_shape, Dims, FreqVec, SignalOracle, SparseSpectrum, Twiddles};
use crate::sparse_fft::RecoveryReport;

/// Per-coordinate bucket counts, each a power of two dividing `n`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BucketVector {
    sizes: Vec<usize>,
}

impl BucketVector {
    pub fn new(sizes: Vec<usize>, dims: Dims) -> Result<Self> {
        if sizes.len() != dims.d {
            return Err(Error::DimensionMismatch { expected: dims.d, got: sizes.len() });
        }
        if let Some(b) = sizes.iter().find(|&&b| b == 0 || !b.is_power_of_two() || b > dims.n) {
            return invalid(format!("bucket size {b} must be a power of two dividing n"));
        }
        Ok(BucketVector { sizes })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn d(&self) -> usize {
        self.sizes.len()
    }

    /// `|B|`, the total number of buckets.
    pub fn count(&self) -> usize {
        self.sizes.iter().product()
    }

    /// Coordinatewise divisibility `self | other`.
    pub fn divides(&self, other: &BucketVector) -> bool {
        self.sizes.len() == other.sizes.len()
            && self.sizes.iter().zip(&other.sizes).all(|(a, b)| b % a == 0)
    }

    pub fn flat(&self, b: &[usize]) -> usize {
        let mut idx = 0;
        let mut stride = 1;
        for (c, s) in b.iter().zip(&self.sizes) {
            idx += c * stride;
            stride *= s;
        }
        idx
    }

    pub fn unflat(&self, mut idx: usize, out: &mut [usize]) {
        for (c, s) in out.iter_mut().zip(&self.sizes) {
            *c = idx % s;
            idx /= s;
        }
    }

    pub fn coords(&self, idx: usize) -> Vec<usize> {
        let mut out = vec![0; self.sizes.len()];
        self.unflat(idx, &mut out);
        out
    }

    /// Bucket of `f` (any point of `[n]^d`): `f mod B`, flattened.
    pub fn bucket_of(&self, f: &[usize]) -> usize {
        let mut idx = 0;
        let mut stride = 1;
        for (c, s) in f.iter().zip(&self.sizes) {
            idx += (c % s) * stride;
            stride *= s;
        }
        idx
    }

    pub fn check_index(&self, b: &[usize]) -> Result<()> {
        if b.len() != self.sizes.len() {
            return Err(Error::DimensionMismatch { expected: self.sizes.len(), got: b.len() });
        }
        if b.iter().zip(&self.sizes).any(|(c, s)| c >= s) {
            return Err(Error::OutOfRange(format!("bucket index {b:?} outside {:?}", self.sizes)));
        }
        Ok(())
    }
}

/// Bucket vector with `b` buckets: the first `floor(log_n b)` coordinates get
/// `n`, the next gets the remaining factor, the rest get 1.
pub fn make_bucket(b: usize, dims: Dims) -> Result<BucketVector> {
    if b == 0 || !b.is_power_of_two() {
        return invalid(format!("bucket count {b} is not a power of two"));
    }
    let lb = b.trailing_zeros();
    if lb > dims.height() {
        return invalid(format!("bucket count {b} exceeds n^d"));
    }
    let l = dims.log_n();
    let p = (lb / l) as usize;
    let mut sizes = vec![1; dims.d];
    for s in sizes.iter_mut().take(p) {
        *s = dims.n;
    }
    if p < dims.d {
        sizes[p] = 1 << (lb - p as u32 * l);
    }
    Ok(BucketVector { sizes })
}

/// `sum over f = b mod B of x^hat_f e^{2 pi i <f, a>/n}`, by direct summation.
pub fn bucket_value(
    spectrum: &SparseSpectrum,
    bucket: &BucketVector,
    b: &[usize],
    a: &FreqVec,
) -> Result<Complex64> {
    let dims = spectrum.dims();
    bucket.check_index(b)?;
    dims.check(&a.0)?;
    let tw = Twiddles::new(dims.n);
    let target = bucket.flat(b);
    let mut acc = Complex64::default();
    for (f, v) in spectrum.iter() {
        if bucket.bucket_of(&f.0) == target {
            acc += v * tw.character(&f.0, &a.0);
        }
    }
    Ok(acc)
}

/// Bucket values keyed by flat index into `[bucket]`.
#[derive(Clone, Debug, PartialEq)]
pub struct BucketValueList {
    pub bucket: BucketVector,
    pub entries: BTreeMap<usize, Complex64>,
}

impl BucketValueList {
    pub fn new(bucket: BucketVector) -> Self {
        BucketValueList { bucket, entries: BTreeMap::new() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RandomSupportConfig {
    /// Refinement factor, a power of two at least 2.
    pub gamma: usize,
    pub c_hash: f64,
    pub c_test: f64,
    pub eps_zero: f64,
    pub seed: u64,
}

impl Default for RandomSupportConfig {
    fn default() -> Self {
        RandomSupportConfig { gamma: 4, c_hash: 1.0, c_test: 0.1, eps_zero: 1e-12, seed: 0 }
    }
}

impl RandomSupportConfig {
    fn validate(&self) -> Result<()> {
        if self.gamma < 2 || !self.gamma.is_power_of_two() {
            return invalid("gamma must be a power of two >= 2");
        }
        if !(self.c_hash > 0.0 && self.c_test > 0.0 && self.eps_zero >= 0.0) {
            return invalid("constants must be positive");
        }
        Ok(())
    }

    /// `L = ceil(log_gamma k)`.
    pub fn rounds(&self, k: usize) -> usize {
        let lk = k.max(1).trailing_zeros() as usize;
        let lg = self.gamma.trailing_zeros() as usize;
        lk.div_ceil(lg)
    }
}

/// Condition numbers of the normal matrices solved so far.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Conditioning {
    pub solves: usize,
    pub above_three: usize,
    pub max: f64,
}

impl Conditioning {
    fn record(&mut self, c: f64) {
        self.solves += 1;
        if c > 3.0 {
            self.above_three += 1;
        }
        if c > self.max || c.is_nan() {
            self.max = c;
        }
    }

    pub fn merge(&mut self, o: &Conditioning) {
        self.solves += o.solves;
        self.above_three += o.above_three;
        self.max = self.max.max(o.max);
    }
}

/// `argmin_v ||A v - w||` via the Hermitian normal equations.
pub fn least_squares_solve(a: &DMatrix<Complex64>, w: &DVector<Complex64>) -> Result<DVector<Complex64>> {
    if a.nrows() != w.len() {
        return Err(Error::DimensionMismatch { expected: a.nrows(), got: w.len() });
    }
    if a.nrows() < a.ncols() {
        return Err(Error::SingularSystem { bucket: 0 });
    }
    let ah = a.adjoint();
    let normal = &ah * a;
    let rhs = &ah * w;
    let scale = normal.diagonal().iter().map(|z| z.re).fold(0.0, f64::max);
    let chol = normal.cholesky().ok_or(Error::SingularSystem { bucket: 0 })?;
    let pivot = chol.l_dirty().diagonal().iter().map(|z| z.norm_sqr()).fold(f64::MAX, f64::min);
    if pivot.is_nan() || pivot <= 1e-12 * scale {
        return Err(Error::SingularSystem { bucket: 0 });
    }
    Ok(chol.solve(&rhs))
}

/// `lambda_max / lambda_min` of `A* A`.
pub fn normal_condition(a: &DMatrix<Complex64>) -> f64 {
    let normal = a.adjoint() * a;
    let eig = normal.symmetric_eigenvalues();
    let max = eig.iter().cloned().fold(f64::MIN, f64::max);
    let min = eig.iter().cloned().fold(f64::MAX, f64::min);
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// `U_x^a(B, b)` for all `b` in `[B]` from `|B|` samples, by downsampling and an FFT.
pub fn base_bucket_values(
    oracle: &mut SignalOracle,
    bucket: &BucketVector,
    a: &[usize],
) -> Result<Vec<Complex64>> {
    let dims = oracle.dims();
    let total = bucket.count();
    let scale = dims.total_f64() / total as f64;
    let mut z = Vec::with_capacity(total);
    let mut t = vec![0; dims.d];
    let mut pt = vec![0; dims.d];
    for idx in 0..total {
        bucket.unflat(idx, &mut t);
        for q in 0..dims.d {
            pt[q] = (t[q] * (dims.n / bucket.sizes[q]) + a[q]) & (dims.n - 1);
        }
        z.push(oracle.read_flat(dims.flatten_unchecked(&pt) as u64) * scale);
    }
    fft_shape(&mut z, &bucket.sizes, false)?;
    Ok(z)
}

fn rows_for(m: usize, dims: Dims, c_hash: f64) -> usize {
    let lm = (m as f64).log2().max(1.0);
    (c_hash * m as f64 * lm * lm * dims.height() as f64).ceil() as usize
}

/// Refines the `prev` buckets listed in `r` to `next`, returning
/// `U_{x - chi}^alpha(next, phi)` for every lift `phi` of an element of `r`.
#[allow(clippy::too_many_arguments)]
pub fn hashing(
    oracle: &mut SignalOracle,
    chi: &SparseSpectrum,
    base: &BucketVector,
    prev: &BucketVector,
    next: &BucketVector,
    alpha: &FreqVec,
    r: &BTreeSet<usize>,
    c_hash: f64,
    seed: u64,
    cond: &mut Conditioning,
) -> Result<BucketValueList> {
    let dims = oracle.dims();
    dims.check(&alpha.0)?;
    if !(base.divides(prev) && prev.divides(next)) || next.d() != dims.d {
        return invalid("bucket vectors must satisfy base | prev | next");
    }
    let mut out = BucketValueList::new(next.clone());
    if r.is_empty() {
        return Ok(out);
    }
    let d = dims.d;
    let n = dims.n;
    let mut groups: BTreeMap<usize, Vec<Vec<usize>>> = BTreeMap::new();
    for &rho in r {
        if rho >= prev.count() {
            return Err(Error::OutOfRange(format!("bucket {rho} outside [B^prev]")));
        }
        let c = prev.coords(rho);
        groups.entry(base.bucket_of(&c)).or_default().push(c);
    }
    let lift_shape = BucketVector {
        sizes: prev.sizes.iter().zip(&next.sizes).map(|(p, q)| q / p).collect(),
    };
    let lift = lift_shape.count();
    let m = lift * groups.values().map(|g| g.len()).max().unwrap_or(0);
    let rows = rows_for(m, dims, c_hash);

    let mut gen = rng::stream(seed, 7);
    let betas: Vec<Vec<usize>> =
        (0..rows).map(|_| next.sizes.iter().map(|&s| gen.gen_range(0..s)).collect()).collect();

    let tw = Twiddles::new(n);
    let chi_terms: Vec<(Vec<usize>, usize, Complex64)> = chi
        .iter()
        .filter_map(|(f, v)| {
            let b = base.bucket_of(&f.0);
            groups.contains_key(&b).then_some((f.0, b, v))
        })
        .collect();

    let mut w: BTreeMap<usize, Vec<Complex64>> =
        groups.keys().map(|&b| (b, Vec::with_capacity(rows))).collect();
    let mut a = vec![0; d];
    for beta in &betas {
        for q in 0..d {
            a[q] = (alpha.0[q] + beta[q] * (n / next.sizes[q])) & (n - 1);
        }
        let mut zh = base_bucket_values(oracle, base, &a)?;
        for (f, b, v) in &chi_terms {
            zh[*b] -= v * tw.character(f, &a);
        }
        for (b, col) in w.iter_mut() {
            col.push(zh[*b]);
        }
    }

    let step: Vec<usize> = next.sizes.iter().map(|&s| n / s).collect();
    let mut s_coords = vec![0; d];
    for (b, rhos) in &groups {
        let mut phis: Vec<Vec<usize>> = Vec::with_capacity(rhos.len() * lift);
        for rho in rhos {
            for s in 0..lift {
                lift_shape.unflat(s, &mut s_coords);
                phis.push((0..d).map(|q| rho[q] + s_coords[q] * prev.sizes[q]).collect());
            }
        }
        let mat = DMatrix::from_fn(rows, phis.len(), |i, j| {
            let mut e = 0usize;
            for q in 0..d {
                e = e.wrapping_add(phis[j][q] * betas[i][q] * step[q]);
            }
            tw.get(e)
        });
        let rhs = DVector::from_vec(w[b].clone());
        cond.record(normal_condition(&mat));
        let v = least_squares_solve(&mat, &rhs).map_err(|e| match e {
            Error::SingularSystem { .. } => Error::SingularSystem { bucket: *b },
            e => e,
        })?;
        for (phi, val) in phis.iter().zip(v.iter()) {
            out.entries.insert(next.flat(phi), *val);
        }
    }
    Ok(out)
}

/// Bucket values for the shift multiset together with the decoding shifts `0` and `e_q`.
#[derive(Clone, Debug, Default)]
pub struct ShiftMeasurements {
    pub random: Vec<(FreqVec, BucketValueList)>,
    pub zero: Option<BucketValueList>,
    pub units: Vec<Option<BucketValueList>>,
}

/// Thresholds for the zero and one-sparse tests of `test_buckets`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BucketThresholds {
    pub eps: f64,
    /// Scale of `sum_b |U(b)|^2`, an estimate of `||x^hat||^2`.
    pub reference_energy: f64,
}

/// Decodes one-sparse buckets; returns the decoded spectrum and the buckets
/// that are nonzero but not one-sparse.
pub fn test_buckets(
    meas: &ShiftMeasurements,
    bucket: &BucketVector,
    dims: Dims,
    th: &BucketThresholds,
) -> Result<(SparseSpectrum, BTreeSet<usize>)> {
    let zero = meas.zero.as_ref().ok_or_else(|| Error::MissingShift("0".into()))?;
    if meas.units.len() != dims.d {
        return Err(Error::MissingShift("e_q".into()));
    }
    let units = meas
        .units
        .iter()
        .enumerate()
        .map(|(q, u)| u.as_ref().ok_or_else(|| Error::MissingShift(format!("e_{}", q + 1))))
        .collect::<Result<Vec<_>>>()?;
    if meas.random.is_empty() {
        return invalid("shift multiset is empty");
    }
    let tw = Twiddles::new(dims.n);
    let na = meas.random.len() as f64;
    let mut chi = SparseSpectrum::new(dims);
    let mut collided = BTreeSet::new();
    let mut f = vec![0usize; dims.d];
    let mut bc = vec![0usize; dims.d];
    for (&b, &v) in &zero.entries {
        let energy: f64 =
            meas.random.iter().map(|(_, w)| w.entries.get(&b).map_or(0.0, |z| z.norm_sqr())).sum();
        if energy <= th.eps * na * th.reference_energy {
            continue;
        }
        let mut ok = v != Complex64::default();
        for q in 0..dims.d {
            let wq = units[q].entries.get(&b).copied().unwrap_or_default();
            let ph = (wq / v).arg();
            let fq = (ph * dims.n as f64 / (2.0 * std::f64::consts::PI)).round() as i64;
            f[q] = fq.rem_euclid(dims.n as i64) as usize;
        }
        bucket.unflat(b, &mut bc);
        ok &= bucket.bucket_of(&f) == b;
        if ok {
            let resid: f64 = meas
                .random
                .iter()
                .map(|(alpha, w)| {
                    let wa = w.entries.get(&b).copied().unwrap_or_default();
                    (v * tw.character(&f, &alpha.0) - wa).norm_sqr()
                })
                .sum();
            ok = resid <= th.eps * energy;
        }
        if ok {
            chi.insert(&FreqVec(f.clone()), v)?;
        } else {
            collided.insert(b);
        }
    }
    Ok((chi, collided))
}

#[derive(Clone, Debug, Serialize)]
pub struct RandomSupportReport {
    #[serde(flatten)]
    pub recovery: RecoveryReport,
    pub rounds: usize,
    pub unresolved_buckets: usize,
    pub conditioning: Conditioning,
}

fn bucket_for(b: u128, dims: Dims) -> Result<BucketVector> {
    let cap = 1u128 << dims.height();
    let b = b.clamp(1, cap);
    let p = 1u128 << (127 - b.leading_zeros());
    make_bucket(p as usize, dims)
}

/// Recovery for Bernoulli-support signals with expected sparsity `k`.
pub fn sparse_fft_random_support(
    oracle: &mut SignalOracle,
    k: usize,
    cfg: &RandomSupportConfig,
) -> Result<RandomSupportReport> {
    cfg.validate()?;
    let dims = oracle.dims();
    if k == 0 || !k.is_power_of_two() {
        return invalid("k must be a power of two");
    }
    if dims.height() >= 64 || k.trailing_zeros() > dims.height() {
        return invalid("k exceeds n^d");
    }
    let started = Instant::now();
    let start = oracle.counts();
    let g = cfg.gamma as u128;
    let k128 = k as u128;
    let pow = |e: usize| g.checked_pow(e as u32).unwrap_or(u128::MAX);
    let mul = |a: u128, b: u128| a.saturating_mul(b);

    let mut base = bucket_for(g * k128, dims)?;
    let mut prev = base.clone();
    let mut next = bucket_for(mul(pow(2), k128), dims)?;
    let mut r: BTreeSet<usize> = (0..prev.count()).collect();
    let mut chi = SparseSpectrum::new(dims);
    let mut cond = Conditioning::default();
    let mut reference: Option<f64> = None;

    let log_n_total = dims.height() as f64;
    let lln = log_n_total.log2().max(1.0);
    let n_alpha = ((cfg.c_test * log_n_total * log_n_total * lln * lln).ceil() as usize).max(1);
    let rounds = cfg.rounds(k);
    let mut done_rounds = 0;
    for t in 0..=rounds {
        if r.is_empty() {
            break;
        }
        done_rounds += 1;
        let round_seed = rng::mix(cfg.seed, t as u64 + 1);
        let mut gen = rng::stream(round_seed, 3);
        let alphas: Vec<FreqVec> = (0..n_alpha)
            .map(|_| FreqVec((0..dims.d).map(|_| gen.gen_range(0..dims.n)).collect()))
            .collect();
        let mut call = 0u64;
        let mut hash = |alpha: &FreqVec, cond: &mut Conditioning| {
            call += 1;
            hashing(
                oracle,
                &chi,
                &base,
                &prev,
                &next,
                alpha,
                &r,
                cfg.c_hash,
                rng::mix(round_seed, call),
                cond,
            )
        };
        let mut meas = ShiftMeasurements::default();
        for alpha in alphas {
            let w = hash(&alpha, &mut cond)?;
            meas.random.push((alpha, w));
        }
        meas.zero = Some(hash(&FreqVec::zero(dims.d), &mut cond)?);
        for q in 0..dims.d {
            meas.units.push(Some(hash(&FreqVec::unit(dims.d, q), &mut cond)?));
        }
        let reference_energy = *reference.get_or_insert_with(|| {
            meas.random
                .iter()
                .map(|(_, w)| w.entries.values().map(|z| z.norm_sqr()).sum::<f64>())
                .sum::<f64>()
                / meas.random.len() as f64
        });
        let th = BucketThresholds { eps: cfg.eps_zero, reference_energy };
        let (found, collided) = test_buckets(&meas, &next, dims, &th)?;
        for (f, v) in found.iter_flat() {
            chi.add_flat(f, v);
        }
        r = collided;
        prev = next.clone();
        base = bucket_for(k128 / pow(t).max(1), dims)?;
        next = bucket_for(mul(pow(t + 3), k128), dims)?;
        if !base.divides(&prev) {
            base = prev.clone();
        }
    }
    let success = r.is_empty();
    Ok(RandomSupportReport {
        recovery: RecoveryReport {
            spectrum: chi,
            samples_used: oracle.counts() - start,
            zero_tests_run: 0,
            iterations: done_rounds,
            sample_set_size: n_alpha,
            wall_time_ms: started.elapsed().as_secs_f64() * 1e3,
            success,
        },
        rounds: done_rounds,
        unresolved_buckets: r.len(),
        conditioning: cond,
    })
}

/// Draws a support containing each frequency independently with probability `k/N`.
pub fn bernoulli_support<R: Rng>(dims: Dims, k: usize, rng: &mut R) -> Vec<u64> {
    let total = dims.total();
    let p = k as f64 / total as f64;
    (0..total as u64).filter(|_| rng.gen::<f64>() < p).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BernoulliTrial {
    pub support_size: usize,
    /// `|S^(B)|`: support elements sharing their `B`-bucket with another one.
    pub colliding: usize,
    /// Largest number of colliding elements inside one coarse bucket.
    pub max_per_coarse_bucket: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BernoulliStats {
    pub trials: Vec<BernoulliTrial>,
    pub mean: f64,
    pub std_dev: f64,
    pub std_err: f64,
}

/// Monte-Carlo statistics of `S^(B)` over Bernoulli supports. When `coarse` is
/// given, also reports the largest count of colliding elements per `coarse` bucket.
pub fn bernoulli_collision_stats(
    dims: Dims,
    k: usize,
    bucket: &BucketVector,
    coarse: Option<&BucketVector>,
    trials: usize,
    seed: u64,
) -> Result<BernoulliStats> {
    if trials == 0 {
        return invalid("trials must be positive");
    }
    if !dims.is_dense_ok() || k > dims.total() {
        return invalid("k must not exceed N, and N must be enumerable");
    }
    let mut gen = rng::stream(seed, 11);
    let mut out = Vec::with_capacity(trials);
    let mut f = vec![0; dims.d];
    for _ in 0..trials {
        let s = bernoulli_support(dims, k, &mut gen);
        let mut by_bucket: BTreeMap<usize, Vec<u64>> = BTreeMap::new();
        for &x in &s {
            dims.unflatten_into(x, &mut f);
            by_bucket.entry(bucket.bucket_of(&f)).or_default().push(x);
        }
        let mut per_coarse: BTreeMap<usize, usize> = BTreeMap::new();
        let mut colliding = 0;
        for members in by_bucket.values().filter(|m| m.len() >= 2) {
            colliding += members.len();
            if let Some(c) = coarse {
                for &x in members {
                    dims.unflatten_into(x, &mut f);
                    *per_coarse.entry(c.bucket_of(&f)).or_default() += 1;
                }
            }
        }
        out.push(BernoulliTrial {
            support_size: s.len(),
            colliding,
            max_per_coarse_bucket: per_coarse.values().copied().max().unwrap_or(0),
        });
    }
    let nt = trials as f64;
    let mean = out.iter().map(|t| t.colliding as f64).sum::<f64>() / nt;
    let var = if trials > 1 {
        out.iter().map(|t| (t.colliding as f64 - mean).powi(2)).sum::<f64>() / (nt - 1.0)
    } else {
        0.0
    };
    Ok(BernoulliStats { trials: out, mean, std_dev: var.sqrt(), std_err: (var / nt).sqrt() })
}
