//! Signals on the torus `[n]^d`, sparse spectra, and dense transforms.

use std::cell::RefCell;
use std::collections::{BTreeMap, HashSet};
use std::f64::consts::PI;
use std::io::{Read, Write};

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Largest `d * log2(n)` accepted. Flattened labels must fit in a `u64`.
pub const MAX_HEIGHT: u32 = 64;

/// Side length `n` (a power of two) and dimension `d`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Dims {
    pub n: usize,
    pub d: usize,
}

impl Dims {
    pub fn new(n: usize, d: usize) -> Result<Self> {
        if n < 2 || !n.is_power_of_two() {
            return invalid(format!("n = {n} must be a power of two >= 2"));
        }
        if d == 0 {
            return invalid("d must be positive");
        }
        let h = n.trailing_zeros() as u64 * d as u64;
        if h > MAX_HEIGHT as u64 {
            return invalid(format!("d * log2(n) = {h} exceeds {MAX_HEIGHT}"));
        }
        Ok(Dims { n, d })
    }

    pub fn log_n(&self) -> u32 {
        self.n.trailing_zeros()
    }

    /// Height of the splitting tree, `d * log2(n)`.
    pub fn height(&self) -> u32 {
        self.log_n() * self.d as u32
    }

    /// `N = n^d`. Panics if it does not fit in `usize`.
    pub fn total(&self) -> usize {
        1usize
            .checked_shl(self.height())
            .filter(|_| self.height() < usize::BITS)
            .expect("n^d overflows usize")
    }

    pub fn total_f64(&self) -> f64 {
        (self.height() as f64).exp2()
    }

    /// Whether a dense vector of length `N` is reasonable to allocate.
    pub fn is_dense_ok(&self) -> bool {
        self.height() <= 28
    }

    pub fn flatten(&self, f: &[usize]) -> Result<u64> {
        if f.len() != self.d {
            return Err(Error::DimensionMismatch { expected: self.d, got: f.len() });
        }
        let l = self.log_n();
        let mut out = 0u64;
        for (q, &c) in f.iter().enumerate() {
            if c >= self.n {
                return Err(Error::OutOfRange(format!("coordinate {c} >= n = {}", self.n)));
            }
            out |= (c as u64) << (l as usize * q);
        }
        Ok(out)
    }

    /// Flattening without validation, for coordinates already reduced mod `n`.
    pub fn flatten_unchecked(&self, f: &[usize]) -> usize {
        let l = self.log_n() as usize;
        f.iter().enumerate().fold(0usize, |acc, (q, &c)| acc | (c << (l * q)))
    }

    pub fn unflatten(&self, idx: u64) -> Result<FreqVec> {
        if self.height() < 64 && idx >> self.height() != 0 {
            return Err(Error::OutOfRange(format!("flat index {idx} >= n^d")));
        }
        let mut out = vec![0; self.d];
        self.unflatten_into(idx, &mut out);
        Ok(FreqVec(out))
    }

    pub fn unflatten_into(&self, idx: u64, out: &mut [usize]) {
        let l = self.log_n();
        let mask = (self.n - 1) as u64;
        for (q, c) in out.iter_mut().enumerate() {
            *c = ((idx >> (l * q as u32)) & mask) as usize;
        }
    }

    /// Coordinate `q` (0-based) of a flattened label.
    pub fn coordinate(&self, idx: u64, q: usize) -> usize {
        ((idx >> (self.log_n() * q as u32)) & (self.n - 1) as u64) as usize
    }

    pub fn check(&self, f: &[usize]) -> Result<()> {
        self.flatten(f).map(|_| ())
    }
}

/// A point of `[n]^d`, used both for time indices and frequencies.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct FreqVec(pub Vec<usize>);

impl FreqVec {
    pub fn zero(d: usize) -> Self {
        FreqVec(vec![0; d])
    }

    pub fn unit(d: usize, q: usize) -> Self {
        let mut v = vec![0; d];
        v[q] = 1;
        FreqVec(v)
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl From<Vec<usize>> for FreqVec {
    fn from(v: Vec<usize>) -> Self {
        FreqVec(v)
    }
}

/// `e^{2 pi i k / n}` for `k` in `[n]`.
#[derive(Clone, Debug)]
pub struct Twiddles {
    n: usize,
    table: Vec<Complex64>,
}

impl Twiddles {
    /// Tables above this size are not materialized; entries are computed on demand.
    pub const MAX_TABLE: usize = 1 << 16;

    pub fn new(n: usize) -> Self {
        assert!(n.is_power_of_two());
        if n > Self::MAX_TABLE {
            return Twiddles { n, table: Vec::new() };
        }
        let table = (0..n)
            .map(|k| {
                let th = 2.0 * PI * k as f64 / n as f64;
                Complex64::new(th.cos(), th.sin())
            })
            .collect();
        Twiddles { n, table }
    }

    #[inline]
    pub fn get(&self, k: usize) -> Complex64 {
        let k = k & (self.n - 1);
        match self.table.get(k) {
            Some(z) => *z,
            None => Complex64::from_polar(1.0, 2.0 * PI * k as f64 / self.n as f64),
        }
    }

    /// `e^{2 pi i <xi, t> / n}`.
    #[inline]
    pub fn character(&self, xi: &[usize], t: &[usize]) -> Complex64 {
        let mut k = 0usize;
        for (a, b) in xi.iter().zip(t) {
            k = k.wrapping_add(a.wrapping_mul(*b));
        }
        self.get(k)
    }

    pub fn n(&self) -> usize {
        self.n
    }
}

/// Sparse map from frequencies to nonzero complex values, keyed by flattened index.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseSpectrum {
    dims: Dims,
    entries: BTreeMap<u64, Complex64>,
}

impl SparseSpectrum {
    pub fn new(dims: Dims) -> Self {
        SparseSpectrum { dims, entries: BTreeMap::new() }
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Sets `f` to `v`. Zero values remove the entry.
    pub fn insert(&mut self, f: &FreqVec, v: Complex64) -> Result<()> {
        let idx = self.dims.flatten(&f.0)?;
        self.insert_flat(idx, v);
        Ok(())
    }

    pub fn insert_flat(&mut self, idx: u64, v: Complex64) {
        if v == Complex64::new(0.0, 0.0) {
            self.entries.remove(&idx);
        } else {
            self.entries.insert(idx, v);
        }
    }

    pub fn add_flat(&mut self, idx: u64, v: Complex64) {
        let cur = self.get_flat(idx);
        self.insert_flat(idx, cur + v);
    }

    pub fn get(&self, f: &FreqVec) -> Result<Complex64> {
        Ok(self.get_flat(self.dims.flatten(&f.0)?))
    }

    pub fn get_flat(&self, idx: u64) -> Complex64 {
        self.entries.get(&idx).copied().unwrap_or_default()
    }

    pub fn iter_flat(&self) -> impl Iterator<Item = (u64, Complex64)> + '_ {
        self.entries.iter().map(|(&k, &v)| (k, v))
    }

    pub fn iter(&self) -> impl Iterator<Item = (FreqVec, Complex64)> + '_ {
        let dims = self.dims;
        self.entries
            .iter()
            .map(move |(&k, &v)| (dims.unflatten(k).expect("valid key"), v))
    }

    pub fn support_flat(&self) -> Vec<u64> {
        self.entries.keys().copied().collect()
    }

    /// Drops entries with `|v| <= tol`.
    pub fn prune(&mut self, tol: f64) {
        self.entries.retain(|_, v| v.norm() > tol);
    }

    pub fn norm_sqr(&self) -> f64 {
        self.entries.values().map(|v| v.norm_sqr()).sum()
    }

    /// `|| self - other ||_2`.
    pub fn l2_distance(&self, other: &SparseSpectrum) -> f64 {
        let mut s = 0.0;
        for (k, v) in &self.entries {
            s += (v - other.get_flat(*k)).norm_sqr();
        }
        for (k, v) in &other.entries {
            if !self.entries.contains_key(k) {
                s += v.norm_sqr();
            }
        }
        s.sqrt()
    }

    /// Largest per-entry deviation.
    pub fn max_abs_diff(&self, other: &SparseSpectrum) -> f64 {
        let mut m: f64 = 0.0;
        for (k, v) in &self.entries {
            m = m.max((v - other.get_flat(*k)).norm());
        }
        for (k, v) in &other.entries {
            if !self.entries.contains_key(k) {
                m = m.max(v.norm());
            }
        }
        m
    }

    pub fn to_dense(&self) -> Result<Vec<Complex64>> {
        if !self.dims.is_dense_ok() {
            return invalid("spectrum too large to densify");
        }
        let mut out = vec![Complex64::default(); self.dims.total()];
        for (&k, &v) in &self.entries {
            out[k as usize] = v;
        }
        Ok(out)
    }

    pub fn from_dense(dims: Dims, values: &[Complex64], tol: f64) -> Result<Self> {
        check_len(dims, values.len())?;
        let mut s = SparseSpectrum::new(dims);
        for (i, v) in values.iter().enumerate() {
            if v.norm() > tol {
                s.entries.insert(i as u64, *v);
            }
        }
        Ok(s)
    }

    /// Time-domain value `(1/N) sum_xi chi_xi e^{2 pi i <xi, t>/n}`.
    pub fn evaluate(&self, t: &[usize], tw: &Twiddles) -> Complex64 {
        let mut xi = vec![0usize; self.dims.d];
        let mut acc = Complex64::default();
        for (&k, &v) in &self.entries {
            self.dims.unflatten_into(k, &mut xi);
            acc += v * tw.character(&xi, t);
        }
        acc / self.dims.total_f64()
    }

    pub fn to_json(&self) -> SpectrumJson {
        SpectrumJson {
            n: self.dims.n,
            d: self.dims.d,
            entries: self
                .iter()
                .map(|(f, v)| SpectrumEntry { f: f.0, re: v.re, im: v.im })
                .collect(),
        }
    }

    pub fn from_json(j: &SpectrumJson) -> Result<Self> {
        let dims = Dims::new(j.n, j.d)?;
        let mut s = SparseSpectrum::new(dims);
        for e in &j.entries {
            let idx = dims.flatten(&e.f)?;
            s.insert_flat(idx, Complex64::new(e.re, e.im));
        }
        Ok(s)
    }

    pub fn write_json<W: Write>(&self, w: W) -> Result<()> {
        serde_json::to_writer_pretty(w, &self.to_json())?;
        Ok(())
    }

    pub fn read_json<R: Read>(r: R) -> Result<Self> {
        let j: SpectrumJson = serde_json::from_reader(r)?;
        Self::from_json(&j)
    }
}

impl Serialize for SparseSpectrum {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_json().serialize(s)
    }
}

impl<'de> Deserialize<'de> for SparseSpectrum {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let j = SpectrumJson::deserialize(d)?;
        SparseSpectrum::from_json(&j).map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumEntry {
    pub f: Vec<usize>,
    pub re: f64,
    pub im: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumJson {
    pub n: usize,
    pub d: usize,
    pub entries: Vec<SpectrumEntry>,
}

/// Sample counters of a [`SignalOracle`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleCounts {
    pub samples_read: u64,
    pub distinct_points_read: u64,
}

impl std::ops::Sub for SampleCounts {
    type Output = SampleCounts;
    fn sub(self, o: SampleCounts) -> SampleCounts {
        SampleCounts {
            samples_read: self.samples_read - o.samples_read,
            distinct_points_read: self.distinct_points_read - o.distinct_points_read,
        }
    }
}

type SampleFn = Box<dyn Fn(&[usize]) -> Complex64 + Send>;

enum Backing {
    Dense(Vec<Complex64>),
    Func(SampleFn),
}

enum Seen {
    Bits(Vec<u64>),
    Set(HashSet<u64>),
}

impl Seen {
    fn new(dims: Dims) -> Self {
        if dims.height() <= 30 {
            Seen::Bits(vec![0; dims.total().div_ceil(64)])
        } else {
            Seen::Set(HashSet::new())
        }
    }

    fn mark(&mut self, idx: u64) -> bool {
        match self {
            Seen::Bits(b) => {
                let (w, m) = ((idx / 64) as usize, 1u64 << (idx % 64));
                let fresh = b[w] & m == 0;
                b[w] |= m;
                fresh
            }
            Seen::Set(s) => s.insert(idx),
        }
    }
}

/// Time-domain access to a signal, counting every read.
pub struct SignalOracle {
    dims: Dims,
    backing: Backing,
    seen: Seen,
    counts: SampleCounts,
    scratch: Vec<usize>,
}

impl std::fmt::Debug for SignalOracle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SignalOracle")
            .field("dims", &self.dims)
            .field("counts", &self.counts)
            .finish()
    }
}

impl SignalOracle {
    pub fn from_dense(dims: Dims, values: Vec<Complex64>) -> Result<Self> {
        check_len(dims, values.len())?;
        Ok(Self::with_backing(dims, Backing::Dense(values)))
    }

    /// Oracle backed by a closure evaluated at each requested point.
    pub fn from_fn(dims: Dims, f: impl Fn(&[usize]) -> Complex64 + Send + 'static) -> Self {
        Self::with_backing(dims, Backing::Func(Box::new(f)))
    }

    /// Oracle whose samples are the inverse transform of `spec`.
    pub fn from_spectrum(spec: &SparseSpectrum) -> Result<Self> {
        let dims = spec.dims();
        if dims.is_dense_ok() {
            let dense = idft(dims, &spec.to_dense()?)?;
            return Self::from_dense(dims, dense);
        }
        let s = spec.clone();
        let tw = Twiddles::new(dims.n);
        Ok(Self::from_fn(dims, move |t| s.evaluate(t, &tw)))
    }

    fn with_backing(dims: Dims, backing: Backing) -> Self {
        SignalOracle {
            dims,
            backing,
            seen: Seen::new(dims),
            counts: SampleCounts::default(),
            scratch: vec![0; dims.d],
        }
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn read(&mut self, t: &FreqVec) -> Result<Complex64> {
        let idx = self.dims.flatten(&t.0)?;
        Ok(self.read_flat(idx))
    }

    /// Reads the sample at a flattened index known to be in range.
    pub fn read_flat(&mut self, idx: u64) -> Complex64 {
        self.counts.samples_read += 1;
        if self.seen.mark(idx) {
            self.counts.distinct_points_read += 1;
        }
        match &self.backing {
            Backing::Dense(v) => v[idx as usize],
            Backing::Func(f) => {
                self.dims.unflatten_into(idx, &mut self.scratch);
                f(&self.scratch)
            }
        }
    }

    pub fn counts(&self) -> SampleCounts {
        self.counts
    }

    pub fn reset_counts(&mut self) {
        self.counts = SampleCounts::default();
        self.seen = Seen::new(self.dims);
    }

    /// Dense samples `x_t` in row-major order, if the oracle is dense.
    pub fn dense_values(&self) -> Option<&[Complex64]> {
        match &self.backing {
            Backing::Dense(v) => Some(v),
            Backing::Func(_) => None,
        }
    }
}

fn check_len(dims: Dims, len: usize) -> Result<()> {
    if !dims.is_dense_ok() {
        return invalid("signal too large for dense storage");
    }
    if len != dims.total() {
        return Err(Error::DimensionMismatch { expected: dims.total(), got: len });
    }
    Ok(())
}

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

/// In-place unnormalized multidimensional FFT over a mixed-size grid.
///
/// Axis `q` has length `shape[q]` and stride `prod_{r<q} shape[r]`. The forward
/// transform uses `e^{-2 pi i <xi, t>/shape}`; `inverse` flips the sign.
pub fn fft_shape(data: &mut [Complex64], shape: &[usize], inverse: bool) -> Result<()> {
    let total: usize = shape.iter().product();
    if data.len() != total {
        return Err(Error::DimensionMismatch { expected: total, got: data.len() });
    }
    let mut stride = 1usize;
    let mut line = Vec::new();
    for &len in shape {
        if len > 1 {
            let plan = PLANNER.with(|p| {
                let mut p = p.borrow_mut();
                if inverse {
                    p.plan_fft_inverse(len)
                } else {
                    p.plan_fft_forward(len)
                }
            });
            line.resize(len, Complex64::default());
            let block = stride * len;
            for base in (0..total).step_by(block) {
                for off in 0..stride {
                    for (j, z) in line.iter_mut().enumerate() {
                        *z = data[base + off + j * stride];
                    }
                    plan.process(&mut line);
                    for (j, z) in line.iter().enumerate() {
                        data[base + off + j * stride] = *z;
                    }
                }
            }
        }
        stride *= len;
    }
    Ok(())
}

/// Unnormalized forward DFT on `[n]^d`.
pub fn dft(dims: Dims, x: &[Complex64]) -> Result<Vec<Complex64>> {
    check_len(dims, x.len())?;
    let mut out = x.to_vec();
    fft_shape(&mut out, &vec![dims.n; dims.d], false)?;
    Ok(out)
}

/// Inverse DFT with the `1/N` factor.
pub fn idft(dims: Dims, xh: &[Complex64]) -> Result<Vec<Complex64>> {
    check_len(dims, xh.len())?;
    let mut out = xh.to_vec();
    fft_shape(&mut out, &vec![dims.n; dims.d], true)?;
    let s = 1.0 / dims.total_f64();
    out.iter_mut().for_each(|z| *z *= s);
    Ok(out)
}

/// Cyclic convolution `(a * b)_t = sum_s a_s b_{t-s}` on `[n]^d`.
pub fn convolve(dims: Dims, a: &[Complex64], b: &[Complex64]) -> Result<Vec<Complex64>> {
    let fa = dft(dims, a)?;
    let fb = dft(dims, b)?;
    let prod: Vec<_> = fa.iter().zip(&fb).map(|(x, y)| x * y).collect();
    idft(dims, &prod)
}

/// Tensor product: `out_j = prod_q factors[q][j_q]`, row-major with coordinate 0 fastest.
pub fn tensor(factors: &[Vec<Complex64>]) -> Result<Vec<Complex64>> {
    if factors.is_empty() {
        return invalid("tensor of no factors");
    }
    let n = factors[0].len();
    if let Some(bad) = factors.iter().find(|f| f.len() != n) {
        return Err(Error::DimensionMismatch { expected: n, got: bad.len() });
    }
    let mut out = vec![Complex64::new(1.0, 0.0)];
    for f in factors {
        let mut next = Vec::with_capacity(out.len() * n);
        for c in f {
            next.extend(out.iter().map(|o| o * c));
        }
        out = next;
    }
    Ok(out)
}

/// Writes a dense signal: `n: u32`, `d: u32`, then interleaved `f64` pairs, all little-endian.
pub fn write_signal<W: Write>(mut w: W, dims: Dims, x: &[Complex64]) -> Result<()> {
    check_len(dims, x.len())?;
    w.write_all(&(dims.n as u32).to_le_bytes())?;
    w.write_all(&(dims.d as u32).to_le_bytes())?;
    for z in x {
        w.write_all(&z.re.to_le_bytes())?;
        w.write_all(&z.im.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_signal<R: Read>(mut r: R) -> Result<(Dims, Vec<Complex64>)> {
    let mut b4 = [0u8; 4];
    r.read_exact(&mut b4)?;
    let n = u32::from_le_bytes(b4) as usize;
    r.read_exact(&mut b4)?;
    let d = u32::from_le_bytes(b4) as usize;
    let dims = Dims::new(n, d)?;
    if !dims.is_dense_ok() {
        return invalid("signal too large for dense storage");
    }
    let mut buf = Vec::new();
    r.read_to_end(&mut buf)?;
    if buf.len() != dims.total() * 16 {
        return Err(Error::DimensionMismatch { expected: dims.total() * 16, got: buf.len() });
    }
    let x = buf
        .chunks_exact(16)
        .map(|c| {
            let re = f64::from_le_bytes(c[..8].try_into().unwrap());
            let im = f64::from_le_bytes(c[8..].try_into().unwrap());
            Complex64::new(re, im)
        })
        .collect();
    Ok((dims, x))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn flatten_roundtrip() {
        let dims = Dims::new(8, 3).unwrap();
        let f = vec![3, 1, 7];
        let idx = dims.flatten(&f).unwrap();
        assert_eq!(idx, 3 + 8 + 7 * 64);
        assert_eq!(dims.unflatten(idx).unwrap().0, f);
        assert!(dims.flatten(&[8, 0, 0]).is_err());
        assert!(dims.flatten(&[1, 2]).is_err());
    }

    #[test]
    fn dims_validation() {
        assert!(Dims::new(6, 1).is_err());
        assert!(Dims::new(4, 0).is_err());
        assert!(Dims::new(1 << 32, 2).is_ok());
        assert!(Dims::new(1 << 32, 3).is_err());
    }

    #[test]
    fn delta_transforms_to_ones() {
        let dims = Dims::new(4, 1).unwrap();
        let x = vec![c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)];
        let xh = dft(dims, &x).unwrap();
        for z in xh {
            assert!((z - c(1.0, 0.0)).norm() < 1e-15);
        }
    }

    #[test]
    fn hadamard_2x2() {
        let dims = Dims::new(2, 2).unwrap();
        let x = vec![c(1.0, 0.0), c(2.0, 0.0), c(3.0, 0.0), c(4.0, 0.0)];
        let xh = dft(dims, &x).unwrap();
        let want = [10.0, -2.0, -4.0, 0.0];
        for (z, w) in xh.iter().zip(want) {
            assert!((z - c(w, 0.0)).norm() < 1e-12);
        }
    }

    #[test]
    fn convolve_with_delta_is_identity() {
        let dims = Dims::new(8, 1).unwrap();
        let mut delta = vec![c(0.0, 0.0); 8];
        delta[0] = c(1.0, 0.0);
        let x: Vec<_> = (0..8).map(|i| c(i as f64, -(i as f64) / 2.0)).collect();
        let y = convolve(dims, &x, &delta).unwrap();
        for (a, b) in x.iter().zip(&y) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn tensor_small() {
        let a = vec![c(1.0, 0.0), c(2.0, 0.0)];
        let b = vec![c(3.0, 0.0), c(5.0, 0.0)];
        let t = tensor(&[a, b]).unwrap();
        let want = [3.0, 6.0, 5.0, 10.0];
        for (z, w) in t.iter().zip(want) {
            assert_eq!(*z, c(w, 0.0));
        }
        assert!(tensor(&[vec![c(1.0, 0.0)], vec![c(1.0, 0.0); 2]]).is_err());
    }

    #[test]
    fn spectrum_json_roundtrip() {
        let dims = Dims::new(8, 2).unwrap();
        let mut s = SparseSpectrum::new(dims);
        s.insert(&FreqVec(vec![3, 1]), c(1.0, -0.5)).unwrap();
        let mut buf = Vec::new();
        s.write_json(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.contains("\"f\""));
        let back = SparseSpectrum::read_json(&buf[..]).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn zero_values_not_stored() {
        let dims = Dims::new(4, 1).unwrap();
        let mut s = SparseSpectrum::new(dims);
        s.insert(&FreqVec(vec![1]), c(1.0, 0.0)).unwrap();
        s.insert(&FreqVec(vec![1]), c(0.0, 0.0)).unwrap();
        assert!(s.is_empty());
    }

    #[test]
    fn binary_signal_roundtrip() {
        let dims = Dims::new(4, 2).unwrap();
        let x: Vec<_> = (0..16).map(|i| c(i as f64, 1.0 / (i + 1) as f64)).collect();
        let mut buf = Vec::new();
        write_signal(&mut buf, dims, &x).unwrap();
        assert_eq!(&buf[..8], &[4, 0, 0, 0, 2, 0, 0, 0]);
        let (d2, y) = read_signal(&buf[..]).unwrap();
        assert_eq!(d2, dims);
        assert_eq!(x, y);
        assert!(read_signal(&buf[..buf.len() - 1]).is_err());
    }

    #[test]
    fn oracle_counts_reads() {
        let dims = Dims::new(4, 1).unwrap();
        let mut o = SignalOracle::from_dense(dims, vec![c(1.0, 0.0); 4]).unwrap();
        o.read_flat(1);
        o.read_flat(1);
        o.read(&FreqVec(vec![2])).unwrap();
        assert_eq!(o.counts(), SampleCounts { samples_read: 3, distinct_points_read: 2 });
        assert!(o.read(&FreqVec(vec![4])).is_err());
    }

    #[test]
    fn mixed_shape_fft_matches_direct() {
        let shape = [4usize, 2, 1, 8];
        let total: usize = shape.iter().product();
        let x: Vec<_> = (0..total).map(|i| c((i * 7 % 5) as f64, (i % 3) as f64)).collect();
        let mut y = x.clone();
        fft_shape(&mut y, &shape, false).unwrap();
        let coords = |mut i: usize| {
            shape
                .iter()
                .map(|&s| {
                    let c = i % s;
                    i /= s;
                    c
                })
                .collect::<Vec<_>>()
        };
        for (k, yk) in y.iter().enumerate() {
            let kc = coords(k);
            let mut acc = c(0.0, 0.0);
            for (t, xt) in x.iter().enumerate() {
                let tc = coords(t);
                let ph: f64 = (0..4).map(|q| (kc[q] * tc[q]) as f64 / shape[q] as f64).sum();
                acc += xt * Complex64::from_polar(1.0, -2.0 * PI * ph);
            }
            assert!((acc - yk).norm() < 1e-10);
        }
    }
}
