#![allow(dead_code)]

use dimfft::{Dims, SparseSpectrum};
use num_complex::Complex64;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Coordinates of a flat index, coordinate 0 fastest.
pub fn coords(n: usize, d: usize, mut idx: usize) -> Vec<usize> {
    (0..d)
        .map(|_| {
            let c = idx % n;
            idx /= n;
            c
        })
        .collect()
}

fn phase(n: usize, a: &[usize], b: &[usize]) -> f64 {
    let dot: usize = a.iter().zip(b).map(|(x, y)| x * y % n).sum();
    2.0 * std::f64::consts::PI * (dot % n) as f64 / n as f64
}

/// `x^hat_f = sum_t x_t e^{-2 pi i f.t/n}` by direct summation.
pub fn direct_dft(n: usize, d: usize, x: &[Complex64]) -> Vec<Complex64> {
    let total = x.len();
    (0..total)
        .map(|f| {
            let fc = coords(n, d, f);
            (0..total)
                .map(|t| x[t] * Complex64::from_polar(1.0, -phase(n, &fc, &coords(n, d, t))))
                .sum()
        })
        .collect()
}

/// `x_t = (1/N) sum_f x^hat_f e^{2 pi i f.t/n}` by direct summation.
pub fn direct_idft(n: usize, d: usize, xh: &[Complex64]) -> Vec<Complex64> {
    let total = xh.len();
    (0..total)
        .map(|t| {
            let tc = coords(n, d, t);
            (0..total)
                .map(|f| xh[f] * Complex64::from_polar(1.0, phase(n, &coords(n, d, f), &tc)))
                .sum::<Complex64>()
                / total as f64
        })
        .collect()
}

pub fn random_vec<R: Rng>(len: usize, rng: &mut R) -> Vec<Complex64> {
    (0..len).map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect()
}

/// Spectrum with `k` distinct random frequencies and random complex values.
pub fn random_spectrum<R: Rng>(dims: Dims, k: usize, rng: &mut R) -> SparseSpectrum {
    let mut x = SparseSpectrum::new(dims);
    for f in rand::seq::index::sample(rng, dims.total(), k) {
        let v = Complex64::from_polar(rng.gen_range(0.5..1.5), rng.gen_range(0.0..std::f64::consts::TAU));
        x.insert_flat(f as u64, v);
    }
    x
}

pub fn max_diff(a: &[Complex64], b: &[Complex64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

pub fn norm(a: &[Complex64]) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Small `(n, d)` shapes with `N <= max_total`.
pub fn shapes(max_total: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for d in 1..=4usize {
        let mut n = 2usize;
        while n.pow(d as u32) <= max_total {
            out.push((n, d));
            n *= 2;
        }
    }
    out
}
