mod common;

use std::collections::BTreeSet;

use common::*;
use dimfft::random_support::*;
use dimfft::signal::Twiddles;
use dimfft::{Dims, FreqVec, SignalOracle, SparseSpectrum};
use num_complex::Complex64;
use rand::Rng;

fn residual(x: &SparseSpectrum, chi: &SparseSpectrum) -> SparseSpectrum {
    let mut r = x.clone();
    for (f, v) in chi.iter_flat() {
        r.add_flat(f, -v);
    }
    r.prune(0.0);
    r
}

fn random_chain<R: Rng>(dims: Dims, rng: &mut R) -> (BucketVector, BucketVector, BucketVector) {
    let h = dims.height();
    let a = rng.gen_range(0..=h);
    let b = rng.gen_range(a..=h);
    let c = rng.gen_range(b..=h.min(b + 4));
    let mb = |e: u32| make_bucket(1 << e, dims).unwrap();
    (mb(a), mb(b), mb(c))
}

fn check_against_brute_force<R: Rng>(dims: Dims, r: &mut R) -> (f64, usize) {
    let k = r.gen_range(0..=12.min(dims.total()));
    let x = random_spectrum(dims, k, r);
    let mut chi = SparseSpectrum::new(dims);
    for (f, v) in x.iter_flat() {
        match r.gen_range(0..3) {
            0 => chi.insert_flat(f, v),
            1 => chi.insert_flat(f, v * 0.5),
            _ => {}
        }
    }
    let (base, prev, next) = random_chain(dims, r);
    let resid = residual(&x, &chi);
    let mut rset: BTreeSet<usize> = resid.iter().map(|(f, _)| prev.bucket_of(&f.0)).collect();
    for _ in 0..2 {
        rset.insert(r.gen_range(0..prev.count()));
    }
    let alpha = FreqVec((0..dims.d).map(|_| r.gen_range(0..dims.n)).collect());
    let mut o = SignalOracle::from_spectrum(&x).unwrap();
    let mut cond = Conditioning::default();
    let w = hashing(&mut o, &chi, &base, &prev, &next, &alpha, &rset, 1.0, r.gen(), &mut cond).unwrap();
    let lift = next.count() / prev.count();
    assert_eq!(w.entries.len(), rset.len() * lift);
    let scale = resid.norm_sqr().sqrt().max(1.0);
    let mut worst = 0.0f64;
    for (&phi, &val) in &w.entries {
        let pc = next.coords(phi);
        assert!(rset.contains(&prev.bucket_of(&pc)));
        let want = bucket_value(&resid, &next, &pc, &alpha).unwrap();
        worst = worst.max((val - want).norm() / scale);
    }
    (worst, w.entries.len())
}

#[test]
fn hashing_matches_brute_force_up_to_1024() {
    let mut r = rng(41);
    let mut checked = 0;
    for (n, d) in shapes(1024) {
        let dims = Dims::new(n, d).unwrap();
        for _ in 0..4 {
            let (err, m) = check_against_brute_force(dims, &mut r);
            assert!(err <= 1e-6, "n={n} d={d} err={err}");
            checked += m;
        }
    }
    assert!(checked > 0);
}

#[test]
fn hashing_examples() {
    let dims = Dims::new(8, 1).unwrap();
    let tw = Twiddles::new(8);
    let b2 = BucketVector::new(vec![2], dims).unwrap();
    let b4 = BucketVector::new(vec![4], dims).unwrap();
    let alpha = FreqVec(vec![3]);
    let mut cond = Conditioning::default();

    let mut x = SparseSpectrum::new(dims);
    x.insert_flat(5, Complex64::new(1.5, -0.5));
    let mut o = SignalOracle::from_spectrum(&x).unwrap();
    let none = SparseSpectrum::new(dims);
    let w = hashing(&mut o, &none, &b2, &b4, &b4, &alpha, &BTreeSet::from([1]), 1.0, 0, &mut cond).unwrap();
    assert_eq!(w.entries.len(), 1);
    assert!((w.entries[&1] - x.get_flat(5) * tw.get(15)).norm() <= 1e-9);

    let mut zero = SignalOracle::from_dense(dims, vec![Complex64::default(); 8]).unwrap();
    let w = hashing(&mut zero, &none, &b2, &b2, &b4, &alpha, &BTreeSet::from([0, 1]), 1.0, 0, &mut cond).unwrap();
    assert!(w.entries.values().all(|z| z.norm() <= 1e-12));

    let mut y = SparseSpectrum::new(dims);
    y.insert_flat(1, Complex64::new(1.0, 0.0));
    y.insert_flat(6, Complex64::new(0.0, 2.0));
    let mut o = SignalOracle::from_spectrum(&y).unwrap();
    let w = hashing(&mut o, &none, &b2, &b2, &b4, &alpha, &BTreeSet::from([0, 1]), 1.0, 9, &mut cond).unwrap();
    assert_eq!(w.entries.len(), 4);
    for (&phi, &val) in &w.entries {
        let want = bucket_value(&y, &b4, &[phi], &alpha).unwrap();
        assert!((val - want).norm() <= 1e-6);
    }
    assert!(hashing(&mut o, &none, &b4, &b2, &b4, &alpha, &BTreeSet::from([0]), 1.0, 0, &mut cond).is_err());
}

#[test]
fn downsampling_identity() {
    let mut r = rng(42);
    for trial in 0..100 {
        let (n, d) = [(16, 1), (8, 2), (4, 3), (32, 2), (2, 6)][trial % 5];
        let dims = Dims::new(n, d).unwrap();
        let k = r.gen_range(1..=10);
        let x = random_spectrum(dims, k, &mut r);
        let b = make_bucket(1 << r.gen_range(0..=dims.height()), dims).unwrap();
        let a: Vec<usize> = (0..d).map(|_| r.gen_range(0..n)).collect();
        let mut o = SignalOracle::from_spectrum(&x).unwrap();
        let fast = base_bucket_values(&mut o, &b, &a).unwrap();
        assert_eq!(o.counts().samples_read, b.count() as u64);
        for (idx, z) in fast.iter().enumerate() {
            let want = bucket_value(&x, &b, &b.coords(idx), &FreqVec(a.clone())).unwrap();
            assert!((z - want).norm() <= 1e-9, "trial {trial}");
        }
    }
}

#[test]
fn least_squares_recovers_planted_vector() {
    use nalgebra::{DMatrix, DVector};
    let mut r = rng(43);
    let a = DMatrix::from_fn(8, 3, |_, _| Complex64::new(r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0)));
    let v = DVector::from_fn(3, |_, _| Complex64::new(r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0)));
    let w = &a * &v;
    let got = least_squares_solve(&a, &w).unwrap();
    assert!((got - &v).norm() <= 1e-9);

    let noisy = DVector::from_fn(8, |i, _| w[i] + Complex64::new(r.gen_range(-0.1..0.1), 0.0));
    let sol = least_squares_solve(&a, &noisy).unwrap();
    let normal_resid = a.adjoint() * (&a * sol - &noisy);
    assert!(normal_resid.norm() <= 1e-8 * noisy.norm());

    let sq = DMatrix::from_row_slice(2, 2, &[Complex64::new(2.0, 0.0), Complex64::new(1.0, 1.0), Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0)]);
    let rhs = DVector::from_vec(vec![Complex64::new(3.0, 1.0), Complex64::new(1.0, 0.0)]);
    let s = least_squares_solve(&sq, &rhs).unwrap();
    assert!((&sq * s - rhs).norm() <= 1e-12);
}

#[test]
fn colliding_bucket_goes_to_r() {
    let dims = Dims::new(8, 1).unwrap();
    let b4 = BucketVector::new(vec![4], dims).unwrap();
    let mut x = SparseSpectrum::new(dims);
    x.insert_flat(1, Complex64::new(1.0, 0.0));
    x.insert_flat(5, Complex64::new(1.0, 0.0));
    x.insert_flat(2, Complex64::new(0.0, 1.0));
    let list = |a: usize| {
        let mut l = BucketValueList::new(b4.clone());
        for b in 0..4 {
            l.entries.insert(b, bucket_value(&x, &b4, &[b], &FreqVec(vec![a])).unwrap());
        }
        l
    };
    let meas = ShiftMeasurements {
        random: [3usize, 6, 1, 7, 2].iter().map(|&a| (FreqVec(vec![a]), list(a))).collect(),
        zero: Some(list(0)),
        units: vec![Some(list(1))],
    };
    let th = BucketThresholds { eps: 1e-12, reference_energy: 3.0 };
    let (chi, r) = test_buckets(&meas, &b4, dims, &th).unwrap();
    assert_eq!(r, BTreeSet::from([1]));
    assert_eq!(chi.support_flat(), vec![2]);
    assert!((chi.get_flat(2) - Complex64::new(0.0, 1.0)).norm() <= 1e-12);
    let no_units = ShiftMeasurements { units: vec![None], ..meas };
    assert!(test_buckets(&no_units, &b4, dims, &th).is_err());
}

#[test]
fn collision_free_instance_finishes_in_one_round() {
    let dims = Dims::new(16, 3).unwrap();
    let cfg = RandomSupportConfig::default();
    let next = make_bucket(cfg.gamma * cfg.gamma * 8, dims).unwrap();
    let mut x = SparseSpectrum::new(dims);
    let mut used = BTreeSet::new();
    let mut r = rng(44);
    while x.len() < 8 {
        let f = r.gen_range(0..dims.total() as u64);
        let b = next.bucket_of(&dims.unflatten(f).unwrap().0);
        if used.insert(b) {
            x.insert_flat(f, Complex64::from_polar(1.0, r.gen_range(0.0..6.0)));
        }
    }
    let mut o = SignalOracle::from_spectrum(&x).unwrap();
    let rep = sparse_fft_random_support(&mut o, 8, &cfg).unwrap();
    assert_eq!(rep.rounds, 1);
    assert!(rep.recovery.success);
    assert!(rep.recovery.spectrum.max_abs_diff(&x) <= 1e-9);
}

#[test]
fn zero_signal_and_bad_k() {
    let dims = Dims::new(16, 2).unwrap();
    let mut o = SignalOracle::from_dense(dims, vec![Complex64::default(); 256]).unwrap();
    let rep = sparse_fft_random_support(&mut o, 4, &RandomSupportConfig::default()).unwrap();
    assert!(rep.recovery.success && rep.recovery.spectrum.is_empty());
    assert!(sparse_fft_random_support(&mut o, 6, &RandomSupportConfig::default()).is_err());
}

#[test]
fn collision_mean_within_lemma_bound_small_grid() {
    let dims = Dims::new(16, 3).unwrap();
    for (k, b) in [(8usize, 64usize), (16, 64), (16, 256), (4, 16)] {
        let bucket = make_bucket(b, dims).unwrap();
        let s = bernoulli_collision_stats(dims, k, &bucket, None, 300, k as u64).unwrap();
        assert!(s.mean <= (k * k) as f64 / b as f64 + 3.0 * s.std_err, "k={k} b={b} mean={}", s.mean);
    }
}
