//! Estimation of a spectrum whose support is known.

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{invalid, Result};
use crate::filter::{build_isolating_filter, IsolatingFilter};
use crate::signal::{Dims, FreqVec, SampleCounts, SignalOracle, SparseSpectrum};
use crate::tree::SplittingTree;

/// Entries with modulus at most this are dropped from the estimate.
pub const DROP_TOL: f64 = 1e-9;

#[derive(Clone, Debug, Serialize)]
pub struct EstimateReport {
    pub spectrum: SparseSpectrum,
    pub samples_used: SampleCounts,
    pub iterations: usize,
}

/// `sum_xi chi_xi G^hat(xi)` over the support of `chi`.
pub(crate) fn filtered_mass(chi: &SparseSpectrum, g: &IsolatingFilter, scratch: &mut [usize]) -> Complex64 {
    let dims = chi.dims();
    let mut h = Complex64::default();
    for (k, c) in chi.iter_flat() {
        dims.unflatten_into(k, scratch);
        let gh = g.frequency(scratch);
        if gh != Complex64::default() {
            h += c * gh;
        }
    }
    h
}

/// `sum_s G_s x_{delta - s}`.
pub(crate) fn filtered_sample(
    oracle: &mut SignalOracle,
    g: &IsolatingFilter,
    delta: &[usize],
    scratch: &mut [usize],
) -> Complex64 {
    let dims = oracle.dims();
    let mask = dims.n - 1;
    let mut acc = Complex64::default();
    for (s, c) in g.time().iter() {
        for q in 0..dims.d {
            scratch[q] = delta[q].wrapping_sub(s[q]) & mask;
        }
        acc += c * oracle.read_flat(dims.flatten_unchecked(scratch) as u64);
    }
    acc
}

/// Value of `x^hat - chi^hat` at the leaf `v`, which must be at full depth.
pub(crate) fn peel_value(
    oracle: &mut SignalOracle,
    chi: &SparseSpectrum,
    g: &IsolatingFilter,
) -> Complex64 {
    let d = oracle.dims().d;
    let mut scratch = vec![0; d];
    let zero = vec![0; d];
    let h = filtered_mass(chi, g, &mut scratch);
    let s = filtered_sample(oracle, g, &zero, &mut scratch);
    s * oracle.dims().total_f64() - h
}

/// Recovers `x^hat` on `support`, peeling one minimum-weight leaf per iteration.
pub fn estimate(oracle: &mut SignalOracle, support: &[FreqVec]) -> Result<EstimateReport> {
    let dims = oracle.dims();
    if support.is_empty() {
        return invalid("support is empty");
    }
    let flat = support
        .iter()
        .map(|f| dims.flatten(&f.0))
        .collect::<Result<Vec<_>>>()?;
    estimate_flat(oracle, &flat, |_, _| {})
}

/// `estimate` on flattened support, calling `observe(chi, tree)` after each peel.
pub fn estimate_flat(
    oracle: &mut SignalOracle,
    support: &[u64],
    mut observe: impl FnMut(&SparseSpectrum, &SplittingTree),
) -> Result<EstimateReport> {
    let dims: Dims = oracle.dims();
    if support.is_empty() {
        return invalid("support is empty");
    }
    let start = oracle.counts();
    let mut tree = SplittingTree::build(support, dims.height())?;
    let mut chi = SparseSpectrum::new(dims);
    let mut iterations = 0;
    while let Some(v) = tree.min_weight_leaf() {
        let g = build_isolating_filter(&tree, v, dims)?;
        let val = peel_value(oracle, &chi, &g);
        chi.add_flat(tree.label(v), val);
        tree.remove_leaf(v)?;
        iterations += 1;
        observe(&chi, &tree);
    }
    chi.prune(DROP_TOL);
    Ok(EstimateReport { spectrum: chi, samples_used: oracle.counts() - start, iterations })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn single_frequency() {
        let dims = Dims::new(4, 1).unwrap();
        let mut x = SparseSpectrum::new(dims);
        x.insert_flat(0, c(1.0, 0.0));
        let mut o = SignalOracle::from_spectrum(&x).unwrap();
        let r = estimate(&mut o, &[FreqVec(vec![0])]).unwrap();
        assert_eq!(r.iterations, 1);
        assert!((r.spectrum.get_flat(0) - c(1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn fig1b_peels_five_first() {
        let dims = Dims::new(8, 1).unwrap();
        let mut x = SparseSpectrum::new(dims);
        x.insert_flat(2, c(1.0, 0.0));
        x.insert_flat(4, c(0.0, 2.0));
        x.insert_flat(5, c(-1.0, 0.0));
        let mut o = SignalOracle::from_spectrum(&x).unwrap();
        let mut first = None;
        let r = estimate_flat(&mut o, &[2, 4, 5], |chi, _| {
            if first.is_none() {
                first = chi.support_flat().first().copied();
            }
        })
        .unwrap();
        assert_eq!(first, Some(5));
        assert!(r.spectrum.max_abs_diff(&x) < 1e-12);
    }

    #[test]
    fn superset_support_drops_zeros() {
        let dims = Dims::new(8, 1).unwrap();
        let mut x = SparseSpectrum::new(dims);
        x.insert_flat(3, c(2.0, -1.0));
        let mut o = SignalOracle::from_spectrum(&x).unwrap();
        let r = estimate_flat(&mut o, &[1, 3, 6], |_, _| {}).unwrap();
        assert_eq!(r.spectrum.support_flat(), vec![3]);
    }

    #[test]
    fn delta_signal() {
        let dims = Dims::new(8, 1).unwrap();
        let mut x = vec![c(0.0, 0.0); 8];
        x[0] = c(1.0, 0.0);
        let mut o = SignalOracle::from_dense(dims, x).unwrap();
        let all: Vec<u64> = (0..8).collect();
        let r = estimate_flat(&mut o, &all, |_, _| {}).unwrap();
        for f in 0..8 {
            assert!((r.spectrum.get_flat(f) - c(1.0, 0.0)).norm() < 1e-12);
        }
        assert_eq!(r.samples_used.distinct_points_read, 8);
    }

    #[test]
    fn empty_support_rejected() {
        let dims = Dims::new(4, 1).unwrap();
        let mut o = SignalOracle::from_dense(dims, vec![c(0.0, 0.0); 4]).unwrap();
        assert!(estimate(&mut o, &[]).is_err());
    }
}
