//! Sparse Fourier transforms on `[n]^d` whose cost does not grow exponentially in `d`.
//!
//! The building blocks are splitting trees over flattened frequencies and the
//! adaptive aliasing filters they induce. On top of these sit a support-given
//! estimator, worst-case and random-phase recovery, a near-linear recovery for
//! random supports, and a simulator for the tree-pruning process.

pub mod error;
pub mod estimate;
pub mod filter;
pub mod harness;
pub mod rng;
pub mod pruning;
pub mod random_support;
pub mod signal;
pub mod sparse_fft;
pub mod tree;

pub use error::{Error, Result};
pub use signal::{Dims, FreqVec, SampleCounts, SignalOracle, SparseSpectrum};
