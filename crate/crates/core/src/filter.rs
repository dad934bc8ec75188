//! Adaptive aliasing filters.
//!
//! A one-dimensional filter is described by one optional phase per level. The
//! time filter is the convolution of two-point kernels, one for each active
//! level, so its support has size `2^{#active}`. The `d`-dimensional filter is the
//! tensor product of per-coordinate filters read off the flattened tree.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{invalid, Error, Result};
use crate::signal::{Dims, Twiddles};
use crate::tree::{low_mask, NodeId, Side, SplittingTree};

/// Per-level phases `g_j = e^{-2 pi i k_j / 2^j}`, stored as the residue `k_j`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FilterDescriptor {
    n: usize,
    levels: Vec<Option<u64>>,
}

impl FilterDescriptor {
    /// The identity filter (`G = delta`), with all levels inactive.
    pub fn identity(n: usize) -> Self {
        FilterDescriptor { n, levels: vec![None; n.trailing_zeros() as usize] }
    }

    /// Descriptor from explicit residues; entry `j - 1` holds `k_j < 2^j`.
    pub fn from_residues(n: usize, levels: Vec<Option<u64>>) -> Result<Self> {
        if !n.is_power_of_two() || levels.len() != n.trailing_zeros() as usize {
            return invalid("descriptor length must equal log2(n)");
        }
        for (i, k) in levels.iter().enumerate() {
            if let Some(k) = k {
                if *k >> (i + 1) != 0 {
                    return invalid(format!("residue {k} out of range at level {}", i + 1));
                }
            }
        }
        Ok(FilterDescriptor { n, levels })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn residues(&self) -> &[Option<u64>] {
        &self.levels
    }

    /// `g_j` for `j` in `1..=log2(n)`.
    pub fn g(&self, j: usize) -> Complex64 {
        match self.levels[j - 1] {
            None => Complex64::new(0.0, 0.0),
            Some(k) => Complex64::from_polar(1.0, -2.0 * PI * k as f64 / (1u64 << j) as f64),
        }
    }

    pub fn g_vec(&self) -> Vec<Complex64> {
        (1..=self.levels.len()).map(|j| self.g(j)).collect()
    }

    /// Number of active levels.
    pub fn weight(&self) -> u32 {
        self.levels.iter().filter(|k| k.is_some()).count() as u32
    }
}

/// Sparse time-domain filter over `[n]^d`.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeFilter {
    d: usize,
    coords: Vec<usize>,
    coeffs: Vec<Complex64>,
}

impl TimeFilter {
    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[usize], Complex64)> + '_ {
        self.coords.chunks_exact(self.d.max(1)).zip(self.coeffs.iter().copied())
    }

    pub fn to_dense(&self, dims: Dims) -> Result<Vec<Complex64>> {
        if dims.d != self.d {
            return Err(Error::DimensionMismatch { expected: dims.d, got: self.d });
        }
        let mut out = vec![Complex64::default(); dims.total()];
        for (t, c) in self.iter() {
            out[dims.flatten_unchecked(t)] += c;
        }
        Ok(out)
    }
}

/// Algorithm-1 preprocessing on a one-dimensional tree: `g_j` is active exactly
/// when the level-`(j-1)` ancestor of `v` has two children.
pub fn filter_preprocess(tree: &SplittingTree, v: NodeId) -> Result<FilterDescriptor> {
    if !tree.is_alive(v) {
        return Err(Error::StaleNode);
    }
    if !tree.is_leaf(v) {
        return Err(Error::NotALeaf);
    }
    let h = tree.height();
    if h == 0 || h >= usize::BITS {
        return invalid("tree height must be in 1..64");
    }
    let path = tree.path(v)?;
    let f = tree.label(v);
    let mut levels = vec![None; h as usize];
    for j in 1..path.len() {
        if tree.has_two_children(path[j - 1]) {
            levels[j - 1] = Some(f & low_mask(j as u32));
        }
    }
    Ok(FilterDescriptor { n: 1usize << h, levels })
}

/// Offsets and phases (in units of `1/n` turns) of the one-dimensional time filter.
fn time_points(g: &FilterDescriptor) -> Vec<(usize, usize)> {
    let n = g.n;
    let mut pts = vec![(0usize, 0usize)];
    for (i, k) in g.levels.iter().enumerate() {
        if let Some(k) = k {
            let l = i + 1;
            let shift = n >> l;
            let ph = (*k as usize).wrapping_mul(shift) & (n - 1);
            let extra: Vec<_> = pts
                .iter()
                .map(|&(t, p)| ((t + n - shift) & (n - 1), (p + ph) & (n - 1)))
                .collect();
            pts.extend(extra);
        }
    }
    pts.sort_unstable();
    pts
}

/// Time filter of a one-dimensional descriptor, obtained by applying
/// `G(t) <- G(t)/2 + g_l G(t + n/2^l)/2` for each active level starting from `delta`.
pub fn filter_time(g: &FilterDescriptor) -> TimeFilter {
    let tw = Twiddles::new(g.n);
    let scale = (-(g.weight() as f64)).exp2();
    let pts = time_points(g);
    TimeFilter {
        d: 1,
        coords: pts.iter().map(|p| p.0).collect(),
        coeffs: pts.iter().map(|&(_, p)| tw.get(g.n - p) * scale).collect(),
    }
}

/// `(1 + e^{2 pi i r / 2^l}) / 2` with exact values at `r = 0` and `r = 2^{l-1}`.
#[inline]
fn half_kernel(r: u64, l: usize) -> Complex64 {
    if r == 0 {
        return Complex64::new(1.0, 0.0);
    }
    if r == 1u64 << (l - 1) {
        return Complex64::new(0.0, 0.0);
    }
    let th = PI * r as f64 / (1u64 << l) as f64;
    Complex64::from_polar(th.cos(), th)
}

/// `G^hat(xi) = prod over active levels of (1 + g_l e^{2 pi i xi / 2^l}) / 2`.
pub fn filter_frequency(g: &FilterDescriptor, xi: usize) -> Complex64 {
    let mut acc = Complex64::new(1.0, 0.0);
    for (i, k) in g.levels.iter().enumerate() {
        if let Some(k) = k {
            let l = i + 1;
            let r = (xi as u64).wrapping_sub(*k) & low_mask(l as u32);
            acc *= half_kernel(r, l);
            if acc == Complex64::new(0.0, 0.0) {
                break;
            }
        }
    }
    acc
}

/// Per-coordinate subtree `T_q^v` with the image of the target leaf.
#[derive(Clone, Debug)]
pub struct ProjectedTree {
    pub tree: SplittingTree,
    pub target: NodeId,
}

/// Subtree of `tree` rooted at the level-`q log n` ancestor of `v`, truncated to
/// depth `log n` and relabeled by coordinate `q` (0-based).
pub fn project_coordinate_tree(
    tree: &SplittingTree,
    v: NodeId,
    q: usize,
    dims: Dims,
) -> Result<ProjectedTree> {
    check_tree(tree, v, dims)?;
    let l = dims.log_n();
    let path = tree.path(v)?;
    let lv = tree.level(v);
    if q >= dims.d || (q as u32) * l > lv {
        return invalid(format!("leaf level {lv} is below coordinate block {q}"));
    }
    let top = (q as u32) * l;
    let bottom = top + l;
    let target_old = path[lv.min(bottom) as usize];
    let mut out = SplittingTree::root_only(l);
    let mut target = out.root().expect("root");
    let mut stack = vec![(path[top as usize], target)];
    while let Some((old, new)) = stack.pop() {
        if old == target_old {
            target = new;
        }
        if tree.level(old) >= bottom {
            continue;
        }
        for side in [Side::Right, Side::Left] {
            if let Some(c) = tree.child(old, side) {
                let nc = out.add_child(new, side)?;
                stack.push((c, nc));
            }
        }
    }
    Ok(ProjectedTree { tree: out, target })
}

fn check_tree(tree: &SplittingTree, v: NodeId, dims: Dims) -> Result<()> {
    if tree.height() != dims.height() {
        return invalid("tree height does not match dims");
    }
    if !tree.is_alive(v) {
        return Err(Error::StaleNode);
    }
    if !tree.is_leaf(v) {
        return Err(Error::NotALeaf);
    }
    Ok(())
}

/// Tensor-product filter isolating a leaf of a flattened `d`-dimensional tree.
#[derive(Clone, Debug)]
pub struct IsolatingFilter {
    dims: Dims,
    per_coordinate: Vec<FilterDescriptor>,
    time: TimeFilter,
}

impl IsolatingFilter {
    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn per_coordinate(&self) -> &[FilterDescriptor] {
        &self.per_coordinate
    }

    pub fn time(&self) -> &TimeFilter {
        &self.time
    }

    pub fn weight(&self) -> u32 {
        self.per_coordinate.iter().map(|g| g.weight()).sum()
    }

    /// `G^hat(xi)` as the product of per-coordinate values.
    pub fn frequency(&self, xi: &[usize]) -> Complex64 {
        let mut acc = Complex64::new(1.0, 0.0);
        for (g, &x) in self.per_coordinate.iter().zip(xi) {
            if g.weight() > 0 {
                acc *= filter_frequency(g, x);
                if acc == Complex64::new(0.0, 0.0) {
                    break;
                }
            }
        }
        acc
    }

    /// Time filter coefficient at every point of its support, keyed by flat index.
    pub fn time_map(&self) -> BTreeMap<usize, Complex64> {
        self.time.iter().map(|(t, c)| (self.dims.flatten_unchecked(t), c)).collect()
    }
}

/// Builds the `(v, T)`-isolating filter from the root-to-`v` path of `tree`.
///
/// The ancestor at global level `j - 1` controls coordinate `q = (j - 1) / log n`
/// at local level `j - q log n`, with phase taken from coordinate `q` of `v`'s label.
pub fn build_isolating_filter(
    tree: &SplittingTree,
    v: NodeId,
    dims: Dims,
) -> Result<IsolatingFilter> {
    check_tree(tree, v, dims)?;
    let l = dims.log_n() as usize;
    let path = tree.path(v)?;
    let label = tree.label(v);
    let mut per = vec![FilterDescriptor::identity(dims.n); dims.d];
    for j in 1..path.len() {
        if tree.has_two_children(path[j - 1]) {
            let q = (j - 1) / l;
            let jl = j - q * l;
            let f = dims.coordinate(label, q) as u64;
            per[q].levels[jl - 1] = Some(f & low_mask(jl as u32));
        }
    }
    Ok(assemble(dims, per))
}

/// Same filter, assembled through `project_coordinate_tree` and `filter_preprocess`.
pub fn build_isolating_filter_projected(
    tree: &SplittingTree,
    v: NodeId,
    dims: Dims,
) -> Result<IsolatingFilter> {
    check_tree(tree, v, dims)?;
    let l = dims.log_n();
    let lv = tree.level(v);
    let q_star = lv.div_ceil(l) as usize;
    let mut per = vec![FilterDescriptor::identity(dims.n); dims.d];
    for (q, slot) in per.iter_mut().enumerate().take(q_star) {
        let p = project_coordinate_tree(tree, v, q, dims)?;
        *slot = filter_preprocess(&p.tree, p.target)?;
    }
    Ok(assemble(dims, per))
}

fn assemble(dims: Dims, per: Vec<FilterDescriptor>) -> IsolatingFilter {
    let tw = Twiddles::new(dims.n);
    let n = dims.n;
    let factors: Vec<Vec<(usize, usize)>> = per.iter().map(time_points).collect();
    let mut pts: Vec<(Vec<usize>, usize)> = vec![(Vec::with_capacity(dims.d), 0)];
    for f in &factors {
        let mut next = Vec::with_capacity(pts.len() * f.len());
        for &(t, p) in f {
            for (c, ph) in &pts {
                let mut c = c.clone();
                c.push(t);
                next.push((c, (ph + p) & (n - 1)));
            }
        }
        pts = next;
    }
    let weight: u32 = per.iter().map(|g| g.weight()).sum();
    let scale = (-(weight as f64)).exp2();
    let mut coords = Vec::with_capacity(pts.len() * dims.d);
    let mut coeffs = Vec::with_capacity(pts.len());
    for (c, p) in pts {
        coords.extend(c);
        coeffs.push(tw.get(n - p) * scale);
    }
    IsolatingFilter { dims, per_coordinate: per, time: TimeFilter { d: dims.d, coords, coeffs } }
}
