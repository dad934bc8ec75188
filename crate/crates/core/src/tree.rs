//! Splitting trees over flattened frequencies.
//!
//! The root has label 0 at level 0. A node at level `l` with label `f` has a
//! right child with label `f` and a left child with label `f + 2^l`, both at
//! level `l + 1`. Leaves at level `h` are the frequencies themselves.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use crate::error::{invalid, Error, Result};
use crate::signal::{Dims, FreqVec};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    Right,
    Left,
}

#[derive(Clone, Debug)]
struct Node {
    label: u64,
    level: u32,
    parent: Option<usize>,
    right: Option<usize>,
    left: Option<usize>,
    alive: bool,
}

#[inline]
pub(crate) fn low_mask(level: u32) -> u64 {
    if level >= 64 {
        u64::MAX
    } else {
        (1u64 << level) - 1
    }
}

/// Set of flattened frequencies `{f : f = residue mod 2^level}`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FrequencyCone {
    pub residue: u64,
    pub level: u32,
}

impl FrequencyCone {
    pub fn contains(&self, f: u64) -> bool {
        (f & low_mask(self.level)) == self.residue
    }

    /// All members of the cone below `2^height`, in increasing order.
    pub fn members(&self, height: u32) -> Result<Vec<u64>> {
        let free = height.saturating_sub(self.level);
        if free > 26 {
            return invalid("cone too large to enumerate");
        }
        let step = 1u64 << self.level;
        Ok((0..(1u64 << free)).map(|j| self.residue + j * step).collect())
    }
}

#[derive(Clone, Debug)]
pub struct SplittingTree {
    height: u32,
    nodes: Vec<Node>,
    free: Vec<usize>,
    root: Option<usize>,
    leaves: usize,
}

impl PartialEq for SplittingTree {
    fn eq(&self, other: &Self) -> bool {
        self.height == other.height && self.node_set() == other.node_set()
    }
}

impl SplittingTree {
    pub fn empty(height: u32) -> Self {
        SplittingTree { height, nodes: Vec::new(), free: Vec::new(), root: None, leaves: 0 }
    }

    /// A tree consisting of the root only.
    pub fn root_only(height: u32) -> Self {
        let mut t = Self::empty(height);
        let r = t.alloc(0, 0, None);
        t.root = Some(r);
        t.leaves = 1;
        t
    }

    /// Tree whose leaves at level `height` are exactly `support`.
    pub fn build(support: &[u64], height: u32) -> Result<Self> {
        if height > 64 {
            return invalid("height exceeds 64");
        }
        let mut fs: Vec<u64> = support.to_vec();
        fs.sort_unstable();
        fs.dedup();
        if let Some(&bad) = fs.iter().find(|&&f| f & !low_mask(height) != 0) {
            return Err(Error::OutOfRange(format!("frequency {bad} >= 2^{height}")));
        }
        let mut t = Self::empty(height);
        if fs.is_empty() {
            return Ok(t);
        }
        let r = t.alloc(0, 0, None);
        t.root = Some(r);
        for f in fs {
            let mut cur = r;
            for l in 0..height {
                let side = if (f >> l) & 1 == 1 { Side::Left } else { Side::Right };
                cur = match t.child_raw(cur, side) {
                    Some(c) => c,
                    None => t.attach(cur, side),
                };
            }
        }
        t.leaves = t.count_leaves();
        Ok(t)
    }

    fn alloc(&mut self, label: u64, level: u32, parent: Option<usize>) -> usize {
        let node = Node { label, level, parent, right: None, left: None, alive: true };
        if let Some(i) = self.free.pop() {
            self.nodes[i] = node;
            i
        } else {
            self.nodes.push(node);
            self.nodes.len() - 1
        }
    }

    fn attach(&mut self, p: usize, side: Side) -> usize {
        let (label, level) = (self.nodes[p].label, self.nodes[p].level);
        let child_label = match side {
            Side::Right => label,
            Side::Left => label | (1u64 << level),
        };
        let c = self.alloc(child_label, level + 1, Some(p));
        match side {
            Side::Right => self.nodes[p].right = Some(c),
            Side::Left => self.nodes[p].left = Some(c),
        }
        c
    }

    fn child_raw(&self, p: usize, side: Side) -> Option<usize> {
        match side {
            Side::Right => self.nodes[p].right,
            Side::Left => self.nodes[p].left,
        }
    }

    fn check(&self, id: NodeId) -> Result<&Node> {
        match self.nodes.get(id.0) {
            Some(n) if n.alive => Ok(n),
            _ => Err(Error::StaleNode),
        }
    }

    fn count_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| n.alive && n.left.is_none() && n.right.is_none()).count()
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn root(&self) -> Option<NodeId> {
        self.root.map(NodeId)
    }

    pub fn is_empty(&self) -> bool {
        self.root.is_none()
    }

    pub fn leaf_count(&self) -> usize {
        self.leaves
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len() - self.free.len()
    }

    pub fn label(&self, id: NodeId) -> u64 {
        self.nodes[id.0].label
    }

    pub fn level(&self, id: NodeId) -> u32 {
        self.nodes[id.0].level
    }

    pub fn parent(&self, id: NodeId) -> Option<NodeId> {
        self.nodes[id.0].parent.map(NodeId)
    }

    pub fn child(&self, id: NodeId, side: Side) -> Option<NodeId> {
        self.child_raw(id.0, side).map(NodeId)
    }

    pub fn is_alive(&self, id: NodeId) -> bool {
        self.check(id).is_ok()
    }

    pub fn is_leaf(&self, id: NodeId) -> bool {
        let n = &self.nodes[id.0];
        n.alive && n.left.is_none() && n.right.is_none()
    }

    pub fn has_two_children(&self, id: NodeId) -> bool {
        let n = &self.nodes[id.0];
        n.left.is_some() && n.right.is_some()
    }

    /// Nodes on the path from the root to `id`, inclusive. Entry `j` is at level `j`.
    pub fn path(&self, id: NodeId) -> Result<Vec<NodeId>> {
        self.check(id)?;
        let mut out = vec![id];
        let mut cur = id.0;
        while let Some(p) = self.nodes[cur].parent {
            out.push(NodeId(p));
            cur = p;
        }
        out.reverse();
        Ok(out)
    }

    /// Number of proper ancestors with two children.
    pub fn weight(&self, id: NodeId) -> Result<u32> {
        self.check(id)?;
        let mut w = 0;
        let mut cur = id.0;
        while let Some(p) = self.nodes[cur].parent {
            if self.nodes[p].left.is_some() && self.nodes[p].right.is_some() {
                w += 1;
            }
            cur = p;
        }
        Ok(w)
    }

    /// Leaves with their weights, ordered by label.
    pub fn leaves_with_weights(&self) -> Vec<(NodeId, u32)> {
        let mut out = Vec::with_capacity(self.leaves);
        let Some(r) = self.root else { return out };
        let mut stack = vec![(r, 0u32)];
        while let Some((i, w)) = stack.pop() {
            let n = &self.nodes[i];
            let wc = w + u32::from(n.left.is_some() && n.right.is_some());
            match (n.left, n.right) {
                (None, None) => out.push((NodeId(i), w)),
                (l, r) => {
                    stack.extend(l.map(|c| (c, wc)));
                    stack.extend(r.map(|c| (c, wc)));
                }
            }
        }
        out.sort_by_key(|&(id, _)| self.nodes[id.0].label);
        out
    }

    pub fn leaves(&self) -> Vec<NodeId> {
        self.leaves_with_weights().into_iter().map(|(id, _)| id).collect()
    }

    /// Leaf of smallest weight, ties broken by smallest label.
    pub fn min_weight_leaf(&self) -> Option<NodeId> {
        let leaves = self.leaves_with_weights();
        let mut best: Option<(u32, u64, NodeId)> = None;
        for (id, w) in leaves {
            let key = (w, self.nodes[id.0].label, id);
            if best.is_none_or(|b| (key.0, key.1) < (b.0, b.1)) {
                best = Some(key);
            }
        }
        best.map(|b| b.2)
    }

    /// Adds a child to a node below the maximum level.
    pub fn add_child(&mut self, id: NodeId, side: Side) -> Result<NodeId> {
        let n = self.check(id)?;
        if n.level >= self.height {
            return invalid("cannot extend a node at full depth");
        }
        if let Some(c) = self.child_raw(id.0, side) {
            return Ok(NodeId(c));
        }
        let was_leaf = n.left.is_none() && n.right.is_none();
        let c = self.attach(id.0, side);
        if !was_leaf {
            self.leaves += 1;
        }
        Ok(NodeId(c))
    }

    /// Removes a leaf together with the chain of single-child ancestors above it.
    pub fn remove_leaf(&mut self, id: NodeId) -> Result<()> {
        self.check(id)?;
        if !self.is_leaf(id) {
            return Err(Error::NotALeaf);
        }
        let mut cur = id.0;
        loop {
            let parent = self.nodes[cur].parent;
            self.nodes[cur].alive = false;
            self.free.push(cur);
            match parent {
                None => {
                    self.root = None;
                    self.leaves = 0;
                    return Ok(());
                }
                Some(p) => {
                    let pn = &mut self.nodes[p];
                    if pn.left == Some(cur) {
                        pn.left = None;
                    } else {
                        pn.right = None;
                    }
                    if pn.left.is_some() || pn.right.is_some() {
                        self.leaves -= 1;
                        return Ok(());
                    }
                    cur = p;
                }
            }
        }
    }

    pub fn frequency_cone(&self, id: NodeId) -> Result<FrequencyCone> {
        let n = self.check(id)?;
        Ok(FrequencyCone { residue: n.label, level: n.level })
    }

    /// `(level, label)` of every node.
    pub fn node_set(&self) -> BTreeSet<(u32, u64)> {
        self.nodes.iter().filter(|n| n.alive).map(|n| (n.level, n.label)).collect()
    }

    /// Labels of the leaves at full depth.
    pub fn full_depth_labels(&self) -> Vec<u64> {
        self.leaves()
            .into_iter()
            .filter(|&id| self.level(id) == self.height)
            .map(|id| self.label(id))
            .collect()
    }

    /// Graphviz export. Node labels are the low `level` bits of the label,
    /// most significant bit first.
    pub fn to_dot(&self) -> String {
        let mut s = String::from("digraph splitting_tree {\n");
        let Some(r) = self.root else {
            s.push_str("}\n");
            return s;
        };
        let mut stack = vec![r];
        while let Some(i) = stack.pop() {
            let n = &self.nodes[i];
            let bits: String = (0..n.level)
                .rev()
                .map(|b| if (n.label >> b) & 1 == 1 { '1' } else { '0' })
                .collect();
            let shown = if bits.is_empty() { "root".to_string() } else { bits };
            let _ = writeln!(s, "  n{i} [label=\"{shown}\"];");
            for (c, tag) in [(n.right, "R"), (n.left, "L")] {
                if let Some(c) = c {
                    let _ = writeln!(s, "  n{i} -> n{c} [label=\"{tag}\"];");
                    stack.push(c);
                }
            }
        }
        s.push_str("}\n");
        s
    }

    /// `sum over leaves of 2^{-weight}`.
    pub fn kraft_sum(&self) -> f64 {
        self.leaves_with_weights().iter().map(|&(_, w)| (-(w as f64)).exp2()).sum()
    }
}

/// Splitting tree of a support given as frequency vectors.
pub fn build_tree(support: &[FreqVec], dims: Dims) -> Result<SplittingTree> {
    let flat = support.iter().map(|f| dims.flatten(&f.0)).collect::<Result<Vec<_>>>()?;
    SplittingTree::build(&flat, dims.height())
}
