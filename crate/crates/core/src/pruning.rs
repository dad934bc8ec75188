//! Symbolic simulation of the threshold pruning process on splitting trees.
//!
//! A round removes every leaf whose weight, measured against the tree at the
//! start of the round, is at most `tau`. The number of rounds needed to empty
//! the tree lower-bounds the number of adaptive peeling iterations.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::rng;
use crate::tree::{Side, SplittingTree};

/// `{f < 2^log_n : popcount(f) <= c}` in increasing order.
pub fn hamming_ball(log_n: u32, c: u32) -> Result<Vec<u64>> {
    if log_n > 30 || c > log_n {
        return invalid(format!("need c <= log_n <= 30, got c={c}, log_n={log_n}"));
    }
    Ok((0..1u64 << log_n).filter(|f| f.count_ones() <= c).collect())
}

/// `sum_{j <= c} C(log_n, j)`.
pub fn hamming_ball_size(log_n: u32, c: u32) -> u128 {
    let mut total = 0u128;
    let mut binom = 1u128;
    for j in 0..=c.min(log_n) {
        total += binom;
        binom = binom * (log_n - j) as u128 / (j + 1) as u128;
    }
    total
}

/// `T_c^n` built node by node, without enumerating `[2^log_n]`.
pub fn build_hamming_tree(log_n: u32, c: u32) -> Result<SplittingTree> {
    if log_n > 64 || c > log_n {
        return invalid(format!("need c <= log_n <= 64, got c={c}, log_n={log_n}"));
    }
    if hamming_ball_size(log_n, c) > 1 << 26 {
        return invalid("Hamming tree too large to build");
    }
    let mut t = SplittingTree::root_only(log_n);
    let root = t.root().expect("root");
    let mut stack = vec![(root, 0u32)];
    while let Some((v, ones)) = stack.pop() {
        if t.level(v) == log_n {
            continue;
        }
        if ones < c {
            let l = t.add_child(v, Side::Left)?;
            stack.push((l, ones + 1));
        }
        let r = t.add_child(v, Side::Right)?;
        stack.push((r, ones));
    }
    Ok(t)
}

/// Order in which the leaves collected in one round are removed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum RemovalOrder {
    Ascending,
    Descending,
    Shuffled(u64),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PruneTrace {
    pub rounds: usize,
    pub per_round_removals: Vec<usize>,
}

/// Runs the pruning process with leaves removed in ascending label order.
pub fn prune(tree: &SplittingTree, tau: u32) -> Result<PruneTrace> {
    prune_with_order(tree, tau, RemovalOrder::Ascending)
}

pub fn prune_with_order(tree: &SplittingTree, tau: u32, order: RemovalOrder) -> Result<PruneTrace> {
    let mut t = tree.clone();
    let mut per_round = Vec::new();
    let mut shuffle = match order {
        RemovalOrder::Shuffled(seed) => Some(rng::stream(seed, 5)),
        _ => None,
    };
    while !t.is_empty() {
        let mut batch: Vec<_> =
            t.leaves_with_weights().into_iter().filter(|&(_, w)| w <= tau).map(|(id, _)| id).collect();
        if batch.is_empty() {
            return Err(Error::PruningStalled { tau });
        }
        match order {
            RemovalOrder::Ascending => {}
            RemovalOrder::Descending => batch.reverse(),
            RemovalOrder::Shuffled(_) => batch.shuffle(shuffle.as_mut().expect("rng")),
        }
        for &id in &batch {
            t.remove_leaf(id)?;
        }
        per_round.push(batch.len());
    }
    Ok(PruneTrace { rounds: per_round.len(), per_round_removals: per_round })
}

/// `log_n^c / (c! tau^c)`.
pub fn lower_bound(log_n: u32, c: u32, tau: u32) -> f64 {
    let fact: f64 = (1..=c).map(f64::from).product();
    (log_n as f64).powi(c as i32) / (fact * (tau as f64).powi(c as i32))
}

/// Tree on a random subset of the leaves of `tree`, each kept with probability `keep`.
pub fn random_subtree<R: Rng>(tree: &SplittingTree, keep: f64, rng: &mut R) -> Result<SplittingTree> {
    let labels = tree.full_depth_labels();
    let mut chosen: Vec<u64> = labels.iter().copied().filter(|_| rng.gen::<f64>() < keep).collect();
    if chosen.is_empty() && !labels.is_empty() {
        chosen.push(labels[rng.gen_range(0..labels.len())]);
    }
    SplittingTree::build(&chosen, tree.height())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LowerBoundCheck {
    pub log_n: u32,
    pub c: u32,
    pub tau: u32,
    pub leaves: usize,
    pub rounds: usize,
    pub bound: f64,
    pub holds: bool,
    /// Every sampled random subtree needed at most as many rounds.
    pub monotone: bool,
}

const SPOT_SUBTREES: usize = 2;

/// Simulates `D(n, c, tau)` on `T_c^n` and compares it with the lower bound.
pub fn verify_lower_bound(log_n: u32, c: u32, tau: u32) -> Result<LowerBoundCheck> {
    let tree = build_hamming_tree(log_n, c)?;
    let rounds = prune(&tree, tau)?.rounds;
    let bound = lower_bound(log_n, c, tau);
    let seed = rng::mix(rng::mix(log_n as u64, c as u64), tau as u64);
    let mut gen = rng::stream(seed, 13);
    let mut monotone = true;
    for _ in 0..SPOT_SUBTREES {
        let sub = random_subtree(&tree, 0.5, &mut gen)?;
        monotone &= prune(&sub, tau)?.rounds <= rounds;
    }
    Ok(LowerBoundCheck {
        log_n,
        c,
        tau,
        leaves: tree.leaf_count(),
        rounds,
        bound,
        holds: rounds as f64 >= bound,
        monotone,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fig5_ball() {
        let s = hamming_ball(5, 2).unwrap();
        assert_eq!(s, vec![0, 1, 2, 3, 4, 5, 6, 8, 9, 10, 12, 16, 17, 18, 20, 24]);
        assert_eq!(hamming_ball(4, 0).unwrap(), vec![0]);
        assert_eq!(hamming_ball(3, 3).unwrap().len(), 8);
        assert!(hamming_ball(31, 1).is_err());
    }

    #[test]
    fn hamming_tree_matches_build() {
        for (l, c) in [(5, 2), (6, 0), (6, 6), (8, 3)] {
            let direct = build_hamming_tree(l, c).unwrap();
            let built = SplittingTree::build(&hamming_ball(l, c).unwrap(), l).unwrap();
            assert_eq!(direct, built);
        }
    }

    #[test]
    fn ball_sizes() {
        assert_eq!(hamming_ball_size(64, 3), 43745);
        assert_eq!(hamming_ball_size(5, 2), 16);
        assert_eq!(build_hamming_tree(64, 0).unwrap().leaf_count(), 1);
    }

    #[test]
    fn single_round_cases() {
        let full = SplittingTree::build(&(0..16).collect::<Vec<_>>(), 4).unwrap();
        assert_eq!(prune(&full, 4).unwrap().rounds, 1);
        let path = build_hamming_tree(20, 0).unwrap();
        assert_eq!(prune(&path, 0).unwrap().rounds, 1);
    }

    #[test]
    fn stalls_below_min_weight() {
        let full = SplittingTree::build(&(0..16).collect::<Vec<_>>(), 4).unwrap();
        assert!(matches!(prune(&full, 3), Err(Error::PruningStalled { tau: 3 })));
    }

    #[test]
    fn removals_sum_to_leaves() {
        let t = build_hamming_tree(12, 2).unwrap();
        let tr = prune(&t, 3).unwrap();
        assert_eq!(tr.per_round_removals.iter().sum::<usize>(), t.leaf_count());
    }

    #[test]
    fn verify_examples() {
        let a = verify_lower_bound(5, 0, 3).unwrap();
        assert_eq!((a.rounds, a.bound, a.holds), (1, 1.0, true));
        let b = verify_lower_bound(5, 2, 4).unwrap();
        assert!((b.bound - 25.0 / 32.0).abs() < 1e-12 && b.holds);
    }
}
