//! CART decision trees (Gini impurity, binary threshold splits) and bagged forests.
//!
//! Split quality is compared in exact integer arithmetic so that ties are real
//! ties: the winner is the lowest feature index, then the lowest threshold.

use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::domain::{NUM_CLASSES, VECTOR_DIM};
use crate::error::{bail, Result};

/// Gini impurity `1 - Σ p_c²` of a class histogram.
pub fn gini(counts: &[u64]) -> Result<f64> {
    let total: u64 = counts.iter().sum();
    if total == 0 {
        bail!(Domain, "gini of an empty node");
    }
    let t = total as f64;
    Ok(1.0 - counts.iter().map(|&c| (c as f64 / t) * (c as f64 / t)).sum::<f64>())
}

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Leaf { counts: [u32; NUM_CLASSES] },
    Split { feature: usize, threshold: f64, left: usize, right: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TreeOptions {
    pub max_depth: usize,
    pub min_samples_split: usize,
    /// Candidate features per split; `None` (or ≥ the dimension) uses all.
    pub features_per_split: Option<usize>,
}

/// Node 0 is the root.
#[derive(Debug, Clone, PartialEq)]
pub struct DecisionTree {
    pub nodes: Vec<Node>,
}

fn argmax_lowest<T: PartialOrd + Copy>(xs: &[T]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate().skip(1) {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

/// `(SL·nR + SR·nL) / (nL·nR)` where S is the sum of squared class counts.
/// Larger is purer; equals `n - n·weighted_gini` up to the common factor.
#[derive(Debug, Clone, Copy)]
struct Purity {
    num: u128,
    den: u128,
}

impl Purity {
    fn beats(self, other: Purity) -> bool {
        self.num * other.den > other.num * self.den
    }
}

struct Candidate {
    feature: usize,
    threshold: f64,
    purity: Purity,
}

struct Builder<'a> {
    x: &'a [[f64; VECTOR_DIM]],
    y: &'a [u8],
    opts: TreeOptions,
    nodes: Vec<Node>,
}

impl Builder<'_> {
    fn counts(&self, idx: &[usize]) -> [u32; NUM_CLASSES] {
        let mut c = [0u32; NUM_CLASSES];
        for &i in idx {
            c[self.y[i] as usize] += 1;
        }
        c
    }

    fn best_on(&self, idx: &mut [usize], feature: usize, parent: &[u32; NUM_CLASSES], best: &mut Option<Candidate>) {
        let x = self.x;
        idx.sort_by(|&a, &b| x[a][feature].total_cmp(&x[b][feature]).then(a.cmp(&b)));
        let n = idx.len() as u128;
        let mut left = [0u128; NUM_CLASSES];
        let mut right: [u128; NUM_CLASSES] = core::array::from_fn(|c| parent[c] as u128);
        let mut sl: u128 = 0;
        let mut sr: u128 = right.iter().map(|c| c * c).sum();
        for i in 0..idx.len() - 1 {
            let c = self.y[idx[i]] as usize;
            sl += 2 * left[c] + 1;
            sr -= 2 * right[c] - 1;
            left[c] += 1;
            right[c] -= 1;
            let (a, b) = (x[idx[i]][feature], x[idx[i + 1]][feature]);
            if a == b {
                continue;
            }
            let nl = i as u128 + 1;
            let nr = n - nl;
            let purity = Purity { num: sl * nr + sr * nl, den: nl * nr };
            if best.as_ref().is_none_or(|b| purity.beats(b.purity)) {
                let mid = 0.5 * (a + b);
                let threshold = if mid < b { mid } else { a };
                *best = Some(Candidate { feature, threshold, purity });
            }
        }
    }

    fn search(&self, idx: &mut [usize], features: &[usize], parent: &[u32; NUM_CLASSES]) -> Option<Candidate> {
        let mut best = None;
        for &f in features {
            self.best_on(idx, f, parent, &mut best);
        }
        best
    }

    fn build(&mut self, idx: &mut [usize], depth: usize, rng: &mut ChaCha8Rng) -> usize {
        let counts = self.counts(idx);
        let me = self.nodes.len();
        self.nodes.push(Node::Leaf { counts });
        let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
        if pure || depth >= self.opts.max_depth || idx.len() < self.opts.min_samples_split.max(2) {
            return me;
        }
        let candidate = match self.opts.features_per_split.filter(|&m| m < VECTOR_DIM) {
            None => {
                let all: Vec<usize> = (0..VECTOR_DIM).collect();
                self.search(idx, &all, &counts)
            }
            Some(m) => {
                let mut order: Vec<usize> = (0..VECTOR_DIM).collect();
                for i in 0..m.max(1) {
                    let j = rng.random_range(i..VECTOR_DIM);
                    order.swap(i, j);
                }
                let (head, tail) = order.split_at_mut(m.max(1));
                head.sort_unstable();
                tail.sort_unstable();
                // Fall back to the unsampled features when the sample is constant.
                self.search(idx, head, &counts).or_else(|| self.search(idx, tail, &counts))
            }
        };
        let Some(Candidate { feature, threshold, .. }) = candidate else {
            return me;
        };
        let x = self.x;
        idx.sort_by(|&a, &b| {
            let (la, lb) = (x[a][feature] <= threshold, x[b][feature] <= threshold);
            lb.cmp(&la).then(a.cmp(&b))
        });
        let n_left = idx.iter().take_while(|&&i| x[i][feature] <= threshold).count();
        let (l, r) = idx.split_at_mut(n_left);
        let left = self.build(l, depth + 1, rng);
        let right = self.build(r, depth + 1, rng);
        self.nodes[me] = Node::Split { feature, threshold, left, right };
        me
    }
}

impl DecisionTree {
    /// Fits on the rows of `x` selected by `sample` (repeats allowed).
    pub fn fit_indices(
        x: &[[f64; VECTOR_DIM]],
        y: &[u8],
        sample: &[usize],
        opts: TreeOptions,
        rng: &mut ChaCha8Rng,
    ) -> DecisionTree {
        let mut b = Builder { x, y, opts, nodes: Vec::new() };
        let mut idx = sample.to_vec();
        if idx.is_empty() {
            return DecisionTree { nodes: vec![Node::Leaf { counts: [0; NUM_CLASSES] }] };
        }
        b.build(&mut idx, 0, rng);
        DecisionTree { nodes: b.nodes }
    }

    pub fn fit(x: &[[f64; VECTOR_DIM]], y: &[u8], opts: TreeOptions) -> DecisionTree {
        let all: Vec<usize> = (0..x.len()).collect();
        let opts = TreeOptions { features_per_split: None, ..opts };
        DecisionTree::fit_indices(x, y, &all, opts, &mut ChaCha8Rng::seed_from_u64(0))
    }

    pub fn leaf_counts(&self, row: &[f64; VECTOR_DIM]) -> &[u32; NUM_CLASSES] {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                Node::Leaf { counts } => return counts,
                Node::Split { feature, threshold, left, right } => {
                    at = if row[*feature] <= *threshold { *left } else { *right };
                }
            }
        }
    }

    /// Majority class of the reached leaf (lowest index on ties) and its class frequencies.
    pub fn predict(&self, row: &[f64; VECTOR_DIM]) -> (usize, [f64; NUM_CLASSES]) {
        let counts = self.leaf_counts(row);
        let total: u32 = counts.iter().sum();
        let scores = core::array::from_fn(|c| if total == 0 { 0.0 } else { counts[c] as f64 / total as f64 });
        (argmax_lowest(counts), scores)
    }

    /// Children must come after their parent, which rules out cycles.
    pub fn validate(&self) -> Result<()> {
        if self.nodes.is_empty() {
            bail!(Integrity, "tree has no nodes");
        }
        for (i, n) in self.nodes.iter().enumerate() {
            if let Node::Split { feature, threshold, left, right } = n {
                let ok = *feature < VECTOR_DIM
                    && threshold.is_finite()
                    && (i + 1..self.nodes.len()).contains(left)
                    && (i + 1..self.nodes.len()).contains(right);
                if !ok {
                    bail!(Integrity, "tree node {i} is malformed");
                }
            }
        }
        Ok(())
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], at: usize) -> usize {
            match &nodes[at] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
            }
        }
        walk(&self.nodes, 0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RandomForest {
    pub trees: Vec<DecisionTree>,
}

pub(crate) fn tree_rng(seed: u64, tree: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ tree as u64)
}

/// Bootstrap sample of tree `tree`; the same generator then drives feature sampling.
pub fn bootstrap_indices(n: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    (0..n).map(|_| rng.random_range(0..n)).collect()
}

impl RandomForest {
    pub fn fit(x: &[[f64; VECTOR_DIM]], y: &[u8], n_trees: usize, opts: TreeOptions, seed: u64) -> RandomForest {
        let one = |t: usize| {
            let mut rng = tree_rng(seed, t);
            let sample = bootstrap_indices(x.len(), &mut rng);
            DecisionTree::fit_indices(x, y, &sample, opts, &mut rng)
        };
        #[cfg(feature = "std")]
        let trees = {
            use rayon::prelude::*;
            (0..n_trees).into_par_iter().map(one).collect()
        };
        #[cfg(not(feature = "std"))]
        let trees = (0..n_trees).map(one).collect();
        RandomForest { trees }
    }

    /// Plurality of per-tree majority labels; scores are vote fractions.
    pub fn predict(&self, row: &[f64; VECTOR_DIM]) -> (usize, [f64; NUM_CLASSES]) {
        let mut votes = [0u32; NUM_CLASSES];
        for t in &self.trees {
            votes[argmax_lowest(t.leaf_counts(row))] += 1;
        }
        let n = self.trees.len().max(1) as f64;
        (argmax_lowest(&votes), core::array::from_fn(|c| votes[c] as f64 / n))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    const UNLIMITED: TreeOptions = TreeOptions { max_depth: usize::MAX, min_samples_split: 2, features_per_split: None };

    fn row(v: &[f64]) -> [f64; VECTOR_DIM] {
        let mut r = [0.0; VECTOR_DIM];
        r[..v.len()].copy_from_slice(v);
        r
    }

    #[test]
    fn gini_examples() {
        assert_eq!(gini(&[10, 0]).unwrap(), 0.0);
        assert_eq!(gini(&[5, 5]).unwrap(), 0.5);
        assert!((gini(&[3, 1]).unwrap() - (1.0 - (0.75f64 * 0.75 + 0.25 * 0.25))).abs() < 1e-15);
        assert!((gini(&[3, 1]).unwrap() - 0.375).abs() < 1e-15);
        assert!(gini(&[0, 0]).is_err());
    }

    /// Exhaustive enumeration of every (feature, midpoint) split, scored by weighted Gini.
    fn oracle_best_split(x: &[[f64; VECTOR_DIM]], y: &[u8]) -> (usize, f64, f64) {
        let mut best = (usize::MAX, f64::NAN, f64::INFINITY);
        for f in 0..VECTOR_DIM {
            let mut vals: Vec<f64> = x.iter().map(|r| r[f]).collect();
            vals.sort_by(f64::total_cmp);
            vals.dedup();
            for w in vals.windows(2) {
                let t = 0.5 * (w[0] + w[1]);
                let (mut l, mut r) = ([0u64; NUM_CLASSES], [0u64; NUM_CLASSES]);
                for (row, &c) in x.iter().zip(y) {
                    if row[f] <= t { l[c as usize] += 1 } else { r[c as usize] += 1 }
                }
                let (nl, nr) = (l.iter().sum::<u64>() as f64, r.iter().sum::<u64>() as f64);
                let g = (nl * gini(&l).unwrap() + nr * gini(&r).unwrap()) / (nl + nr);
                if g < best.2 - 1e-12 {
                    best = (f, t, g);
                }
            }
        }
        best
    }

    #[test]
    fn separable_toy_gives_depth_one_stump() {
        let a = [62.0, 70.0, 75.0, 78.0];
        let b = [85.0, 90.0, 99.0];
        let mut x = Vec::new();
        let mut y = Vec::new();
        for (i, &v) in a.iter().enumerate() {
            x.push(row(&[v, 120.0 + i as f64]));
            y.push(0);
        }
        for (i, &v) in b.iter().enumerate() {
            x.push(row(&[v, 121.0 + i as f64]));
            y.push(1);
        }
        let (of, ot, og) = oracle_best_split(&x, &y);
        assert_eq!((of, og), (0, 0.0));
        let t = DecisionTree::fit(&x, &y, UNLIMITED);
        assert_eq!(t.depth(), 1);
        match &t.nodes[0] {
            Node::Split { feature, threshold, .. } => {
                assert_eq!(*feature, 0);
                assert!(*threshold > 78.0 && *threshold < 85.0);
                assert_eq!(*threshold, ot);
            }
            n => panic!("expected split, got {n:?}"),
        }
        for (r, &c) in x.iter().zip(&y) {
            assert_eq!(t.predict(r).0, c as usize);
        }
    }

    #[test]
    fn root_split_matches_exhaustive_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x: Vec<_> = (0..60)
            .map(|_| row(&[rng.random_range(0..6) as f64, rng.random_range(0..4) as f64, rng.random::<f64>()]))
            .collect();
        let y: Vec<u8> = x.iter().map(|r| ((r[0] > 2.0) as u8) + ((r[1] > 1.0) as u8)).collect();
        let (of, ot, _) = oracle_best_split(&x, &y);
        let t = DecisionTree::fit(&x, &y, TreeOptions { max_depth: 1, ..UNLIMITED });
        match &t.nodes[0] {
            Node::Split { feature, threshold, .. } => assert_eq!((*feature, *threshold), (of, ot)),
            n => panic!("expected split, got {n:?}"),
        }
    }

    #[test]
    fn ties_prefer_lowest_feature() {
        // Columns 0 and 1 are identical, so both give the same split.
        let x: Vec<_> = (0..6).map(|i| row(&[i as f64, i as f64])).collect();
        let y = [0, 0, 0, 1, 1, 1];
        let t = DecisionTree::fit(&x, &y, UNLIMITED);
        assert!(matches!(t.nodes[0], Node::Split { feature: 0, .. }));
    }

    #[test]
    fn xor_needs_zero_gain_split() {
        let x = [row(&[0.0, 0.0]), row(&[0.0, 1.0]), row(&[1.0, 0.0]), row(&[1.0, 1.0])];
        let y = [0, 1, 1, 0];
        let t = DecisionTree::fit(&x, &y, UNLIMITED);
        for (r, &c) in x.iter().zip(&y) {
            assert_eq!(t.predict(r).0, c as usize);
        }
    }

    #[test]
    fn depth_limit_respected() {
        let x: Vec<_> = (0..64).map(|i| row(&[i as f64])).collect();
        let y: Vec<u8> = (0..64).map(|i| (i % 2) as u8).collect();
        let t = DecisionTree::fit(&x, &y, TreeOptions { max_depth: 3, ..UNLIMITED });
        assert!(t.depth() <= 3);
        let (_, scores) = t.predict(&x[0]);
        assert!((scores.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn single_unsubsampled_tree_forest_equals_tree_on_bootstrap() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x: Vec<_> = (0..80).map(|_| row(&[rng.random(), rng.random(), rng.random()])).collect();
        let y: Vec<u8> = x.iter().map(|r| ((r[0] + r[1] > 1.0) as u8) * 2 + (r[2] > 0.5) as u8).collect();
        let opts = TreeOptions { max_depth: 16, min_samples_split: 2, features_per_split: Some(VECTOR_DIM) };
        let forest = RandomForest::fit(&x, &y, 1, opts, 99);
        let sample = bootstrap_indices(x.len(), &mut tree_rng(99, 0));
        let mut dummy = ChaCha8Rng::seed_from_u64(0);
        let tree = DecisionTree::fit_indices(&x, &y, &sample, TreeOptions { features_per_split: None, ..opts }, &mut dummy);
        assert_eq!(forest.trees[0], tree);
    }

    #[test]
    fn forest_is_deterministic() {
        let x: Vec<_> = (0..50).map(|i| row(&[i as f64, (i * 7 % 13) as f64])).collect();
        let y: Vec<u8> = (0..50).map(|i| (i % 3) as u8).collect();
        let opts = TreeOptions { max_depth: 8, min_samples_split: 2, features_per_split: Some(1) };
        assert_eq!(RandomForest::fit(&x, &y, 7, opts, 3), RandomForest::fit(&x, &y, 7, opts, 3));
    }

    proptest! {
        #[test]
        fn unlimited_tree_fits_consistent_data(
            pts in proptest::collection::btree_map((0u8..20, 0u8..20, 0u8..5), 0u8..15, 1..60)
        ) {
            let x: Vec<_> = pts.keys().map(|&(a, b, c)| row(&[a as f64, b as f64, c as f64])).collect();
            let y: Vec<u8> = pts.values().copied().collect();
            let t = DecisionTree::fit(&x, &y, UNLIMITED);
            for (r, &c) in x.iter().zip(&y) {
                prop_assert_eq!(t.predict(r).0, c as usize);
            }
        }
    }
}
