use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::domain::{NUM_CLASSES, VECTOR_DIM};

/// Squared Euclidean distance, accumulated in index order.
pub fn squared_distance(a: &[f64; VECTOR_DIM], b: &[f64; VECTOR_DIM]) -> f64 {
    let mut s = 0.0;
    for j in 0..VECTOR_DIM {
        let d = a[j] - b[j];
        s += d * d;
    }
    s
}

/// Neighbour ordering key: distance, then class index, then training index.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub d2: f64,
    pub label: u8,
    pub index: usize,
}

impl Neighbor {
    fn cmp_key(&self, other: &Self) -> Ordering {
        self.d2.total_cmp(&other.d2).then(self.label.cmp(&other.label)).then(self.index.cmp(&other.index))
    }
}

#[derive(Debug, Clone, PartialEq)]
struct KdNode {
    point: usize,
    dim: usize,
    left: Option<usize>,
    right: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
struct KdTree {
    nodes: Vec<KdNode>,
    root: Option<usize>,
}

impl KdTree {
    fn build(points: &[[f64; VECTOR_DIM]]) -> KdTree {
        let mut idx: Vec<usize> = (0..points.len()).collect();
        let mut tree = KdTree { nodes: Vec::with_capacity(points.len()), root: None };
        tree.root = tree.build_rec(points, &mut idx);
        tree
    }

    fn build_rec(&mut self, points: &[[f64; VECTOR_DIM]], idx: &mut [usize]) -> Option<usize> {
        if idx.is_empty() {
            return None;
        }
        let mut dim = 0;
        let mut widest = -1.0;
        for j in 0..VECTOR_DIM {
            let (lo, hi) = idx.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &i| {
                (lo.min(points[i][j]), hi.max(points[i][j]))
            });
            if hi - lo > widest {
                widest = hi - lo;
                dim = j;
            }
        }
        let mid = idx.len() / 2;
        idx.select_nth_unstable_by(mid, |&a, &b| points[a][dim].total_cmp(&points[b][dim]).then(a.cmp(&b)));
        let me = self.nodes.len();
        self.nodes.push(KdNode { point: idx[mid], dim, left: None, right: None });
        let (l, r) = idx.split_at_mut(mid);
        let left = self.build_rec(points, l);
        let right = self.build_rec(points, &mut r[1..]);
        self.nodes[me].left = left;
        self.nodes[me].right = right;
        Some(me)
    }
}

/// Sorted list of the best `k` neighbours seen so far.
struct Best {
    k: usize,
    items: Vec<Neighbor>,
}

impl Best {
    fn offer(&mut self, n: Neighbor) {
        if self.items.len() == self.k && n.cmp_key(self.items.last().unwrap()) != Ordering::Less {
            return;
        }
        let at = self.items.partition_point(|m| m.cmp_key(&n) == Ordering::Less);
        self.items.insert(at, n);
        self.items.truncate(self.k);
    }

    fn bound(&self) -> f64 {
        if self.items.len() < self.k { f64::INFINITY } else { self.items.last().unwrap().d2 }
    }
}

/// k-nearest-neighbour classifier over standardized vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct Knn {
    pub k: usize,
    pub points: Vec<[f64; VECTOR_DIM]>,
    pub labels: Vec<u8>,
    tree: KdTree,
}

impl Knn {
    pub fn new(k: usize, points: Vec<[f64; VECTOR_DIM]>, labels: Vec<u8>) -> Knn {
        assert_eq!(points.len(), labels.len());
        let tree = KdTree::build(&points);
        Knn { k, points, labels, tree }
    }

    fn neighbor(&self, q: &[f64; VECTOR_DIM], i: usize) -> Neighbor {
        Neighbor { d2: squared_distance(q, &self.points[i]), label: self.labels[i], index: i }
    }

    pub fn neighbors(&self, q: &[f64; VECTOR_DIM]) -> Vec<Neighbor> {
        let mut best = Best { k: self.k.min(self.points.len()), items: Vec::with_capacity(self.k + 1) };
        if best.k > 0 {
            self.search(self.tree.root, q, &mut best);
        }
        best.items
    }

    fn search(&self, at: Option<usize>, q: &[f64; VECTOR_DIM], best: &mut Best) {
        let Some(at) = at else { return };
        let node = &self.tree.nodes[at];
        best.offer(self.neighbor(q, node.point));
        let diff = q[node.dim] - self.points[node.point][node.dim];
        let (near, far) = if diff <= 0.0 { (node.left, node.right) } else { (node.right, node.left) };
        self.search(near, q, best);
        if diff * diff <= best.bound() {
            self.search(far, q, best);
        }
    }

    /// Exhaustive scan with the same distance and ordering.
    pub fn neighbors_brute_force(&self, q: &[f64; VECTOR_DIM]) -> Vec<Neighbor> {
        let mut all: Vec<Neighbor> = (0..self.points.len()).map(|i| self.neighbor(q, i)).collect();
        let k = self.k.min(all.len());
        if k == 0 {
            return Vec::new();
        }
        if k < all.len() {
            all.select_nth_unstable_by(k - 1, Neighbor::cmp_key);
        }
        all.truncate(k);
        all.sort_by(Neighbor::cmp_key);
        all
    }

    /// Majority vote; ties go to the smaller summed distance, then the lower class.
    pub fn vote(neighbors: &[Neighbor]) -> (usize, [f64; NUM_CLASSES]) {
        let mut counts = [0u32; NUM_CLASSES];
        let mut dist = [0.0f64; NUM_CLASSES];
        for n in neighbors {
            counts[n.label as usize] += 1;
            dist[n.label as usize] += libm::sqrt(n.d2);
        }
        let mut best = 0;
        for c in 1..NUM_CLASSES {
            if counts[c] > counts[best] || (counts[c] == counts[best] && counts[c] > 0 && dist[c] < dist[best]) {
                best = c;
            }
        }
        let k = neighbors.len().max(1) as f64;
        (best, core::array::from_fn(|c| counts[c] as f64 / k))
    }

    pub fn predict(&self, q: &[f64; VECTOR_DIM]) -> (usize, [f64; NUM_CLASSES]) {
        Knn::vote(&self.neighbors(q))
    }

    pub fn predict_brute_force(&self, q: &[f64; VECTOR_DIM]) -> (usize, [f64; NUM_CLASSES]) {
        Knn::vote(&self.neighbors_brute_force(q))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn p1(x: f64) -> [f64; VECTOR_DIM] {
        let mut r = [0.0; VECTOR_DIM];
        r[0] = x;
        r
    }

    #[test]
    fn one_dimensional_k3() {
        let pts = [1.0, 2.0, 3.0, 10.0, 11.0].map(p1).to_vec();
        let knn = Knn::new(3, pts, vec![0, 0, 0, 1, 1]);
        assert_eq!(knn.predict(&p1(2.5)).0, 0);
        assert_eq!(knn.predict(&p1(10.5)).0, 1);
        let (_, s) = knn.predict(&p1(10.5));
        assert!((s[1] - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn k1_reproduces_training_labels() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pts: Vec<_> = (0..200).map(|_| core::array::from_fn(|_| rng.random::<f64>())).collect();
        let labels: Vec<u8> = (0..200).map(|i| (i % 15) as u8).collect();
        let knn = Knn::new(1, pts.clone(), labels.clone());
        for (p, &l) in pts.iter().zip(&labels) {
            assert_eq!(knn.predict(p).0, l as usize);
        }
    }

    #[test]
    fn tie_goes_to_smaller_summed_distance() {
        // Two votes each; class 1 is nearer in total.
        let pts = [-1.0, -1.5, 0.5, 0.6].map(p1).to_vec();
        let knn = Knn::new(4, pts, vec![0, 0, 1, 1]);
        assert_eq!(knn.predict(&p1(0.0)).0, 1);
        let exact = [-1.0, 1.0].map(p1).to_vec();
        assert_eq!(Knn::new(2, exact, vec![3, 2]).predict(&p1(0.0)).0, 2);
    }

    #[test]
    fn kd_tree_matches_brute_force_with_duplicates() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let pts: Vec<_> = (0..500)
            .map(|_| core::array::from_fn(|_| rng.random_range(0..3) as f64))
            .collect();
        let labels: Vec<u8> = (0..500).map(|_| rng.random_range(0..15)).collect();
        let knn = Knn::new(5, pts, labels);
        for _ in 0..100 {
            let q = core::array::from_fn(|_| rng.random_range(0..3) as f64);
            assert_eq!(knn.neighbors(&q), knn.neighbors_brute_force(&q));
        }
    }

    proptest! {
        #[test]
        fn power_of_two_scaling_preserves_predictions(
            seed in 0u64..1000, exp in -8i32..8
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let pts: Vec<[f64; VECTOR_DIM]> = (0..60).map(|_| core::array::from_fn(|_| rng.random::<f64>())).collect();
            let labels: Vec<u8> = (0..60).map(|_| rng.random_range(0..4)).collect();
            let queries: Vec<[f64; VECTOR_DIM]> = (0..10).map(|_| core::array::from_fn(|_| rng.random::<f64>())).collect();
            let s = libm::ldexp(1.0, exp);
            let scale = |p: &[f64; VECTOR_DIM]| p.map(|v| v * s);
            let a = Knn::new(5, pts.clone(), labels.clone());
            let b = Knn::new(5, pts.iter().map(scale).collect(), labels);
            for q in &queries {
                prop_assert_eq!(a.predict(q).0, b.predict(&scale(q)).0);
            }
        }
    }
}
