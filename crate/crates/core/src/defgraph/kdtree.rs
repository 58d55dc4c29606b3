use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::math::Vec3;

/// Static 3-d tree with median splits, cycling x, y, z by depth.
///
/// Stored implicitly: `order` is a permutation of point indices laid out so
/// that the subtree over `order[lo..hi]` has its splitting point at the
/// middle position.
#[derive(Debug, Clone, PartialEq)]
pub struct KdTree {
    points: Vec<Vec3>,
    order: Vec<usize>,
}

/// Max-heap entry ordered by `(dist², index)` so the worst candidate (larger
/// distance, then larger index) sits on top.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Candidate {
    dist2: f64,
    index: usize,
}

impl Eq for Candidate {}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.dist2.total_cmp(&other.dist2).then(self.index.cmp(&other.index))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl KdTree {
    pub fn build(points: Vec<Vec3>) -> Self {
        let mut order: Vec<usize> = (0..points.len()).collect();
        split(&points, &mut order, 0);
        Self { points, order }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Vec3] {
        &self.points
    }

    /// The `min(k, n)` points nearest to `query` as `(index, distance)`,
    /// ascending by distance and then by index.
    pub fn knn(&self, query: &Vec3, k: usize) -> Vec<(usize, f64)> {
        let k = k.min(self.points.len());
        if k == 0 {
            return Vec::new();
        }
        let mut heap = BinaryHeap::with_capacity(k + 1);
        self.search(query, k, 0, self.order.len(), 0, &mut heap);
        heap.into_sorted_vec().into_iter().map(|c| (c.index, c.dist2.sqrt())).collect()
    }

    fn search(&self, query: &Vec3, k: usize, lo: usize, hi: usize, depth: usize, heap: &mut BinaryHeap<Candidate>) {
        if lo >= hi {
            return;
        }
        let mid = lo + (hi - lo) / 2;
        let index = self.order[mid];
        let p = &self.points[index];
        let cand = Candidate { dist2: (p - query).norm_squared(), index };
        if heap.len() < k {
            heap.push(cand);
        } else if cand < *heap.peek().unwrap() {
            heap.pop();
            heap.push(cand);
        }
        let axis = depth % 3;
        let diff = query[axis] - p[axis];
        let (near, far) = if diff < 0.0 { ((lo, mid), (mid + 1, hi)) } else { ((mid + 1, hi), (lo, mid)) };
        self.search(query, k, near.0, near.1, depth + 1, heap);
        // Equal distance still has to be explored: a tie may have a smaller index.
        if heap.len() < k || diff * diff <= heap.peek().unwrap().dist2 {
            self.search(query, k, far.0, far.1, depth + 1, heap);
        }
    }
}

fn split(points: &[Vec3], order: &mut [usize], depth: usize) {
    if order.len() <= 1 {
        return;
    }
    let axis = depth % 3;
    let mid = order.len() / 2;
    order.select_nth_unstable_by(mid, |&a, &b| points[a][axis].total_cmp(&points[b][axis]).then(a.cmp(&b)));
    let (left, right) = order.split_at_mut(mid);
    split(points, left, depth + 1);
    split(points, &mut right[1..], depth + 1);
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn brute_force(points: &[Vec3], q: &Vec3, k: usize) -> Vec<(usize, f64)> {
        let mut all: Vec<(f64, usize)> = points.iter().enumerate().map(|(i, p)| ((p - q).norm_squared(), i)).collect();
        all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        all.into_iter().take(k).map(|(d, i)| (i, d.sqrt())).collect()
    }

    #[test]
    fn stored_point_comes_first() {
        let pts = vec![Vec3::new(0.0, 0.0, 0.0), Vec3::new(1.0, 2.0, 3.0), Vec3::new(-1.0, 0.5, 2.0)];
        let tree = KdTree::build(pts.clone());
        assert_eq!(tree.knn(&pts[2], 1), vec![(2, 0.0)]);
        assert_eq!(tree.knn(&pts[1], 10).len(), 3);
    }

    #[test]
    fn matches_brute_force_on_random_cloud() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let pts: Vec<Vec3> = (0..10_000)
            .map(|_| Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        let tree = KdTree::build(pts.clone());
        for _ in 0..100 {
            let q = Vec3::new(rng.random_range(-1.2..1.2), rng.random_range(-1.2..1.2), rng.random_range(-1.2..1.2));
            assert_eq!(tree.knn(&q, 4), brute_force(&pts, &q, 4));
        }
    }

    #[test]
    fn ties_prefer_lower_index() {
        // Grid points: many exact distance ties.
        let pts: Vec<Vec3> = (0..125).map(|i| Vec3::new((i % 5) as f64, ((i / 5) % 5) as f64, (i / 25) as f64)).collect();
        let tree = KdTree::build(pts.clone());
        for q in [Vec3::new(2.0, 2.0, 2.0), Vec3::new(0.5, 0.5, 0.5), Vec3::new(1.5, 3.0, 0.0)] {
            for k in [1, 4, 7, 30] {
                assert_eq!(tree.knn(&q, k), brute_force(&pts, &q, k));
            }
        }
    }

    proptest! {
        #[test]
        fn knn_equals_brute_force(
            coords in prop::collection::vec((-5i32..5, -5i32..5, -5i32..5), 1..60),
            q in (-6.0f64..6.0, -6.0f64..6.0, -6.0f64..6.0),
            k in 1usize..10,
        ) {
            let pts: Vec<Vec3> = coords.iter().map(|&(x, y, z)| Vec3::new(x as f64, y as f64, z as f64)).collect();
            let q = Vec3::new(q.0, q.1, q.2);
            let tree = KdTree::build(pts.clone());
            let got = tree.knn(&q, k);
            prop_assert_eq!(&got, &brute_force(&pts, &q, k));
            prop_assert!(got.windows(2).all(|w| w[0].1 <= w[1].1));
        }
    }
}
