//! Static kd-tree for exact nearest-neighbor queries.

use crate::geometry::Vec3;

const LEAF_SIZE: usize = 8;

/// Balanced kd-tree over a fixed point set, stored implicitly: every range
/// `[lo, hi)` of `order` is split at its midpoint along `axis[mid]`.
///
/// Queries are exact. Among equidistant points the lowest input index wins,
/// which keeps downstream feature assignment deterministic.
pub struct KdTree {
    points: Vec<Vec3>,
    order: Vec<u32>,
    axis: Vec<u8>,
}

impl KdTree {
    pub fn new(points: Vec<Vec3>) -> Self {
        let n = points.len();
        let mut order: Vec<u32> = (0..n as u32).collect();
        let mut axis = vec![0u8; n];
        build(&points, &mut order, &mut axis, 0, n);
        KdTree { points, order, axis }
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

    /// Index and squared distance of the nearest point, or `None` when empty.
    pub fn nearest(&self, q: &Vec3) -> Option<(usize, f64)> {
        if self.points.is_empty() {
            return None;
        }
        let mut best = (u32::MAX, f64::INFINITY);
        self.search(q, 0, self.points.len(), &mut best);
        Some((best.0 as usize, best.1))
    }

    fn consider(&self, q: &Vec3, i: u32, best: &mut (u32, f64)) {
        let d2 = (self.points[i as usize] - q).norm_squared();
        if d2 < best.1 || (d2 == best.1 && i < best.0) {
            *best = (i, d2);
        }
    }

    fn search(&self, q: &Vec3, lo: usize, hi: usize, best: &mut (u32, f64)) {
        if hi - lo <= LEAF_SIZE {
            for &i in &self.order[lo..hi] {
                self.consider(q, i, best);
            }
            return;
        }
        let mid = (lo + hi) / 2;
        let idx = self.order[mid];
        let ax = self.axis[mid] as usize;
        let diff = q[ax] - self.points[idx as usize][ax];
        self.consider(q, idx, best);
        let (near, far) = if diff < 0.0 {
            ((lo, mid), (mid + 1, hi))
        } else {
            ((mid + 1, hi), (lo, mid))
        };
        self.search(q, near.0, near.1, best);
        // `<=` so an equidistant point with a lower index is still visited.
        if diff * diff <= best.1 {
            self.search(q, far.0, far.1, best);
        }
    }
}

fn build(points: &[Vec3], order: &mut [u32], axis: &mut [u8], lo: usize, hi: usize) {
    if hi - lo <= LEAF_SIZE {
        return;
    }
    let mut min = Vec3::repeat(f64::INFINITY);
    let mut max = Vec3::repeat(f64::NEG_INFINITY);
    for &i in &order[lo..hi] {
        min = min.inf(&points[i as usize]);
        max = max.sup(&points[i as usize]);
    }
    let ax = (max - min).imax();
    let mid = (lo + hi) / 2;
    order[lo..hi].select_nth_unstable_by(mid - lo, |&a, &b| {
        points[a as usize][ax]
            .total_cmp(&points[b as usize][ax])
            .then(a.cmp(&b))
    });
    axis[mid] = ax as u8;
    build(points, order, axis, lo, mid);
    build(points, order, axis, mid + 1, hi);
}

/// Exhaustive nearest neighbor with the same tie rule as [`KdTree`].
pub fn nearest_brute_force(points: &[Vec3], q: &Vec3) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (i, p) in points.iter().enumerate() {
        let d2 = (p - q).norm_squared();
        if best.is_none_or(|(_, b)| d2 < b) {
            best = Some((i, d2));
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn arb_points(max: usize) -> impl Strategy<Value = Vec<Vec3>> {
        prop::collection::vec((-10i32..10, -10i32..10, -10i32..10), 1..max)
            .prop_map(|v| v.into_iter().map(|(x, y, z)| Vec3::new(x as f64, y as f64, z as f64) * 0.5).collect())
    }

    proptest! {
        // Integer-ish coordinates produce many exact ties.
        #[test]
        fn matches_brute_force_including_ties(points in arb_points(300), qs in arb_points(20)) {
            let tree = KdTree::new(points.clone());
            for q in &qs {
                prop_assert_eq!(tree.nearest(q), nearest_brute_force(&points, q));
            }
        }
    }

    #[test]
    fn empty_tree() {
        assert!(KdTree::new(vec![]).nearest(&Vec3::zeros()).is_none());
    }
}
