//! Vertex selection: fixed-step sampling and closed-curve Douglas-Peucker.

use crate::error::{Error, Result};
use crate::geometry::{point_segment_distance, Point2, Polygon};

/// Picks `n` points at a constant index step of `points.len() / n`:
/// vertex `k` is `points[floor(k * len / n)]`.
pub fn fixed_step_sample(points: &[Point2], n: usize) -> Result<Polygon> {
    if n < 3 {
        return Err(Error::InvalidConfig(format!("vertex count {n} < 3")));
    }
    if points.len() < n {
        return Err(Error::TooFewPoints { needed: n, got: points.len() });
    }
    Polygon::new(fixed_step_indices(points.len(), n).map(|i| points[i]).collect())
}

pub fn fixed_step_indices(len: usize, n: usize) -> impl Iterator<Item = usize> {
    (0..n).map(move |k| k * len / n)
}

/// Indices of the two mutually farthest points; the first maximal pair in
/// index order wins ties.
pub fn farthest_pair(points: &[Point2]) -> (usize, usize) {
    let mut best = (0, 0);
    let mut best_d = -1.0;
    for i in 0..points.len() {
        for j in (i + 1)..points.len() {
            let dx = points[i].x - points[j].x;
            let dy = points[i].y - points[j].y;
            let d = dx * dx + dy * dy;
            if d > best_d {
                best_d = d;
                best = (i, j);
            }
        }
    }
    best
}

/// The Douglas-Peucker recursion of a closed curve, resolved for every
/// tolerance at once.
///
/// The split points chosen by the recursion do not depend on epsilon, only
/// whether a split happens does. So each point gets the largest epsilon at
/// which it is still kept: the smaller of its own chord distance and the
/// threshold of the segment it splits. Simplifying at `eps` then keeps exactly
/// the points whose threshold exceeds `eps`.
#[derive(Debug, Clone)]
pub struct RdpHierarchy {
    thresholds: Vec<f64>,
}

impl RdpHierarchy {
    pub fn new(points: &[Point2]) -> Self {
        let n = points.len();
        let mut thresholds = vec![f64::NEG_INFINITY; n];
        if n == 0 {
            return Self { thresholds };
        }
        let (a, b) = farthest_pair(points);
        thresholds[a] = f64::INFINITY;
        if a == b || points[a] == points[b] {
            return Self { thresholds };
        }
        thresholds[b] = f64::INFINITY;
        let forward: Vec<usize> = (a..=b).collect();
        let backward: Vec<usize> = (b..n).chain(0..=a).collect();
        for seq in [forward, backward] {
            let mut stack = vec![(0usize, seq.len() - 1, f64::INFINITY)];
            while let Some((lo, hi, parent)) = stack.pop() {
                if hi <= lo + 1 {
                    continue;
                }
                let (p, q) = (points[seq[lo]], points[seq[hi]]);
                let mut split = lo + 1;
                let mut dmax = -1.0;
                for (k, &idx) in seq.iter().enumerate().take(hi).skip(lo + 1) {
                    let d = point_segment_distance(points[idx], p, q);
                    if d > dmax {
                        dmax = d;
                        split = k;
                    }
                }
                let t = dmax.min(parent);
                thresholds[seq[split]] = t;
                stack.push((lo, split, t));
                stack.push((split, hi, t));
            }
        }
        Self { thresholds }
    }

    pub fn count(&self, epsilon: f64) -> usize {
        self.thresholds.iter().filter(|&&t| t > epsilon).count()
    }

    /// Kept indices in ascending order.
    pub fn indices(&self, epsilon: f64) -> Vec<usize> {
        (0..self.thresholds.len()).filter(|&i| self.thresholds[i] > epsilon).collect()
    }
}

/// Douglas-Peucker on a closed curve: split at the two mutually farthest
/// points and simplify each open half. Output keeps input order.
pub fn rdp_simplify(points: &[Point2], epsilon: f64) -> Vec<Point2> {
    RdpHierarchy::new(points)
        .indices(epsilon)
        .into_iter()
        .map(|i| points[i])
        .collect()
}
