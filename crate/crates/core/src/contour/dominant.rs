//! Parameter-free dominant point detection on closed digital curves.
//!
//! Each point gets its own region of support from the chord-length and
//! chord-distance rules, its significance is the k-cosine over that region,
//! and points that are not local maxima within half their region are
//! suppressed. Points lying exactly on their support chord carry no curvature
//! and are dropped.

use super::ContourChain;
use crate::geometry::Point2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Support {
    /// Half-width of the region of support.
    pub k: usize,
    /// Signed distance of the point from the support chord.
    pub deviation: f64,
    /// k-cosine of the point over its region of support, in `[-1, 1]`.
    pub cosine: f64,
}

fn at(points: &[Point2], i: isize) -> Point2 {
    let n = points.len() as isize;
    points[i.rem_euclid(n) as usize]
}

/// Chord length and signed perpendicular distance of `points[i]` from the
/// chord `points[i-k] -> points[i+k]`.
fn chord(points: &[Point2], i: usize, k: usize) -> (f64, f64) {
    let i = i as isize;
    let k = k as isize;
    let a = at(points, i - k);
    let b = at(points, i + k);
    let p = at(points, i);
    let l = a.distance(&b);
    if l == 0.0 {
        return (0.0, p.distance(&a));
    }
    let cross = (b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x);
    (l, cross / l)
}

fn ratio(l: f64, d: f64) -> f64 {
    if l == 0.0 {
        if d == 0.0 {
            0.0
        } else {
            f64::INFINITY.copysign(d)
        }
    } else {
        d / l
    }
}

fn k_cosine(points: &[Point2], i: usize, k: usize) -> f64 {
    let p = points[i];
    let a = at(points, i as isize - k as isize).sub(&p);
    let b = at(points, i as isize + k as isize).sub(&p);
    let na = a.x.hypot(a.y);
    let nb = b.x.hypot(b.y);
    if na == 0.0 || nb == 0.0 {
        return 1.0;
    }
    ((a.x * b.x + a.y * b.y) / (na * nb)).clamp(-1.0, 1.0)
}

/// Region of support and significance for every point of a closed chain.
pub fn supports(points: &[Point2]) -> Vec<Support> {
    let n = points.len();
    let k_max = ((n.saturating_sub(1)) / 2).max(1);
    (0..n)
        .map(|i| {
            let mut k = 1;
            let (mut l, mut d) = chord(points, i, 1);
            while k < k_max {
                let (l_next, d_next) = chord(points, i, k + 1);
                let r = ratio(l, d);
                let r_next = ratio(l_next, d_next);
                let stop = l >= l_next
                    || (d > 0.0 && r >= r_next)
                    || (d < 0.0 && r <= r_next);
                if stop {
                    break;
                }
                k += 1;
                l = l_next;
                d = d_next;
            }
            Support { k, deviation: d, cosine: k_cosine(points, i, k) }
        })
        .collect()
}

/// Dominant points of `chain`, in chain order.
///
/// When fewer than four points survive, the extreme points of the chain
/// (leftmost, topmost, rightmost, bottommost) are added so the outline keeps
/// its extent.
pub fn dominant_points(chain: &ContourChain) -> Vec<Point2> {
    dominant_indices(chain.points())
        .into_iter()
        .map(|i| chain.points()[i])
        .collect()
}

pub fn dominant_indices(points: &[Point2]) -> Vec<usize> {
    let n = points.len();
    let sup = supports(points);
    let mut keep: Vec<usize> = (0..n)
        .filter(|&i| {
            let s = sup[i];
            if s.deviation == 0.0 {
                return false;
            }
            let radius = (s.k / 2).max(1) as isize;
            (-radius..=radius).all(|o| {
                let j = (i as isize + o).rem_euclid(n as isize) as usize;
                sup[j].cosine <= s.cosine
            })
        })
        .collect();
    if keep.len() < 4 {
        for e in extreme_indices(points) {
            if !keep.contains(&e) {
                keep.push(e);
            }
        }
        keep.sort_unstable();
    }
    keep
}

fn extreme_indices(points: &[Point2]) -> [usize; 4] {
    let pick = |better: &dyn Fn(&Point2, &Point2) -> bool| {
        let mut best = 0;
        for (i, p) in points.iter().enumerate() {
            if better(p, &points[best]) {
                best = i;
            }
        }
        best
    };
    [
        pick(&|p, q| p.x < q.x),
        pick(&|p, q| p.y < q.y),
        pick(&|p, q| p.x > q.x),
        pick(&|p, q| p.y > q.y),
    ]
}
