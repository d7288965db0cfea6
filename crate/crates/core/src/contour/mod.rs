//! Dense instance masks to fixed-N polygons.
//!
//! Pixel `(col, row)` has its center at `(col, row)` in the point coordinates
//! used here, so traced chains pass through boundary pixel centers.

mod dominant;
mod simplify;
mod trace;

use std::collections::BTreeSet;

pub use dominant::{dominant_indices, dominant_points, supports, Support};
pub use simplify::{farthest_pair, fixed_step_indices, fixed_step_sample, rdp_simplify, RdpHierarchy};
pub use trace::{extract_contours, ContourSet, SkippedInstance};

use crate::error::{Error, Result};
use crate::geometry::{Point2, Polygon};

/// A grid of instance ids; 0 is background. Ids need not be contiguous.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InstanceMask {
    width: usize,
    height: usize,
    pixels: Vec<u32>,
}

impl InstanceMask {
    pub fn new(width: usize, height: usize, pixels: Vec<u32>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidConfig(format!("mask dimensions {width}x{height}")));
        }
        if pixels.len() != width * height {
            return Err(Error::ShapeMismatch(format!(
                "{} pixels for a {width}x{height} mask",
                pixels.len()
            )));
        }
        Ok(Self { width, height, pixels })
    }

    pub fn empty(width: usize, height: usize) -> Result<Self> {
        Self::new(width, height, vec![0; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[u32] {
        &self.pixels
    }

    pub fn get(&self, x: usize, y: usize) -> u32 {
        self.pixels[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, id: u32) {
        self.pixels[y * self.width + x] = id;
    }

    /// Non-background ids in ascending order.
    pub fn ids(&self) -> BTreeSet<u32> {
        self.pixels.iter().copied().filter(|&id| id != 0).collect()
    }

    /// Inclusive pixel bounds `(x0, y0, x1, y1)` of an instance.
    pub fn instance_bounds(&self, id: u32) -> Option<(usize, usize, usize, usize)> {
        let mut b: Option<(usize, usize, usize, usize)> = None;
        for y in 0..self.height {
            for x in 0..self.width {
                if self.get(x, y) == id {
                    b = Some(match b {
                        None => (x, y, x, y),
                        Some((x0, y0, x1, y1)) => (x0.min(x), y0.min(y), x1.max(x), y1.max(y)),
                    });
                }
            }
        }
        b
    }
}

/// A closed 8-connected boundary chain through pixel centers.
#[derive(Debug, Clone, PartialEq)]
pub struct ContourChain {
    points: Vec<Point2>,
    cumulative: Vec<f64>,
}

impl ContourChain {
    pub fn new(points: Vec<Point2>) -> Result<Self> {
        if points.len() < 3 {
            return Err(Error::TooFewPoints { needed: 3, got: points.len() });
        }
        let mut cumulative = Vec::with_capacity(points.len() + 1);
        let mut acc = 0.0;
        cumulative.push(0.0);
        for i in 0..points.len() {
            acc += points[i].distance(&points[(i + 1) % points.len()]);
            cumulative.push(acc);
        }
        Ok(Self { points, cumulative })
    }

    pub fn points(&self) -> &[Point2] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Closed perimeter length.
    pub fn arc_length(&self) -> f64 {
        self.cumulative[self.points.len()]
    }

    /// Arc length from point `i` forward to point `j`, wrapping around.
    fn arc_between(&self, i: usize, j: usize) -> f64 {
        if j > i {
            self.cumulative[j] - self.cumulative[i]
        } else {
            self.arc_length() - self.cumulative[i] + self.cumulative[j]
        }
    }

}

pub const GAMMA_MAX: f64 = 0.5;
pub const GAMMA_TOLERANCE: f64 = 1e-7;
pub const MAX_SEARCH_STEPS: usize = 60;

/// Simplifies `chain` to exactly `n` vertices with Douglas-Peucker, choosing
/// the tolerance as `gamma * arc_length` and binary-searching `gamma`.
///
/// If no tolerance yields exactly `n` vertices, the result at the smallest
/// searched tolerance with at most `n` vertices is topped up by inserting the
/// chain point nearest the middle of the longest remaining arc.
pub fn adaptive_simplify(chain: &ContourChain, n: usize) -> Result<Polygon> {
    Polygon::new(adaptive_indices(chain, n)?.into_iter().map(|i| chain.points()[i]).collect())
}

/// Chain indices selected by [`adaptive_simplify`], ascending.
pub fn adaptive_indices(chain: &ContourChain, n: usize) -> Result<Vec<usize>> {
    if n < 3 {
        return Err(Error::InvalidConfig(format!("vertex count {n} < 3")));
    }
    if chain.len() < n {
        return Err(Error::TooFewPoints { needed: n, got: chain.len() });
    }
    if chain.len() == n {
        return Ok((0..n).collect());
    }
    let hierarchy = RdpHierarchy::new(chain.points());
    let arc = chain.arc_length();
    let (mut lo, mut hi) = (0.0, GAMMA_MAX);
    for _ in 0..MAX_SEARCH_STEPS {
        if hi - lo < GAMMA_TOLERANCE {
            break;
        }
        let mid = 0.5 * (lo + hi);
        let m = hierarchy.count(mid * arc);
        if m == n {
            return Ok(hierarchy.indices(mid * arc));
        }
        if m > n {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mut kept = hierarchy.indices(hi * arc);
    if kept.is_empty() {
        kept.push(0);
    }
    while kept.len() < n {
        insert_longest_arc_midpoint(chain, &mut kept);
    }
    Ok(kept)
}

fn insert_longest_arc_midpoint(chain: &ContourChain, kept: &mut Vec<usize>) {
    let len = chain.len();
    let k = kept.len();
    // (start, steps to the next kept vertex, arc length)
    let mut best: Option<(usize, usize, f64)> = None;
    for w in 0..k {
        let s = kept[w];
        let span = if k == 1 { len } else { (kept[(w + 1) % k] + len - s) % len };
        if span < 2 {
            continue;
        }
        let arc = if k == 1 { chain.arc_length() } else { chain.arc_between(s, kept[(w + 1) % k]) };
        if best.is_none_or(|(_, _, b)| arc > b) {
            best = Some((s, span, arc));
        }
    }
    let (s, span, arc) = best.expect("chain has more points than kept vertices");
    let pick = (1..span)
        .map(|step| (s + step) % len)
        .min_by(|&i, &j| {
            let ei = (chain.arc_between(s, i) - arc / 2.0).abs();
            let ej = (chain.arc_between(s, j) - arc / 2.0).abs();
            ei.total_cmp(&ej)
        })
        .expect("arc has interior points");
    let at = kept.partition_point(|&i| i < pick);
    kept.insert(at, pick);
}

/// Fixed-step polygon: samples the dominant points at a constant step, or the
/// raw chain when it has fewer than `n` dominant points.
pub fn fixed_step_simplify(chain: &ContourChain, n: usize) -> Result<Polygon> {
    let dominant = dominant_points(chain);
    if dominant.len() >= n {
        fixed_step_sample(&dominant, n)
    } else {
        fixed_step_sample(chain.points(), n)
    }
}

/// IoU between a polygon and one instance of a mask, sampling pixel centers.
/// Pixels whose centers lie on the polygon boundary count as covered.
pub fn mask_iou(polygon: &Polygon, mask: &InstanceMask, instance_id: u32) -> f64 {
    let (lo, hi) = polygon.bounds();
    let clamp_x = |v: f64| (v.max(0.0) as usize).min(mask.width() - 1);
    let clamp_y = |v: f64| (v.max(0.0) as usize).min(mask.height() - 1);
    let (mut x0, mut y0, mut x1, mut y1) =
        (clamp_x(lo.x.floor()), clamp_y(lo.y.floor()), clamp_x(hi.x.ceil()), clamp_y(hi.y.ceil()));
    if let Some((ix0, iy0, ix1, iy1)) = mask.instance_bounds(instance_id) {
        x0 = x0.min(ix0);
        y0 = y0.min(iy0);
        x1 = x1.max(ix1);
        y1 = y1.max(iy1);
    }
    let (mut inter, mut union) = (0u64, 0u64);
    for y in y0..=y1 {
        for x in x0..=x1 {
            let in_mask = mask.get(x, y) == instance_id;
            let in_poly = polygon.contains_closed(Point2::new(x as f64, y as f64));
            if in_mask && in_poly {
                inter += 1;
            }
            if in_mask || in_poly {
                union += 1;
            }
        }
    }
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

/// Smallest vertex count (4, 6, 8, ...) after which adding two more vertices
/// improves the mask IoU of the adaptive polygon by less than `delta`.
///
/// Returns `chain.len()` when the chain runs out of points first.
pub fn optimal_vertex_count(
    chain: &ContourChain,
    mask: &InstanceMask,
    instance_id: u32,
    delta: f64,
) -> Result<usize> {
    const START: usize = 4;
    if chain.len() <= START {
        return Ok(chain.len());
    }
    let mut n = START;
    let mut prev = mask_iou(&adaptive_simplify(chain, n)?, mask, instance_id);
    loop {
        let next = n + 2;
        if next > chain.len() {
            return Ok(chain.len());
        }
        let iou = mask_iou(&adaptive_simplify(chain, next)?, mask, instance_id);
        if iou - prev < delta {
            return Ok(n);
        }
        n = next;
        prev = iou;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::is_self_intersecting;

    fn filled(w: usize, h: usize, f: impl Fn(f64, f64) -> bool) -> InstanceMask {
        let mut m = InstanceMask::empty(w, h).unwrap();
        for y in 0..h {
            for x in 0..w {
                if f(x as f64, y as f64) {
                    m.set(x, y, 1);
                }
            }
        }
        m
    }

    fn rect_mask() -> InstanceMask {
        filled(40, 30, |x, y| (5.0..=32.0).contains(&x) && (4.0..=21.0).contains(&y))
    }

    fn disc_mask(r: f64) -> InstanceMask {
        let size = (2.0 * r + 10.0) as usize;
        let c = size as f64 / 2.0;
        filled(size, size, |x, y| (x - c).powi(2) + (y - c).powi(2) <= r * r)
    }

    #[test]
    fn mask_validation() {
        assert!(InstanceMask::new(0, 3, vec![]).is_err());
        assert!(InstanceMask::new(2, 2, vec![0; 3]).is_err());
        let m = InstanceMask::new(2, 2, vec![0, 5, 0, 2]).unwrap();
        assert_eq!(m.ids().into_iter().collect::<Vec<_>>(), vec![2, 5]);
    }

    #[test]
    fn rectangle_adaptive_gives_corners() {
        let m = rect_mask();
        let chain = extract_contours(&m).chains.remove(&1).unwrap();
        let poly = adaptive_simplify(&chain, 4).unwrap();
        let mut got: Vec<(f64, f64)> = poly.vertices().iter().map(|p| (p.x, p.y)).collect();
        got.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(got, vec![(5.0, 4.0), (5.0, 21.0), (32.0, 4.0), (32.0, 21.0)]);
        assert_eq!(mask_iou(&poly, &m, 1), 1.0);
    }

    #[test]
    fn chain_of_exact_length_is_returned_as_is() {
        let pts: Vec<Point2> =
            [(0.0, 0.0), (1.0, 0.0), (2.0, 1.0), (1.0, 2.0)].iter().map(|&p| p.into()).collect();
        let chain = ContourChain::new(pts.clone()).unwrap();
        assert_eq!(adaptive_simplify(&chain, 4).unwrap().vertices(), &pts[..]);
        assert_eq!(
            adaptive_simplify(&chain, 5).unwrap_err(),
            Error::TooFewPoints { needed: 5, got: 4 }
        );
    }

    #[test]
    fn adaptive_hits_exact_count_with_repair() {
        // rectangle has only 4 non-collinear points, so larger n needs insertion
        let chain = extract_contours(&rect_mask()).chains.remove(&1).unwrap();
        for n in [3, 5, 8, 12, 31] {
            let idx = adaptive_indices(&chain, n).unwrap();
            assert_eq!(idx.len(), n);
            assert!(idx.windows(2).all(|w| w[0] < w[1]));
            let poly = adaptive_simplify(&chain, n).unwrap();
            assert!(!is_self_intersecting(&poly) || n == 3);
        }
    }

    #[test]
    fn disc_simplification_is_simple_and_exact_size() {
        let m = disc_mask(30.0);
        let chain = extract_contours(&m).chains.remove(&1).unwrap();
        for n in 3..40 {
            let poly = adaptive_simplify(&chain, n).unwrap();
            assert_eq!(poly.len(), n);
            assert!(!is_self_intersecting(&poly), "n={n}");
            for v in poly.vertices() {
                assert!(chain.points().contains(v));
            }
        }
    }

    #[test]
    fn optimal_count_for_rectangle_is_four() {
        let m = rect_mask();
        let chain = extract_contours(&m).chains.remove(&1).unwrap();
        assert_eq!(optimal_vertex_count(&chain, &m, 1, 0.005).unwrap(), 4);
        assert_eq!(optimal_vertex_count(&chain, &m, 1, 1.0).unwrap(), 4);
    }

    #[test]
    fn optimal_count_for_disc_satisfies_stopping_rule() {
        let m = disc_mask(30.0);
        let chain = extract_contours(&m).chains.remove(&1).unwrap();
        let n = optimal_vertex_count(&chain, &m, 1, 0.005).unwrap();
        // oracle: sweep the adaptive IoU curve directly
        let iou = |k: usize| mask_iou(&adaptive_simplify(&chain, k).unwrap(), &m, 1);
        let mut expected = 4;
        while iou(expected + 2) - iou(expected) >= 0.005 {
            expected += 2;
        }
        assert_eq!(n, expected);
        assert!((10..=30).contains(&n), "{n}");
        assert_eq!(optimal_vertex_count(&chain, &m, 1, 0.005).unwrap(), n);
    }

    #[test]
    fn mask_iou_of_empty_overlap() {
        let m = rect_mask();
        let far = Polygon::from_xy(&[(36.0, 25.0), (38.0, 25.0), (38.0, 28.0)]).unwrap();
        assert_eq!(mask_iou(&far, &m, 1), 0.0);
    }
}
