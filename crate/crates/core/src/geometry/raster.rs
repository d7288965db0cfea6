//! Scanline even-odd rasterization of polygon pairs on a shared grid.
//!
//! Both polygons are sampled at the cell centers of a grid laid over the
//! union of their bounding boxes, with `resolution` cells along the longer
//! side. The per-pair error of the resulting IoU is on the order of
//! `perimeter / resolution` relative to the union extent.

use super::{is_self_intersecting, Point2, Polygon};
use crate::error::{Error, Result};

pub const DEFAULT_RESOLUTION: usize = 2048;

/// Cell counts covered by each polygon and by both.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RasterCounts {
    pub a: u64,
    pub b: u64,
    pub both: u64,
}

impl RasterCounts {
    pub fn union(&self) -> u64 {
        self.a + self.b - self.both
    }
}

struct Grid {
    x0: f64,
    y0: f64,
    cell: f64,
    cols: usize,
    rows: usize,
}

/// Column spans `[start, end)` covered on the row whose center is `y`.
fn row_spans(poly: &Polygon, y: f64, grid: &Grid, xs: &mut Vec<f64>, out: &mut Vec<(usize, usize)>) {
    xs.clear();
    out.clear();
    for (p, q) in poly.edges() {
        if (p.y > y) != (q.y > y) {
            xs.push(p.x + (y - p.y) * (q.x - p.x) / (q.y - p.y));
        }
    }
    xs.sort_by(f64::total_cmp);
    let to_col = |x: f64| -> usize {
        let c = ((x - grid.x0) / grid.cell - 0.5).ceil();
        c.clamp(0.0, grid.cols as f64) as usize
    };
    for pair in xs.chunks_exact(2) {
        let (s, e) = (to_col(pair[0]), to_col(pair[1]));
        if e > s {
            out.push((s, e));
        }
    }
}

fn overlap(a: &[(usize, usize)], b: &[(usize, usize)]) -> u64 {
    let (mut i, mut j, mut total) = (0, 0, 0u64);
    while i < a.len() && j < b.len() {
        let s = a[i].0.max(b[j].0);
        let e = a[i].1.min(b[j].1);
        if e > s {
            total += (e - s) as u64;
        }
        if a[i].1 < b[j].1 {
            i += 1;
        } else {
            j += 1;
        }
    }
    total
}

/// Rasterizes both polygons (even-odd rule, cell-center sampling) and counts
/// covered cells. No simplicity check is made.
pub fn raster_counts(a: &Polygon, b: &Polygon, resolution: usize) -> Result<RasterCounts> {
    if resolution == 0 {
        return Err(Error::InvalidConfig("resolution must be positive".into()));
    }
    let (alo, ahi) = a.bounds();
    let (blo, bhi) = b.bounds();
    let lo = Point2::new(alo.x.min(blo.x), alo.y.min(blo.y));
    let hi = Point2::new(ahi.x.max(bhi.x), ahi.y.max(bhi.y));
    let extent = (hi.x - lo.x).max(hi.y - lo.y);
    if extent <= 0.0 {
        return Ok(RasterCounts { a: 0, b: 0, both: 0 });
    }
    let cell = extent / resolution as f64;
    let grid = Grid {
        x0: lo.x,
        y0: lo.y,
        cell,
        cols: (((hi.x - lo.x) / cell).ceil() as usize).clamp(1, resolution),
        rows: (((hi.y - lo.y) / cell).ceil() as usize).clamp(1, resolution),
    };
    let mut xs = Vec::new();
    let (mut sa, mut sb) = (Vec::new(), Vec::new());
    let mut counts = RasterCounts { a: 0, b: 0, both: 0 };
    for r in 0..grid.rows {
        let y = grid.y0 + (r as f64 + 0.5) * grid.cell;
        row_spans(a, y, &grid, &mut xs, &mut sa);
        row_spans(b, y, &grid, &mut xs, &mut sb);
        counts.a += sa.iter().map(|(s, e)| (e - s) as u64).sum::<u64>();
        counts.b += sb.iter().map(|(s, e)| (e - s) as u64).sum::<u64>();
        counts.both += overlap(&sa, &sb);
    }
    Ok(counts)
}

/// Rasterized IoU without the simplicity check, for predictions that may
/// self-intersect. Even-odd fill decides coverage.
pub fn raster_iou(a: &Polygon, b: &Polygon, resolution: usize) -> Result<f64> {
    let c = raster_counts(a, b, resolution)?;
    let union = c.union();
    if union == 0 {
        return Err(Error::EmptyUnion);
    }
    Ok(c.both as f64 / union as f64)
}

/// IoU of two simple polygons via rasterization on a shared grid.
pub fn exact_iou(a: &Polygon, b: &Polygon, resolution: usize) -> Result<f64> {
    if is_self_intersecting(a) || is_self_intersecting(b) {
        return Err(Error::SelfIntersecting);
    }
    raster_iou(a, b, resolution)
}
