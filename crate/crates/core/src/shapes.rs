//! Synthetic silhouettes with mixed straight and curved boundaries, painted
//! into instance masks. Used by the test suites and the CLI demos.

use std::f64::consts::PI;

use rand::Rng;

use crate::contour::InstanceMask;
use crate::geometry::{Point2, Polygon};

/// Paints every pixel whose center lies inside or on `outline`.
pub fn paint_polygon(mask: &mut InstanceMask, outline: &Polygon, id: u32) {
    let (lo, hi) = outline.bounds();
    let x0 = lo.x.floor().max(0.0) as usize;
    let y0 = lo.y.floor().max(0.0) as usize;
    let x1 = (hi.x.ceil().max(0.0) as usize).min(mask.width() - 1);
    let y1 = (hi.y.ceil().max(0.0) as usize).min(mask.height() - 1);
    for y in y0..=y1 {
        for x in x0..=x1 {
            if outline.contains_closed(Point2::new(x as f64, y as f64)) {
                mask.set(x, y, id);
            }
        }
    }
}

fn arc(out: &mut Vec<Point2>, c: Point2, rx: f64, ry: f64, from_deg: f64, to_deg: f64, steps: usize) {
    for k in 0..=steps {
        let t = (from_deg + (to_deg - from_deg) * k as f64 / steps as f64).to_radians();
        out.push(Point2::new(c.x + rx * t.cos(), c.y + ry * t.sin()));
    }
}

fn poly(points: Vec<Point2>) -> Polygon {
    let mut pts = points;
    pts.dedup_by(|a, b| a.distance(b) < 1e-9);
    if pts.len() > 1 && pts[0].distance(pts.last().unwrap()) < 1e-9 {
        pts.pop();
    }
    Polygon::new(pts).expect("generated outline")
}

pub fn rectangle(x: f64, y: f64, w: f64, h: f64) -> Polygon {
    poly(vec![
        Point2::new(x, y),
        Point2::new(x + w, y),
        Point2::new(x + w, y + h),
        Point2::new(x, y + h),
    ])
}

pub fn rotated_rectangle(c: Point2, w: f64, h: f64, angle_deg: f64) -> Polygon {
    let (s, co) = angle_deg.to_radians().sin_cos();
    let corners = [(-w / 2.0, -h / 2.0), (w / 2.0, -h / 2.0), (w / 2.0, h / 2.0), (-w / 2.0, h / 2.0)];
    poly(
        corners
            .iter()
            .map(|&(dx, dy)| Point2::new(c.x + dx * co - dy * s, c.y + dx * s + dy * co))
            .collect(),
    )
}

pub fn ellipse(c: Point2, rx: f64, ry: f64) -> Polygon {
    let mut pts = Vec::new();
    arc(&mut pts, c, rx, ry, 0.0, 360.0, 256);
    poly(pts)
}

pub fn rounded_rectangle(x: f64, y: f64, w: f64, h: f64, r: f64) -> Polygon {
    let mut pts = Vec::new();
    arc(&mut pts, Point2::new(x + w - r, y + r), r, r, 270.0, 360.0, 24);
    arc(&mut pts, Point2::new(x + w - r, y + h - r), r, r, 0.0, 90.0, 24);
    arc(&mut pts, Point2::new(x + r, y + h - r), r, r, 90.0, 180.0, 24);
    arc(&mut pts, Point2::new(x + r, y + r), r, r, 180.0, 270.0, 24);
    poly(pts)
}

/// Side view of a car: flat underside, rounded hood at the front (right),
/// a curved cabin on top and a squarer tail.
pub fn car(x: f64, y: f64, len: f64, height: f64) -> Polygon {
    let bottom = y + height;
    let belt = y + 0.45 * height;
    let mut pts = vec![Point2::new(x, bottom)];
    // underside, straight
    pts.push(Point2::new(x + len - 0.18 * len, bottom));
    // rounded front: quarter ellipse from the bottom up to the hood line
    arc(&mut pts, Point2::new(x + len - 0.18 * len, belt), 0.18 * len, bottom - belt, 90.0, 0.0, 20);
    // hood, slightly sloped
    pts.push(Point2::new(x + 0.72 * len, belt - 0.05 * height));
    // cabin: half ellipse
    arc(
        &mut pts,
        Point2::new(x + 0.45 * len, belt - 0.05 * height),
        0.27 * len,
        belt - 0.05 * height - y,
        0.0,
        -180.0,
        28,
    );
    // trunk and tail
    pts.push(Point2::new(x + 0.05 * len, belt));
    pts.push(Point2::new(x, belt + 0.1 * height));
    poly(pts)
}

/// Top view of a ship: pointed curved bow, straight sides, flat stern.
pub fn ship(x: f64, y: f64, len: f64, beam: f64) -> Polygon {
    let mid = y + beam / 2.0;
    let body = x + 0.65 * len;
    let mut pts = vec![Point2::new(x, y), Point2::new(body, y)];
    for k in 1..20 {
        let t = k as f64 / 20.0;
        let px = body + (len * 0.35) * t;
        let half = (beam / 2.0) * (1.0 - t * t);
        pts.push(Point2::new(px, mid - half));
    }
    pts.push(Point2::new(x + len, mid));
    for k in (1..20).rev() {
        let t = k as f64 / 20.0;
        let px = body + (len * 0.35) * t;
        let half = (beam / 2.0) * (1.0 - t * t);
        pts.push(Point2::new(px, mid + half));
    }
    pts.push(Point2::new(body, y + beam));
    pts.push(Point2::new(x, y + beam));
    poly(pts)
}

/// Rectangle with a half-disc on its right side.
pub fn d_shape(x: f64, y: f64, w: f64, h: f64) -> Polygon {
    let r = h / 2.0;
    let mut pts = vec![Point2::new(x, y), Point2::new(x + w - r, y)];
    arc(&mut pts, Point2::new(x + w - r, y + r), r, r, -90.0, 90.0, 40);
    pts.push(Point2::new(x, y + h));
    poly(pts)
}

pub fn stadium(x: f64, y: f64, w: f64, h: f64) -> Polygon {
    let r = h / 2.0;
    let mut pts = Vec::new();
    arc(&mut pts, Point2::new(x + w - r, y + r), r, r, -90.0, 90.0, 32);
    arc(&mut pts, Point2::new(x + r, y + r), r, r, 90.0, 270.0, 32);
    poly(pts)
}

/// Triangle whose top side bulges outward.
pub fn arched_triangle(x: f64, y: f64, w: f64, h: f64) -> Polygon {
    let mut pts = vec![Point2::new(x, y + h), Point2::new(x + w, y + h)];
    for k in 1..30 {
        let t = k as f64 / 30.0;
        let bulge = 0.25 * h * (PI * t).sin();
        // from the right base corner to the apex, then down to the left one
        let (px, py) = if t <= 0.5 {
            let s = t * 2.0;
            (x + w - s * w / 2.0, y + h - s * h)
        } else {
            let s = (t - 0.5) * 2.0;
            (x + w / 2.0 - s * w / 2.0, y + s * h)
        };
        pts.push(Point2::new(px + bulge * 0.3, py - bulge));
    }
    poly(pts)
}

/// A rectangle with one rounded corner.
pub fn tab(x: f64, y: f64, w: f64, h: f64, r: f64) -> Polygon {
    let mut pts = vec![Point2::new(x, y)];
    arc(&mut pts, Point2::new(x + w - r, y + r), r, r, -90.0, 0.0, 24);
    pts.push(Point2::new(x + w, y + h));
    pts.push(Point2::new(x, y + h));
    poly(pts)
}

/// Star-shaped polygon with `n` vertices at sorted random angles around
/// `center` and radii drawn from `[r_min, r_max)`. Angles keep a minimum
/// spacing of a tenth of the uniform spacing.
pub fn random_star<R: Rng + ?Sized>(rng: &mut R, n: usize, center: Point2, r_min: f64, r_max: f64) -> Polygon {
    let min_gap = 0.1 * 2.0 * PI / n as f64;
    let angles = loop {
        let offset = rng.random_range(0.0..2.0 * PI);
        let mut a: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..2.0 * PI)).collect();
        a.sort_by(f64::total_cmp);
        let gaps_ok = a.windows(2).all(|w| w[1] - w[0] >= min_gap) && a[0] + 2.0 * PI - a[n - 1] >= min_gap;
        if gaps_ok {
            break a.into_iter().map(|t| t + offset).collect::<Vec<_>>();
        }
    };
    poly(
        angles
            .into_iter()
            .map(|t| {
                let r = rng.random_range(r_min..r_max);
                Point2::new(center.x + r * t.cos(), center.y + r * t.sin())
            })
            .collect(),
    )
}

/// A named single-instance fixture: the analytic outline and its mask.
#[derive(Debug, Clone)]
pub struct SyntheticShape {
    pub name: String,
    pub outline: Polygon,
    pub mask: InstanceMask,
}

impl SyntheticShape {
    pub fn new(name: impl Into<String>, outline: Polygon, width: usize, height: usize) -> Self {
        let mut mask = InstanceMask::empty(width, height).expect("positive size");
        paint_polygon(&mut mask, &outline, 1);
        Self { name: name.into(), outline, mask }
    }
}

/// The standard set of 24 synthetic silhouettes on 128x96 canvases.
pub fn fixture_set() -> Vec<SyntheticShape> {
    let (w, h) = (128, 96);
    let c = Point2::new(64.0, 48.0);
    vec![
        SyntheticShape::new("car_small", car(14.0, 20.0, 96.0, 50.0), w, h),
        SyntheticShape::new("car_long", car(6.0, 24.0, 114.0, 44.0), w, h),
        SyntheticShape::new("car_tall", car(20.0, 10.0, 86.0, 66.0), w, h),
        SyntheticShape::new("ship", ship(8.0, 30.0, 110.0, 34.0), w, h),
        SyntheticShape::new("ship_wide", ship(16.0, 18.0, 96.0, 56.0), w, h),
        SyntheticShape::new("d_shape", d_shape(20.0, 16.0, 90.0, 60.0), w, h),
        SyntheticShape::new("d_shape_flat", d_shape(10.0, 30.0, 108.0, 36.0), w, h),
        SyntheticShape::new("stadium", stadium(10.0, 26.0, 108.0, 44.0), w, h),
        SyntheticShape::new("stadium_short", stadium(30.0, 18.0, 66.0, 58.0), w, h),
        SyntheticShape::new("rounded_rect", rounded_rectangle(12.0, 12.0, 104.0, 70.0, 18.0), w, h),
        SyntheticShape::new("rounded_rect_big_r", rounded_rectangle(20.0, 14.0, 88.0, 68.0, 30.0), w, h),
        SyntheticShape::new("tab", tab(16.0, 12.0, 96.0, 70.0, 40.0), w, h),
        SyntheticShape::new("tab_small_r", tab(10.0, 20.0, 100.0, 56.0, 24.0), w, h),
        SyntheticShape::new("arched_triangle", arched_triangle(14.0, 8.0, 100.0, 80.0), w, h),
        SyntheticShape::new("ellipse", ellipse(c, 54.0, 34.0), w, h),
        SyntheticShape::new("ellipse_thin", ellipse(c, 58.0, 18.0), w, h),
        SyntheticShape::new("circle", ellipse(c, 40.0, 40.0), w, h),
        SyntheticShape::new("rectangle", rectangle(18.0, 20.0, 90.0, 52.0), w, h),
        SyntheticShape::new("rotated_rect", rotated_rectangle(c, 90.0, 40.0, 23.0), w, h),
        SyntheticShape::new("rotated_rect_steep", rotated_rectangle(c, 70.0, 30.0, 61.0), w, h),
        SyntheticShape::new("car_mirrored", car(14.0, 20.0, 96.0, 50.0).mirror_x(c.x), w, h),
        SyntheticShape::new("ship_short", ship(24.0, 28.0, 80.0, 40.0), w, h),
        SyntheticShape::new("rounded_square", rounded_rectangle(24.0, 8.0, 80.0, 80.0, 22.0), w, h),
        SyntheticShape::new("d_shape_small", d_shape(34.0, 26.0, 60.0, 44.0), w, h),
    ]
}

trait Mirror {
    fn mirror_x(&self, axis: f64) -> Polygon;
}

impl Mirror for Polygon {
    fn mirror_x(&self, axis: f64) -> Polygon {
        let mut pts: Vec<Point2> =
            self.vertices().iter().map(|p| Point2::new(2.0 * axis - p.x, p.y)).collect();
        pts.reverse();
        Polygon::new(pts).expect("mirror keeps vertex count")
    }
}
