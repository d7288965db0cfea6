//! Polygon primitives: area, center, polar conversion, angular ordering and
//! self-intersection tests. Rasterized IoU lives in [`raster`].

mod raster;

pub use raster::{exact_iou, raster_counts, raster_iou, RasterCounts, DEFAULT_RESOLUTION};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A 2-D point in pixel or normalized units.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn distance(&self, other: &Point2) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn sub(&self, other: &Point2) -> Point2 {
        Point2::new(self.x - other.x, self.y - other.y)
    }

    pub fn add(&self, other: &Point2) -> Point2 {
        Point2::new(self.x + other.x, self.y + other.y)
    }

    pub fn scale(&self, s: f64) -> Point2 {
        Point2::new(self.x * s, self.y * s)
    }
}

impl From<[f64; 2]> for Point2 {
    fn from(v: [f64; 2]) -> Self {
        Point2::new(v[0], v[1])
    }
}

impl From<Point2> for [f64; 2] {
    fn from(p: Point2) -> Self {
        [p.x, p.y]
    }
}

impl From<(f64, f64)> for Point2 {
    fn from(v: (f64, f64)) -> Self {
        Point2::new(v.0, v.1)
    }
}

/// A closed polygon with at least three finite vertices. The last vertex
/// connects back to the first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Point2>", into = "Vec<Point2>")]
pub struct Polygon {
    vertices: Vec<Point2>,
}

impl Polygon {
    pub fn new(vertices: Vec<Point2>) -> Result<Self> {
        if vertices.len() < 3 {
            return Err(Error::DegeneratePolygon(format!(
                "{} vertices, need at least 3",
                vertices.len()
            )));
        }
        if let Some(i) = vertices.iter().position(|p| !p.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        Ok(Self { vertices })
    }

    pub fn from_xy(coords: &[(f64, f64)]) -> Result<Self> {
        Self::new(coords.iter().map(|&c| c.into()).collect())
    }

    /// Builds a polygon from interleaved `x0 y0 x1 y1 ...` coordinates.
    pub fn from_flat(coords: &[f64]) -> Result<Self> {
        if !coords.len().is_multiple_of(2) {
            return Err(Error::ShapeMismatch(format!(
                "odd coordinate count {}",
                coords.len()
            )));
        }
        Self::new(coords.chunks_exact(2).map(|c| Point2::new(c[0], c[1])).collect())
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.vertices.iter().flat_map(|p| [p.x, p.y]).collect()
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn vertices(&self) -> &[Point2] {
        &self.vertices
    }

    pub fn into_vertices(self) -> Vec<Point2> {
        self.vertices
    }

    /// Iterates over the closed edge list `(v[i], v[i+1 mod n])`.
    pub fn edges(&self) -> impl Iterator<Item = (Point2, Point2)> + '_ {
        let n = self.vertices.len();
        (0..n).map(move |i| (self.vertices[i], self.vertices[(i + 1) % n]))
    }

    /// Axis-aligned bounds as `(min, max)`.
    pub fn bounds(&self) -> (Point2, Point2) {
        let mut lo = Point2::new(f64::INFINITY, f64::INFINITY);
        let mut hi = Point2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        for p in &self.vertices {
            lo.x = lo.x.min(p.x);
            lo.y = lo.y.min(p.y);
            hi.x = hi.x.max(p.x);
            hi.y = hi.y.max(p.y);
        }
        (lo, hi)
    }

    pub fn translate(&self, d: Point2) -> Polygon {
        Polygon { vertices: self.vertices.iter().map(|p| p.add(&d)).collect() }
    }

    /// Uniform scaling about `center`.
    pub fn scale_about(&self, center: Point2, s: f64) -> Polygon {
        Polygon {
            vertices: self
                .vertices
                .iter()
                .map(|p| center.add(&p.sub(&center).scale(s)))
                .collect(),
        }
    }

    /// Cyclic relabeling: vertex `i` of the result is vertex `i + k` of `self`.
    pub fn rotate_indices(&self, k: usize) -> Polygon {
        let mut v = self.vertices.clone();
        let n = v.len();
        v.rotate_left(k % n);
        Polygon { vertices: v }
    }

    pub fn reversed(&self) -> Polygon {
        let mut v = self.vertices.clone();
        v.reverse();
        Polygon { vertices: v }
    }

    /// Closed point-in-polygon test: points within `1e-9` of an edge count as
    /// inside, everything else uses the even-odd rule.
    pub fn contains_closed(&self, p: Point2) -> bool {
        const ON_EDGE: f64 = 1e-9;
        let mut inside = false;
        for (a, b) in self.edges() {
            if point_segment_distance(p, a, b) <= ON_EDGE {
                return true;
            }
            if (a.y > p.y) != (b.y > p.y) {
                let x = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
                if p.x < x {
                    inside = !inside;
                }
            }
        }
        inside
    }
}

impl TryFrom<Vec<Point2>> for Polygon {
    type Error = Error;

    fn try_from(v: Vec<Point2>) -> Result<Self> {
        Polygon::new(v)
    }
}

impl From<Polygon> for Vec<Point2> {
    fn from(p: Polygon) -> Self {
        p.vertices
    }
}

/// One vertex in polar form about some center. `theta` is in degrees, `[0, 360)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolarVertex {
    pub distance: f64,
    pub theta: f64,
}

/// A center plus its vertices in polar form, sorted ascending by angle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolarPolygon {
    pub center: Point2,
    pub vertices: Vec<PolarVertex>,
}

impl PolarPolygon {
    /// Maps the polar vertices back to Cartesian coordinates.
    pub fn to_cartesian(&self) -> Vec<Point2> {
        self.vertices
            .iter()
            .map(|v| {
                let t = v.theta.to_radians();
                Point2::new(
                    self.center.x + v.distance * t.cos(),
                    self.center.y + v.distance * t.sin(),
                )
            })
            .collect()
    }
}

/// Twice the signed area (positive for counter-clockwise in a y-up frame).
pub fn signed_area2(points: &[Point2]) -> f64 {
    let n = points.len();
    (0..n)
        .map(|i| {
            let a = points[i];
            let b = points[(i + 1) % n];
            a.x * b.y - a.y * b.x
        })
        .sum()
}

/// Shoelace area, always non-negative.
pub fn shoelace_area(p: &Polygon) -> f64 {
    signed_area2(p.vertices()).abs() / 2.0
}

/// Shoelace area of a raw vertex list.
pub fn shoelace_area_of(points: &[Point2]) -> Result<f64> {
    if points.len() < 3 {
        return Err(Error::DegeneratePolygon(format!(
            "{} vertices, need at least 3",
            points.len()
        )));
    }
    Ok(signed_area2(points).abs() / 2.0)
}

/// The polygon center used throughout: the arithmetic mean of the vertices.
pub fn centroid(p: &Polygon) -> Point2 {
    mean_point(p.vertices()).expect("polygon has at least three vertices")
}

pub fn mean_point(points: &[Point2]) -> Result<Point2> {
    if points.is_empty() {
        return Err(Error::DegeneratePolygon("empty point set".into()));
    }
    let n = points.len() as f64;
    let (sx, sy) = points.iter().fold((0.0, 0.0), |(sx, sy), p| (sx + p.x, sy + p.y));
    Ok(Point2::new(sx / n, sy / n))
}

/// Full-circle angle of `(dx, dy)` in degrees, normalized to `[0, 360)`.
pub fn theta_degrees(dx: f64, dy: f64) -> f64 {
    let mut t = dy.atan2(dx).to_degrees();
    if t < 0.0 {
        t += 360.0;
    }
    if t >= 360.0 {
        t -= 360.0;
    }
    t
}

fn polar_of(p: Point2, center: Point2) -> PolarVertex {
    let dx = p.x - center.x;
    let dy = p.y - center.y;
    PolarVertex { distance: dx.hypot(dy), theta: theta_degrees(dx, dy) }
}

/// Permutation that orders the vertices of `points` by ascending angle about
/// `center`, ties broken by ascending distance. Errors if a vertex sits on the
/// center.
pub fn theta_order(points: &[Point2], center: Point2) -> Result<Vec<usize>> {
    let polar: Vec<PolarVertex> = points
        .iter()
        .enumerate()
        .map(|(i, &p)| {
            let v = polar_of(p, center);
            if v.distance == 0.0 {
                Err(Error::VertexAtCenter { index: i })
            } else {
                Ok(v)
            }
        })
        .collect::<Result<_>>()?;
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&i, &j| {
        polar[i]
            .theta
            .total_cmp(&polar[j].theta)
            .then(polar[i].distance.total_cmp(&polar[j].distance))
    });
    Ok(order)
}

pub fn to_polar(p: &Polygon, center: Point2) -> Result<PolarPolygon> {
    let order = theta_order(p.vertices(), center)?;
    Ok(PolarPolygon {
        center,
        vertices: order.iter().map(|&i| polar_of(p.vertices()[i], center)).collect(),
    })
}

/// Reorders vertices by ascending angle about `center` (counter-clockwise in a
/// y-up frame, starting from the positive x axis).
pub fn sort_by_theta(p: &Polygon, center: Point2) -> Result<Polygon> {
    let order = theta_order(p.vertices(), center)?;
    Ok(Polygon { vertices: order.iter().map(|&i| p.vertices()[i]).collect() })
}

fn orient(a: Point2, b: Point2, c: Point2) -> f64 {
    (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x)
}

fn on_segment(a: Point2, b: Point2, p: Point2) -> bool {
    p.x >= a.x.min(b.x) && p.x <= a.x.max(b.x) && p.y >= a.y.min(b.y) && p.y <= a.y.max(b.y)
}

/// True if closed segments `ab` and `cd` share at least one point.
pub fn segments_intersect(a: Point2, b: Point2, c: Point2, d: Point2) -> bool {
    let o1 = orient(a, b, c);
    let o2 = orient(a, b, d);
    let o3 = orient(c, d, a);
    let o4 = orient(c, d, b);
    if ((o1 > 0.0 && o2 < 0.0) || (o1 < 0.0 && o2 > 0.0))
        && ((o3 > 0.0 && o4 < 0.0) || (o3 < 0.0 && o4 > 0.0))
    {
        return true;
    }
    (o1 == 0.0 && on_segment(a, b, c))
        || (o2 == 0.0 && on_segment(a, b, d))
        || (o3 == 0.0 && on_segment(c, d, a))
        || (o4 == 0.0 && on_segment(c, d, b))
}

/// Checks every pair of non-adjacent edges for contact. Edges that share an
/// endpoint are never compared.
pub fn is_self_intersecting(p: &Polygon) -> bool {
    let v = p.vertices();
    let n = v.len();
    for i in 0..n {
        let (a, b) = (v[i], v[(i + 1) % n]);
        for j in (i + 2)..n {
            if i == 0 && j == n - 1 {
                continue;
            }
            let (c, d) = (v[j], v[(j + 1) % n]);
            if segments_intersect(a, b, c, d) {
                return true;
            }
        }
    }
    false
}

/// Euclidean distance from `p` to the closed segment `ab`.
pub fn point_segment_distance(p: Point2, a: Point2, b: Point2) -> f64 {
    let ab = b.sub(&a);
    let len2 = ab.x * ab.x + ab.y * ab.y;
    if len2 == 0.0 {
        return p.distance(&a);
    }
    let t = (((p.x - a.x) * ab.x + (p.y - a.y) * ab.y) / len2).clamp(0.0, 1.0);
    p.distance(&Point2::new(a.x + t * ab.x, a.y + t * ab.y))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_square() -> Polygon {
        Polygon::from_xy(&[(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)]).unwrap()
    }

    #[test]
    fn area_examples() {
        assert_eq!(shoelace_area(&unit_square()), 1.0);
        let tri = Polygon::from_xy(&[(0.0, 0.0), (4.0, 0.0), (0.0, 3.0)]).unwrap();
        assert_eq!(shoelace_area(&tri), 6.0);
        assert_eq!(shoelace_area(&unit_square().reversed()), 1.0);
    }

    #[test]
    fn degenerate_input_rejected() {
        assert!(matches!(
            Polygon::from_xy(&[(0.0, 0.0), (1.0, 1.0)]),
            Err(Error::DegeneratePolygon(_))
        ));
        assert!(matches!(
            shoelace_area_of(&[Point2::new(0.0, 0.0)]),
            Err(Error::DegeneratePolygon(_))
        ));
        assert!(matches!(
            Polygon::from_xy(&[(0.0, 0.0), (f64::NAN, 1.0), (1.0, 0.0)]),
            Err(Error::NonFinite(1))
        ));
        assert!(mean_point(&[]).is_err());
    }

    #[test]
    fn centroid_examples() {
        assert_eq!(centroid(&unit_square()), Point2::new(0.5, 0.5));
        let same = Polygon::from_xy(&[(2.0, 2.0); 3]).unwrap();
        assert_eq!(centroid(&same), Point2::new(2.0, 2.0));
        let tri = Polygon::from_xy(&[(0.0, 0.0), (3.0, 0.0), (0.0, 3.0)]).unwrap();
        assert_eq!(centroid(&tri), Point2::new(1.0, 1.0));
    }

    #[test]
    fn polar_examples() {
        let o = Point2::new(0.0, 0.0);
        let p = Polygon::from_xy(&[(3.0, 4.0), (-1.0, 1.0), (0.0, 1.0)]).unwrap();
        let polar = to_polar(&p, o).unwrap();
        // sorted by angle: (3,4) ~53.13, (0,1) 90, (-1,1) 135
        assert!((polar.vertices[0].distance - 5.0).abs() < 1e-12);
        assert!((polar.vertices[1].theta - 90.0).abs() < 1e-12);
        assert!((polar.vertices[1].distance - 1.0).abs() < 1e-12);
        assert!((polar.vertices[2].theta - 135.0).abs() < 1e-12);
    }

    #[test]
    fn quadrant_angles_are_full_circle() {
        assert!((theta_degrees(-1.0, -1.0) - 225.0).abs() < 1e-12);
        assert!((theta_degrees(1.0, -1.0) - 315.0).abs() < 1e-12);
        assert_eq!(theta_degrees(1.0, 0.0), 0.0);
        assert!(theta_degrees(1.0, -1e-300) < 360.0);
    }

    #[test]
    fn vertex_at_center_is_an_error() {
        let p = Polygon::from_xy(&[(0.0, 0.0), (1.0, 0.0), (0.0, 1.0)]).unwrap();
        assert_eq!(
            to_polar(&p, Point2::new(0.0, 0.0)).unwrap_err(),
            Error::VertexAtCenter { index: 0 }
        );
    }

    #[test]
    fn sort_examples() {
        let c = Point2::new(0.5, 0.5);
        let scrambled =
            Polygon::from_xy(&[(0.0, 0.0), (1.0, 1.0), (1.0, 0.0), (0.0, 1.0)]).unwrap();
        let sorted = sort_by_theta(&scrambled, c).unwrap();
        let expected =
            Polygon::from_xy(&[(1.0, 1.0), (0.0, 1.0), (0.0, 0.0), (1.0, 0.0)]).unwrap();
        assert_eq!(sorted, expected);
        assert_eq!(sort_by_theta(&sorted, c).unwrap(), sorted);

        let ties = Polygon::from_xy(&[(2.0, 0.0), (0.0, 1.0), (1.0, 0.0)]).unwrap();
        let s = sort_by_theta(&ties, Point2::new(0.0, 0.0)).unwrap();
        assert_eq!(s.vertices()[0], Point2::new(1.0, 0.0));
        assert_eq!(s.vertices()[1], Point2::new(2.0, 0.0));
    }

    #[test]
    fn self_intersection_examples() {
        assert!(!is_self_intersecting(&unit_square()));
        let bowtie =
            Polygon::from_xy(&[(0.0, 0.0), (1.0, 1.0), (1.0, 0.0), (0.0, 1.0)]).unwrap();
        assert!(is_self_intersecting(&bowtie));
        let l_shape = Polygon::from_xy(&[
            (0.0, 0.0),
            (2.0, 0.0),
            (2.0, 1.0),
            (1.0, 1.0),
            (1.0, 2.0),
            (0.0, 2.0),
        ])
        .unwrap();
        assert!(!is_self_intersecting(&l_shape));
        // a vertex touching a non-adjacent edge is not simple
        let touch = Polygon::from_xy(&[
            (0.0, 0.0),
            (2.0, 0.0),
            (2.0, 2.0),
            (1.0, 0.0),
            (0.0, 2.0),
        ])
        .unwrap();
        assert!(is_self_intersecting(&touch));
    }

    #[test]
    fn closed_containment() {
        let sq = unit_square();
        assert!(sq.contains_closed(Point2::new(0.5, 0.5)));
        assert!(sq.contains_closed(Point2::new(0.0, 0.5)));
        assert!(sq.contains_closed(Point2::new(1.0, 1.0)));
        assert!(!sq.contains_closed(Point2::new(1.5, 0.5)));
    }

    #[test]
    fn serde_as_coordinate_pairs() {
        let json = serde_json::to_string(&unit_square()).unwrap();
        assert_eq!(json, "[[0.0,0.0],[1.0,0.0],[1.0,1.0],[0.0,1.0]]");
        let back: Polygon = serde_json::from_str(&json).unwrap();
        assert_eq!(back, unit_square());
        assert!(serde_json::from_str::<Polygon>("[[0,0],[1,1]]").is_err());
    }
}
