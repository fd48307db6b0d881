//! Planar primitives shared by the rest of the crate: points, character
//! quadrilaterals, axis-aligned boxes, oriented rectangles, polygon area and
//! IoU, convex hulls and minimum-area enclosing rectangles.
//!
//! All polygons are stored counter-clockwise (positive shoelace sum for the
//! pixel coordinate convention used throughout: x right, y down). Everything
//! here is a pure function over immutable inputs.

use serde::{Deserialize, Serialize};

/// A 2D point in pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn distance(&self, other: &Point) -> f64 {
        ((self.x - other.x).powi(2) + (self.y - other.y).powi(2)).sqrt()
    }
}

impl std::ops::Add for Point {
    type Output = Point;
    fn add(self, rhs: Point) -> Point {
        Point::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl std::ops::Sub for Point {
    type Output = Point;
    fn sub(self, rhs: Point) -> Point {
        Point::new(self.x - rhs.x, self.y - rhs.y)
    }
}

/// Cross product of (b - a) and (c - a); positive for a left turn.
pub fn cross(a: Point, b: Point, c: Point) -> f64 {
    (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x)
}

/// Signed area of a polygon (shoelace / 2). Positive for CCW winding.
pub fn signed_area(poly: &[Point]) -> f64 {
    let n = poly.len();
    if n < 3 {
        return 0.0;
    }
    let mut sum = 0.0;
    for i in 0..n {
        let p = poly[i];
        let q = poly[(i + 1) % n];
        sum += p.x * q.y - q.x * p.y;
    }
    sum / 2.0
}

/// Unsigned area of a polygon.
pub fn polygon_area(poly: &[Point]) -> f64 {
    signed_area(poly).abs()
}

/// A character quadrilateral, corners stored counter-clockwise.
///
/// The constructor normalizes winding, so downstream clipping and area code
/// can rely on a single convention.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quad {
    corners: [Point; 4],
}

impl Quad {
    /// Builds a quad, reversing corner order if the input winding is
    /// clockwise. The first corner stays first.
    pub fn new(corners: [Point; 4]) -> Self {
        let mut corners = corners;
        if signed_area(&corners) < 0.0 {
            corners.swap(1, 3);
        }
        Quad { corners }
    }

    pub fn corners(&self) -> &[Point; 4] {
        &self.corners
    }

    pub fn centroid(&self) -> Point {
        quad_centroid(self)
    }

    pub fn area(&self) -> f64 {
        polygon_area(&self.corners)
    }

    /// Axis-aligned envelope of the four corners.
    pub fn aabb(&self) -> AABox {
        let xs = self.corners.iter().map(|p| p.x);
        let ys = self.corners.iter().map(|p| p.y);
        AABox {
            min: Point::new(xs.clone().fold(f64::INFINITY, f64::min), ys.clone().fold(f64::INFINITY, f64::min)),
            max: Point::new(xs.fold(f64::NEG_INFINITY, f64::max), ys.fold(f64::NEG_INFINITY, f64::max)),
        }
    }

    pub fn translated(&self, dx: f64, dy: f64) -> Quad {
        Quad {
            corners: self.corners.map(|p| Point::new(p.x + dx, p.y + dy)),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.corners.iter().all(Point::is_finite)
    }
}

/// Axis-aligned box with `min.x <= max.x` and `min.y <= max.y`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AABox {
    pub min: Point,
    pub max: Point,
}

impl AABox {
    pub fn width(&self) -> f64 {
        self.max.x - self.min.x
    }

    pub fn height(&self) -> f64 {
        self.max.y - self.min.y
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn intersects(&self, other: &AABox) -> bool {
        self.min.x <= other.max.x
            && other.min.x <= self.max.x
            && self.min.y <= other.max.y
            && other.min.y <= self.max.y
    }

    pub fn inflated(&self, pad: f64) -> AABox {
        AABox {
            min: Point::new(self.min.x - pad, self.min.y - pad),
            max: Point::new(self.max.x + pad, self.max.y + pad),
        }
    }
}

/// An oriented rectangle: center, side lengths and rotation angle in
/// radians, normalized to [-pi/2, pi/2).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrientedRect {
    pub center: Point,
    pub width: f64,
    pub height: f64,
    pub angle: f64,
}

impl OrientedRect {
    /// Corner points, counter-clockwise.
    pub fn corners(&self) -> [Point; 4] {
        let (s, c) = self.angle.sin_cos();
        let hw = self.width / 2.0;
        let hh = self.height / 2.0;
        // Local corners in TL, TR, BR, BL order (CCW under y-down shoelace).
        let local = [(-hw, -hh), (hw, -hh), (hw, hh), (-hw, hh)];
        local.map(|(lx, ly)| {
            Point::new(
                self.center.x + lx * c - ly * s,
                self.center.y + lx * s + ly * c,
            )
        })
    }

    pub fn area(&self) -> f64 {
        self.width * self.height
    }

    /// True when `p` is inside the rectangle, expanded by `tol` on each side.
    pub fn contains(&self, p: Point, tol: f64) -> bool {
        let (s, c) = self.angle.sin_cos();
        let dx = p.x - self.center.x;
        let dy = p.y - self.center.y;
        let lx = dx * c + dy * s;
        let ly = -dx * s + dy * c;
        lx.abs() <= self.width / 2.0 + tol && ly.abs() <= self.height / 2.0 + tol
    }
}

/// Arithmetic mean of the four corners.
pub fn quad_centroid(q: &Quad) -> Point {
    let c = q.corners();
    Point::new(
        (c[0].x + c[1].x + c[2].x + c[3].x) / 4.0,
        (c[0].y + c[1].y + c[2].y + c[3].y) / 4.0,
    )
}

/// Minimum Euclidean distance over the 16 corner pairs of two quads.
pub fn min_corner_distance(a: &Quad, b: &Quad) -> f64 {
    let mut best = f64::INFINITY;
    for pa in a.corners() {
        for pb in b.corners() {
            let d = pa.distance(pb);
            if d < best {
                best = d;
            }
        }
    }
    best
}

/// Area of the intersection of two convex CCW polygons.
///
/// Sutherland-Hodgman clipping; an empty intersection yields 0. The pair is
/// ordered canonically before clipping so the result is exactly symmetric in
/// its arguments.
pub fn polygon_intersection_area(a: &[Point], b: &[Point]) -> f64 {
    let (subject, clip) = if lex_le(a, b) { (a, b) } else { (b, a) };
    let clipped = clip_convex(subject, clip);
    polygon_area(&clipped)
}

fn lex_le(a: &[Point], b: &[Point]) -> bool {
    let ka = a.iter().flat_map(|p| [p.x, p.y]);
    let kb = b.iter().flat_map(|p| [p.x, p.y]);
    for (x, y) in ka.zip(kb) {
        if x < y {
            return true;
        }
        if x > y {
            return false;
        }
    }
    a.len() <= b.len()
}

/// Clips `subject` against every edge of the convex CCW polygon `clip`.
fn clip_convex(subject: &[Point], clip: &[Point]) -> Vec<Point> {
    let mut output: Vec<Point> = subject.to_vec();
    let m = clip.len();
    for i in 0..m {
        if output.is_empty() {
            break;
        }
        let e0 = clip[i];
        let e1 = clip[(i + 1) % m];
        let input = std::mem::take(&mut output);
        let n = input.len();
        for j in 0..n {
            let cur = input[j];
            let prev = input[(j + n - 1) % n];
            let cur_in = cross(e0, e1, cur) >= 0.0;
            let prev_in = cross(e0, e1, prev) >= 0.0;
            if cur_in {
                if !prev_in {
                    output.push(line_intersection(prev, cur, e0, e1));
                }
                output.push(cur);
            } else if prev_in {
                output.push(line_intersection(prev, cur, e0, e1));
            }
        }
    }
    output
}

/// Intersection of segment (p0, p1) with the infinite line through (q0, q1).
fn line_intersection(p0: Point, p1: Point, q0: Point, q1: Point) -> Point {
    let d = (p1.x - p0.x) * (q1.y - q0.y) - (p1.y - p0.y) * (q1.x - q0.x);
    if d.abs() < 1e-300 {
        return p0;
    }
    let t = ((q0.x - p0.x) * (q1.y - q0.y) - (q0.y - p0.y) * (q1.x - q0.x)) / d;
    Point::new(p0.x + t * (p1.x - p0.x), p0.y + t * (p1.y - p0.y))
}

/// Intersection over union of two convex CCW polygons, in [0, 1].
///
/// Defined as 0 when both polygons are degenerate.
pub fn iou(a: &[Point], b: &[Point]) -> f64 {
    let area_a = polygon_area(a);
    let area_b = polygon_area(b);
    if area_a + area_b == 0.0 {
        return 0.0;
    }
    let inter = polygon_intersection_area(a, b);
    let union = area_a + area_b - inter;
    if union <= 0.0 {
        return 0.0;
    }
    (inter / union).clamp(0.0, 1.0)
}

/// IoU of two character quads, computed on the quads themselves.
pub fn quad_iou(a: &Quad, b: &Quad) -> f64 {
    iou(a.corners(), b.corners())
}

/// Convex hull by Andrew's monotone chain.
///
/// Returns hull vertices in CCW order starting at the lexicographically
/// smallest point; interior and collinear-redundant points are dropped. A
/// single point yields itself, a collinear set its two endpoints.
pub fn convex_hull(points: &[Point]) -> Vec<Point> {
    assert!(!points.is_empty(), "convex_hull needs at least one point");
    let mut pts: Vec<Point> = points.to_vec();
    pts.sort_by(|a, b| (a.x, a.y).partial_cmp(&(b.x, b.y)).unwrap());
    pts.dedup_by(|a, b| a.x == b.x && a.y == b.y);
    let n = pts.len();
    if n <= 2 {
        return pts;
    }

    let mut lower: Vec<Point> = Vec::new();
    for &p in &pts {
        while lower.len() >= 2 && cross(lower[lower.len() - 2], lower[lower.len() - 1], p) <= 0.0 {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<Point> = Vec::new();
    for &p in pts.iter().rev() {
        while upper.len() >= 2 && cross(upper[upper.len() - 2], upper[upper.len() - 1], p) <= 0.0 {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    if lower.len() + upper.len() == 2 {
        // All points collinear: keep the two extreme endpoints.
        return vec![lower[0], upper[0]];
    }
    lower.extend(upper);
    lower
}

/// Smallest-area oriented rectangle enclosing `points`.
///
/// Rotating calipers over the hull edges: the optimum has one side collinear
/// with a hull edge. Candidate angles are folded into [0, pi/2) (a rectangle
/// is invariant under quarter-turns up to a width/height swap) and ties are
/// broken by the smallest angle. Degenerate inputs yield a zero-width or
/// zero-height rectangle spanning the points.
pub fn min_area_rect(points: &[Point]) -> OrientedRect {
    let hull = convex_hull(points);
    if hull.len() == 1 {
        return OrientedRect {
            center: hull[0],
            width: 0.0,
            height: 0.0,
            angle: 0.0,
        };
    }

    let mut angles: Vec<f64> = Vec::with_capacity(hull.len());
    let m = hull.len();
    for i in 0..m {
        let d = hull[(i + 1) % m] - hull[i];
        if d.x == 0.0 && d.y == 0.0 {
            continue;
        }
        let mut a = d.y.atan2(d.x).rem_euclid(std::f64::consts::FRAC_PI_2);
        if a >= std::f64::consts::FRAC_PI_2 {
            a = 0.0;
        }
        angles.push(a);
    }
    angles.sort_by(|a, b| a.partial_cmp(b).unwrap());
    angles.dedup();

    let mut best: Option<(f64, f64, OrientedRect)> = None; // (area, angle, rect)
    for &angle in &angles {
        let rect = rect_at_angle(&hull, angle);
        let area = rect.area();
        let better = match &best {
            None => true,
            Some((ba, _, _)) => area < *ba - 1e-12 * (1.0 + ba.abs()),
        };
        // Equal-area candidates are visited in ascending angle order, so the
        // first one wins the tie.
        if better {
            best = Some((area, angle, rect));
        }
    }
    best.expect("hull with >= 2 points has at least one edge").2
}

fn rect_at_angle(hull: &[Point], angle: f64) -> OrientedRect {
    let (s, c) = angle.sin_cos();
    let mut min_u = f64::INFINITY;
    let mut max_u = f64::NEG_INFINITY;
    let mut min_v = f64::INFINITY;
    let mut max_v = f64::NEG_INFINITY;
    for p in hull {
        let u = p.x * c + p.y * s;
        let v = -p.x * s + p.y * c;
        min_u = min_u.min(u);
        max_u = max_u.max(u);
        min_v = min_v.min(v);
        max_v = max_v.max(v);
    }
    let cu = (min_u + max_u) / 2.0;
    let cv = (min_v + max_v) / 2.0;
    OrientedRect {
        center: Point::new(cu * c - cv * s, cu * s + cv * c),
        width: max_u - min_u,
        height: max_v - min_v,
        angle,
    }
}
