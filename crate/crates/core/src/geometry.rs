//! Planar primitives shared by the mesh and cut-cell code.

use crate::error::{Error, Result};

pub type Point = [f64; 2];

#[inline]
pub fn sub(a: Point, b: Point) -> Point {
    [a[0] - b[0], a[1] - b[1]]
}

#[inline]
pub fn add(a: Point, b: Point) -> Point {
    [a[0] + b[0], a[1] + b[1]]
}

#[inline]
pub fn scale(a: Point, s: f64) -> Point {
    [a[0] * s, a[1] * s]
}

#[inline]
pub fn dot(a: Point, b: Point) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

#[inline]
pub fn norm(a: Point) -> f64 {
    a[0].hypot(a[1])
}

#[inline]
pub fn distance(a: Point, b: Point) -> f64 {
    norm(sub(a, b))
}

#[inline]
pub fn lerp(a: Point, b: Point, t: f64) -> Point {
    [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]
}

/// z-component of (a - o) x (b - o); positive when o, a, b turn left.
#[inline]
pub fn orient(o: Point, a: Point, b: Point) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

/// Shoelace formula. Positive for counterclockwise vertex order.
pub fn signed_area(poly: &[Point]) -> f64 {
    let n = poly.len();
    if n < 3 {
        return 0.0;
    }
    // Shift to the first vertex to limit cancellation for small polygons
    // far from the origin.
    let o = poly[0];
    let mut s = 0.0;
    for i in 1..n - 1 {
        s += orient(o, poly[i], poly[i + 1]);
    }
    0.5 * s
}

pub fn centroid(poly: &[Point]) -> Point {
    let n = poly.len() as f64;
    let s = poly.iter().fold([0.0, 0.0], |acc, p| add(acc, *p));
    scale(s, 1.0 / n)
}

/// Distance from `p` to the closed segment `a`-`b`.
pub fn point_segment_distance(p: Point, a: Point, b: Point) -> f64 {
    let ab = sub(b, a);
    let len2 = dot(ab, ab);
    if len2 == 0.0 {
        return distance(p, a);
    }
    let t = (dot(sub(p, a), ab) / len2).clamp(0.0, 1.0);
    distance(p, lerp(a, b, t))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundingBox {
    pub min: Point,
    pub max: Point,
}

impl BoundingBox {
    pub fn of(points: &[Point]) -> Self {
        let mut min = [f64::INFINITY; 2];
        let mut max = [f64::NEG_INFINITY; 2];
        for p in points {
            for d in 0..2 {
                min[d] = min[d].min(p[d]);
                max[d] = max[d].max(p[d]);
            }
        }
        BoundingBox { min, max }
    }

    pub fn overlaps(&self, other: &BoundingBox, pad: f64) -> bool {
        (0..2).all(|d| self.min[d] <= other.max[d] + pad && other.min[d] <= self.max[d] + pad)
    }
}

/// A strictly convex polygon with counterclockwise vertices. Used for the
/// overlapping domain; its boundary is the interface.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvexPolygonDomain {
    vertices: Vec<Point>,
    normals: Vec<Point>,
}

impl ConvexPolygonDomain {
    pub fn new(vertices: Vec<Point>) -> Result<Self> {
        let n = vertices.len();
        if n < 3 {
            return Err(Error::NotConvex(format!("{n} vertices")));
        }
        for i in 0..n {
            let c = orient(vertices[i], vertices[(i + 1) % n], vertices[(i + 2) % n]);
            if !(c > 0.0) {
                return Err(Error::NotConvex(format!(
                    "turn at vertex {} has cross product {c:e}",
                    (i + 1) % n
                )));
            }
        }
        // A polygon whose turns are all left can still wind twice.
        let total: f64 = (0..n)
            .map(|i| {
                let e0 = sub(vertices[(i + 1) % n], vertices[i]);
                let e1 = sub(vertices[(i + 2) % n], vertices[(i + 1) % n]);
                (e0[0] * e1[1] - e0[1] * e1[0]).atan2(dot(e0, e1))
            })
            .sum();
        if (total - 2.0 * std::f64::consts::PI).abs() > 1e-9 {
            return Err(Error::NotConvex("polygon winds more than once".into()));
        }
        let normals = (0..n)
            .map(|i| {
                let e = sub(vertices[(i + 1) % n], vertices[i]);
                let l = norm(e);
                [e[1] / l, -e[0] / l]
            })
            .collect();
        Ok(ConvexPolygonDomain { vertices, normals })
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    /// Edge `i` runs from vertex `i` to vertex `i + 1`.
    pub fn edge(&self, i: usize) -> (Point, Point) {
        let n = self.vertices.len();
        (self.vertices[i], self.vertices[(i + 1) % n])
    }

    pub fn num_edges(&self) -> usize {
        self.vertices.len()
    }

    /// Unit outward normal of edge `i`.
    pub fn outward_normal(&self, i: usize) -> Point {
        self.normals[i]
    }

    pub fn area(&self) -> f64 {
        signed_area(&self.vertices)
    }

    pub fn perimeter(&self) -> f64 {
        (0..self.num_edges())
            .map(|i| {
                let (a, b) = self.edge(i);
                distance(a, b)
            })
            .sum()
    }

    pub fn centroid(&self) -> Point {
        centroid(&self.vertices)
    }

    pub fn bounding_box(&self) -> BoundingBox {
        BoundingBox::of(&self.vertices)
    }

    /// Closed containment with an absolute distance tolerance.
    pub fn contains(&self, p: Point, tol: f64) -> bool {
        (0..self.num_edges()).all(|i| {
            let (a, _) = self.edge(i);
            dot(sub(p, a), self.normals[i]) <= tol
        })
    }

    pub fn distance_to_boundary(&self, p: Point) -> f64 {
        (0..self.num_edges())
            .map(|i| {
                let (a, b) = self.edge(i);
                point_segment_distance(p, a, b)
            })
            .fold(f64::INFINITY, f64::min)
    }

    pub fn translated(&self, shift: Point) -> Result<Self> {
        Self::new(self.vertices.iter().map(|v| add(*v, shift)).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shoelace_unit_square() {
        let sq = [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]];
        assert_eq!(signed_area(&sq), 1.0);
        let rev: Vec<_> = sq.iter().rev().copied().collect();
        assert_eq!(signed_area(&rev), -1.0);
    }

    #[test]
    fn rejects_clockwise_and_collinear() {
        assert!(ConvexPolygonDomain::new(vec![[0.0, 0.0], [0.0, 1.0], [1.0, 0.0]]).is_err());
        assert!(ConvexPolygonDomain::new(vec![
            [0.0, 0.0],
            [0.5, 0.0],
            [1.0, 0.0],
            [0.0, 1.0]
        ])
        .is_err());
    }

    #[test]
    fn normals_point_outward() {
        let d = ConvexPolygonDomain::new(vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
            .unwrap();
        let c = d.centroid();
        for i in 0..4 {
            let (a, b) = d.edge(i);
            let m = lerp(a, b, 0.5);
            assert!(dot(sub(c, m), d.outward_normal(i)) < 0.0);
            assert!((norm(d.outward_normal(i)) - 1.0).abs() < 1e-15);
        }
        assert!(d.contains([0.5, 0.5], 0.0));
        assert!(d.contains([1.0, 0.5], 1e-14));
        assert!(!d.contains([1.1, 0.5], 1e-14));
        assert!((d.distance_to_boundary([0.5, 0.25]) - 0.25).abs() < 1e-15);
    }
}
