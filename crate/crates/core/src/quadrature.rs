//! Quadrature rules in physical coordinates.
//!
//! Triangle rules are collapsed tensor products of Gauss-Legendre rules, so
//! every weight is positive on a positively oriented triangle. Cut regions
//! are integrated by concatenating rules of sub-triangles, and the part of a
//! cell outside the overlapping domain by appending a negated rule for the
//! inside part; such composite rules carry signed weights.

use crate::error::{Error, Result};
use crate::geometry::{distance, lerp, orient, Point};

pub const MAX_TRIANGLE_ORDER: usize = 10;
pub const MAX_SEGMENT_ORDER: usize = 20;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct QuadratureRule {
    pub points: Vec<Point>,
    pub weights: Vec<f64>,
    /// Polynomial degree integrated exactly.
    pub degree: usize,
}

impl QuadratureRule {
    pub fn empty(degree: usize) -> Self {
        QuadratureRule {
            points: Vec::new(),
            weights: Vec::new(),
            degree,
        }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Sum of the weights, i.e. the (signed) measure of the region.
    pub fn measure(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn integrate(&self, f: impl Fn(Point) -> f64) -> f64 {
        self.points
            .iter()
            .zip(&self.weights)
            .map(|(p, w)| w * f(*p))
            .sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (Point, f64)> + '_ {
        self.points.iter().copied().zip(self.weights.iter().copied())
    }

    pub fn append(&mut self, other: &QuadratureRule) {
        self.points.extend_from_slice(&other.points);
        self.weights.extend_from_slice(&other.weights);
        self.degree = self.degree.min(other.degree);
    }

    pub fn append_negated(&mut self, other: &QuadratureRule) {
        self.points.extend_from_slice(&other.points);
        self.weights.extend(other.weights.iter().map(|w| -w));
        self.degree = self.degree.min(other.degree);
    }
}

/// Gauss-Legendre nodes and weights on [0, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        // Chebyshev-like initial guess, refined by Newton on P_n.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        // map [-1, 1] -> [0, 1]
        nodes[i] = 0.5 * (1.0 - x);
        nodes[n - 1 - i] = 0.5 * (1.0 + x);
        weights[i] = 0.5 * w;
        weights[n - 1 - i] = 0.5 * w;
    }
    (nodes, weights)
}

fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let p = if n == 0 { 1.0 } else { p1 };
    let d = n as f64 * (x * p - p0) / (x * x - 1.0);
    (p, d)
}

/// Rule on the reference triangle (0,0), (1,0), (0,1), exact for total
/// degree `order`.
pub fn reference_triangle_rule(order: usize) -> Result<QuadratureRule> {
    if !(1..=MAX_TRIANGLE_ORDER).contains(&order) {
        return Err(Error::invalid(
            "quad-order",
            format!("triangle rule order {order} outside 1..={MAX_TRIANGLE_ORDER}"),
        ));
    }
    // x = s, y = t (1 - s); the Jacobian (1 - s) adds one degree in s.
    let n = (order + 2).div_ceil(2);
    let (g, w) = gauss_legendre(n);
    let mut rule = QuadratureRule::empty(order);
    for i in 0..n {
        for j in 0..n {
            let s = g[i];
            let t = g[j];
            rule.points.push([s, t * (1.0 - s)]);
            rule.weights.push(w[i] * w[j] * (1.0 - s));
        }
    }
    Ok(rule)
}

/// Maps a reference rule onto the triangle `a`, `b`, `c`. The weights carry
/// the sign of the triangle's orientation.
pub fn map_triangle_rule(reference: &QuadratureRule, tri: [Point; 3]) -> QuadratureRule {
    let [a, b, c] = tri;
    let det = orient(a, b, c);
    let mut rule = QuadratureRule::empty(reference.degree);
    rule.points.reserve(reference.len());
    for (xi, w) in reference.iter() {
        rule.points.push([
            a[0] + xi[0] * (b[0] - a[0]) + xi[1] * (c[0] - a[0]),
            a[1] + xi[0] * (b[1] - a[1]) + xi[1] * (c[1] - a[1]),
        ]);
        rule.weights.push(w * det);
    }
    rule
}

/// Gauss-Legendre rule on the segment `a`-`b`, exact for degree `order`.
/// Weights sum to the segment length.
pub fn segment_rule(a: Point, b: Point, order: usize) -> Result<QuadratureRule> {
    if order > MAX_SEGMENT_ORDER {
        return Err(Error::invalid(
            "quad-order",
            format!("segment rule order {order} exceeds {MAX_SEGMENT_ORDER}"),
        ));
    }
    let n = (order + 1).div_ceil(2).max(1);
    let (g, w) = gauss_legendre(n);
    let len = distance(a, b);
    Ok(QuadratureRule {
        points: g.iter().map(|&t| lerp(a, b, t)).collect(),
        weights: w.iter().map(|&wi| wi * len).collect(),
        degree: order,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn factorial(n: u32) -> f64 {
        (1..=n).map(f64::from).product()
    }

    #[test]
    fn gauss_legendre_integrates_monomials() {
        for n in 1..=11 {
            let (x, w) = gauss_legendre(n);
            for p in 0..2 * n {
                let v: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(p as i32)).sum();
                assert!((v - 1.0 / (p as f64 + 1.0)).abs() < 1e-15, "n={n} p={p}");
            }
        }
    }

    #[test]
    fn reference_rule_unit_integral() {
        for order in 1..=MAX_TRIANGLE_ORDER {
            let r = reference_triangle_rule(order).unwrap();
            assert!((r.measure() - 0.5).abs() < 1e-15);
            assert!(r.weights.iter().all(|w| *w > 0.0));
        }
    }

    #[test]
    fn reference_rule_x2y2() {
        let r = reference_triangle_rule(4).unwrap();
        let v = r.integrate(|p| p[0] * p[0] * p[1] * p[1]);
        assert!((v - 1.0 / 180.0).abs() < 1e-15);
    }

    #[test]
    fn reference_rule_exact_to_order() {
        for order in 1..=MAX_TRIANGLE_ORDER {
            let r = reference_triangle_rule(order).unwrap();
            for a in 0..=order as u32 {
                for b in 0..=(order as u32 - a) {
                    let exact = factorial(a) * factorial(b) / factorial(a + b + 2);
                    let v = r.integrate(|p| p[0].powi(a as i32) * p[1].powi(b as i32));
                    assert!((v - exact).abs() < 1e-13, "order {order}: x^{a} y^{b}");
                }
            }
        }
    }

    #[test]
    fn order_out_of_range() {
        assert!(reference_triangle_rule(0).is_err());
        assert!(reference_triangle_rule(11).is_err());
        assert!(segment_rule([0.0, 0.0], [1.0, 0.0], 21).is_err());
    }

    #[test]
    fn segment_rule_basics() {
        let a = [0.1, 0.2];
        let b = [0.4, 0.6];
        let r = segment_rule(a, b, 8).unwrap();
        assert!((r.measure() - 0.5).abs() < 1e-14);
        let cubic = segment_rule([0.0, 0.0], [1.0, 0.0], 3).unwrap();
        assert_eq!(cubic.len(), 2);
        assert!((cubic.integrate(|p| p[0].powi(3)) - 0.25).abs() < 1e-15);
        let f = |p: Point| p[0] * p[0] * p[1] + 3.0 * p[1];
        let fwd = r.integrate(f);
        let rev = segment_rule(b, a, 8).unwrap().integrate(f);
        assert!((fwd - rev).abs() < 1e-15);
    }

    #[test]
    fn mapped_rule_signed() {
        let r = reference_triangle_rule(2).unwrap();
        let ccw = map_triangle_rule(&r, [[0.0, 0.0], [2.0, 0.0], [0.0, 1.0]]);
        let cw = map_triangle_rule(&r, [[0.0, 0.0], [0.0, 1.0], [2.0, 0.0]]);
        assert!((ccw.measure() - 1.0).abs() < 1e-15);
        assert!((cw.measure() + 1.0).abs() < 1e-15);
    }
}
