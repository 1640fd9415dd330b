//! Lagrange shape functions on the reference triangle (0,0), (1,0), (0,1).
//!
//! Node order: the three vertices, then `k - 1` nodes on each edge
//! (0,1), (1,2), (2,0) running from the first to the second vertex, then
//! interior nodes. Shape functions are products of one-dimensional
//! Lagrange factors in the barycentric coordinates, which gives exact
//! values, gradients and Hessians by forward differentiation.

use crate::error::{Error, Result};
use crate::geometry::Point;

pub const MAX_DEGREE: usize = 3;

/// Value, gradient and Hessian of a function of (x, y).
#[derive(Clone, Copy, Debug, PartialEq)]
struct Jet {
    v: f64,
    g: [f64; 2],
    h: [[f64; 2]; 2],
}

impl Jet {
    fn constant(v: f64) -> Self {
        Jet {
            v,
            g: [0.0; 2],
            h: [[0.0; 2]; 2],
        }
    }

    fn linear(v: f64, g: [f64; 2]) -> Self {
        Jet { v, g, h: [[0.0; 2]; 2] }
    }

    fn mul(self, o: Jet) -> Jet {
        let mut h = [[0.0; 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                h[i][j] = self.v * o.h[i][j] + o.v * self.h[i][j] + self.g[i] * o.g[j] + o.g[i] * self.g[j];
            }
        }
        Jet {
            v: self.v * o.v,
            g: [self.v * o.g[0] + o.v * self.g[0], self.v * o.g[1] + o.v * self.g[1]],
            h,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BasisValues {
    pub values: Vec<f64>,
    pub gradients: Vec<[f64; 2]>,
    pub hessians: Vec<[[f64; 2]; 2]>,
}

#[derive(Clone, Debug)]
pub struct LagrangeBasis {
    degree: usize,
    /// Barycentric multi-index of each node.
    indices: Vec<[usize; 3]>,
}

/// Number of shape functions of degree `k` on a triangle.
pub fn num_shape_functions(k: usize) -> usize {
    (k + 1) * (k + 2) / 2
}

impl LagrangeBasis {
    pub fn new(degree: usize) -> Result<Self> {
        if !(1..=MAX_DEGREE).contains(&degree) {
            return Err(Error::invalid(
                "k",
                format!("Lagrange degree {degree} outside 1..={MAX_DEGREE}"),
            ));
        }
        let k = degree;
        let mut indices = vec![[k, 0, 0], [0, k, 0], [0, 0, k]];
        for j in 1..k {
            indices.push([k - j, j, 0]);
        }
        for j in 1..k {
            indices.push([0, k - j, j]);
        }
        for j in 1..k {
            indices.push([j, 0, k - j]);
        }
        for a in 1..k {
            for b in 1..k - a {
                indices.push([k - a - b, a, b]);
            }
        }
        debug_assert_eq!(indices.len(), num_shape_functions(k));
        Ok(LagrangeBasis { degree, indices })
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// Reference coordinates of the nodes.
    pub fn nodes(&self) -> Vec<Point> {
        let k = self.degree as f64;
        self.indices
            .iter()
            .map(|m| [m[1] as f64 / k, m[2] as f64 / k])
            .collect()
    }

    /// Evaluates all shape functions at a reference point. Points outside
    /// the reference triangle are allowed.
    pub fn eval(&self, xi: Point) -> BasisValues {
        let k = self.degree as f64;
        let lambda = [
            Jet::linear(1.0 - xi[0] - xi[1], [-1.0, -1.0]),
            Jet::linear(xi[0], [1.0, 0.0]),
            Jet::linear(xi[1], [0.0, 1.0]),
        ];
        // factors[i][m] = prod_{j<m} (k λ_i - j) / (j + 1)
        let mut factors = vec![[Jet::constant(1.0); 3]; self.degree + 1];
        for i in 0..3 {
            for m in 1..=self.degree {
                let j = (m - 1) as f64;
                let l = lambda[i];
                let f = Jet::linear((k * l.v - j) / (j + 1.0), [k * l.g[0] / (j + 1.0), k * l.g[1] / (j + 1.0)]);
                factors[m][i] = factors[m - 1][i].mul(f);
            }
        }
        let n = self.len();
        let mut out = BasisValues {
            values: Vec::with_capacity(n),
            gradients: Vec::with_capacity(n),
            hessians: Vec::with_capacity(n),
        };
        for m in &self.indices {
            let phi = factors[m[0]][0].mul(factors[m[1]][1]).mul(factors[m[2]][2]);
            out.values.push(phi.v);
            out.gradients.push(phi.g);
            out.hessians.push(phi.h);
        }
        out
    }
}

/// Affine map from the reference triangle onto a physical cell.
#[derive(Clone, Copy, Debug)]
pub struct AffineMap {
    pub origin: Point,
    /// Columns are the edge vectors b - a and c - a.
    pub jacobian: [[f64; 2]; 2],
    pub inverse: [[f64; 2]; 2],
}

impl AffineMap {
    pub fn new(tri: [Point; 3]) -> Self {
        let [a, b, c] = tri;
        let j = [[b[0] - a[0], c[0] - a[0]], [b[1] - a[1], c[1] - a[1]]];
        let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
        let inverse = [[j[1][1] / det, -j[0][1] / det], [-j[1][0] / det, j[0][0] / det]];
        AffineMap {
            origin: a,
            jacobian: j,
            inverse,
        }
    }

    pub fn to_reference(&self, x: Point) -> Point {
        let d = [x[0] - self.origin[0], x[1] - self.origin[1]];
        let m = &self.inverse;
        [m[0][0] * d[0] + m[0][1] * d[1], m[1][0] * d[0] + m[1][1] * d[1]]
    }

    pub fn to_physical(&self, xi: Point) -> Point {
        let j = &self.jacobian;
        [
            self.origin[0] + j[0][0] * xi[0] + j[0][1] * xi[1],
            self.origin[1] + j[1][0] * xi[0] + j[1][1] * xi[1],
        ]
    }

    /// Pulls reference derivatives back to physical ones in place:
    /// grad = J^{-T} grad_ref, H = J^{-T} H_ref J^{-1}.
    pub fn push_forward(&self, v: &mut BasisValues) {
        let m = &self.inverse;
        for g in v.gradients.iter_mut() {
            *g = [m[0][0] * g[0] + m[1][0] * g[1], m[0][1] * g[0] + m[1][1] * g[1]];
        }
        for h in v.hessians.iter_mut() {
            let mut r = [[0.0; 2]; 2];
            for i in 0..2 {
                for j in 0..2 {
                    let mut s = 0.0;
                    for a in 0..2 {
                        for b in 0..2 {
                            s += m[a][i] * h[a][b] * m[b][j];
                        }
                    }
                    r[i][j] = s;
                }
            }
            *h = r;
        }
    }
}

/// Shape functions of degree `basis` on the physical cell, at physical
/// point `x`.
pub fn eval_physical(basis: &LagrangeBasis, map: &AffineMap, x: Point) -> BasisValues {
    let mut v = basis.eval(map.to_reference(x));
    map.push_forward(&mut v);
    v
}
