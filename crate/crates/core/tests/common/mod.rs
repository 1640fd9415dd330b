#![allow(dead_code)]

use cutfem::case::CaseConfig;
use cutfem::geometry::Point;
use cutfem::system::{CsrMatrix, Discretization};
use nalgebra::DMatrix;

pub fn default_discretization(n: usize, k: usize) -> Discretization {
    let cfg = CaseConfig {
        k,
        ..CaseConfig::default()
    };
    cfg.discretization(n).unwrap()
}

pub fn with_config(n: usize, edit: impl FnOnce(&mut CaseConfig)) -> Discretization {
    let mut cfg = CaseConfig::default();
    edit(&mut cfg);
    cfg.discretization(n).unwrap()
}

pub fn dense(a: &CsrMatrix) -> DMatrix<f64> {
    let mut d = DMatrix::zeros(a.nrows, a.ncols);
    for i in 0..a.nrows {
        for (j, v) in a.row(i) {
            d[(i, j)] += v;
        }
    }
    d
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// ∫_P x^a y^b over a counterclockwise polygon, by Green's theorem
/// ∮ x^{a+1} y^b / (a+1) dy with the edge integrals expanded binomially.
pub fn polygon_monomial(poly: &[Point], a: usize, b: usize) -> f64 {
    let mut total = 0.0;
    for i in 0..poly.len() {
        let p = poly[i];
        let q = poly[(i + 1) % poly.len()];
        let (dx, dy) = (q[0] - p[0], q[1] - p[1]);
        let m = a + 1;
        let mut edge = 0.0;
        for s in 0..=m {
            for t in 0..=b {
                edge += binomial(m, s) * binomial(b, t) * p[0].powi((m - s) as i32) * dx.powi(s as i32)
                    * p[1].powi((b - t) as i32) * dy.powi(t as i32)
                    / (s + t + 1) as f64;
            }
        }
        total += edge * dy / m as f64;
    }
    total
}

/// Polygon area by the shoelace formula.
pub fn shoelace(poly: &[Point]) -> f64 {
    polygon_monomial(poly, 0, 0)
}
