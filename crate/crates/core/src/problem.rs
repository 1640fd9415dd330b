//! Exact Stokes solutions used for verification.

use std::f64::consts::PI;

use crate::geometry::Point;

/// Smooth velocity/pressure pair with its body force, -Δu + ∇p = f and
/// div u = 0 on the unit square.
pub trait ExactSolution: Sync {
    fn velocity(&self, x: Point) -> [f64; 2];
    /// `[i][j]` = ∂u_i/∂x_j.
    fn velocity_gradient(&self, x: Point) -> [[f64; 2]; 2];
    fn pressure(&self, x: Point) -> f64;
    fn source(&self, x: Point) -> [f64; 2];
    fn name(&self) -> &'static str;
}

/// Trigonometric solution vanishing on the boundary of the unit square:
/// u = (π sin²(πx) sin(2πy), -π sin²(πy) sin(2πx)), p = sin(2πx) sin(2πy).
#[derive(Clone, Copy, Debug, Default)]
pub struct TrigonometricSolution {
    /// Multiplies u, p and f.
    pub amplitude: f64,
}

impl TrigonometricSolution {
    pub fn new() -> Self {
        TrigonometricSolution { amplitude: 1.0 }
    }
}

impl ExactSolution for TrigonometricSolution {
    fn velocity(&self, x: Point) -> [f64; 2] {
        let (sx, sy) = ((PI * x[0]).sin(), (PI * x[1]).sin());
        let a = self.amplitude;
        [
            a * PI * sx * sx * (2.0 * PI * x[1]).sin(),
            -a * PI * sy * sy * (2.0 * PI * x[0]).sin(),
        ]
    }

    fn velocity_gradient(&self, x: Point) -> [[f64; 2]; 2] {
        let (sx, sy) = ((PI * x[0]).sin(), (PI * x[1]).sin());
        let (s2x, s2y) = ((2.0 * PI * x[0]).sin(), (2.0 * PI * x[1]).sin());
        let (c2x, c2y) = ((2.0 * PI * x[0]).cos(), (2.0 * PI * x[1]).cos());
        let a = self.amplitude;
        // d/dx sin²(πx) = π sin(2πx)
        [
            [a * PI * PI * s2x * s2y, a * 2.0 * PI * PI * sx * sx * c2y],
            [-a * 2.0 * PI * PI * sy * sy * c2x, -a * PI * PI * s2y * s2x],
        ]
    }

    fn pressure(&self, x: Point) -> f64 {
        self.amplitude * (2.0 * PI * x[0]).sin() * (2.0 * PI * x[1]).sin()
    }

    fn source(&self, x: Point) -> [f64; 2] {
        let (s2x, s2y) = ((2.0 * PI * x[0]).sin(), (2.0 * PI * x[1]).sin());
        let (c2x, c2y) = ((2.0 * PI * x[0]).cos(), (2.0 * PI * x[1]).cos());
        let p2 = PI * PI;
        let a = self.amplitude;
        [
            a * 2.0 * PI * s2y * (c2x - 2.0 * p2 * c2x + p2),
            a * 2.0 * PI * s2x * (c2y + 2.0 * p2 * c2y - p2),
        ]
    }

    fn name(&self) -> &'static str {
        "trigonometric"
    }
}

/// Linear pair reproduced exactly by Taylor-Hood elements:
/// u = (y, -x), p = x + y - 1, f = (1, 1).
#[derive(Clone, Copy, Debug, Default)]
pub struct PolynomialSolution;

impl ExactSolution for PolynomialSolution {
    fn velocity(&self, x: Point) -> [f64; 2] {
        [x[1], -x[0]]
    }

    fn velocity_gradient(&self, _x: Point) -> [[f64; 2]; 2] {
        [[0.0, 1.0], [-1.0, 0.0]]
    }

    fn pressure(&self, x: Point) -> f64 {
        x[0] + x[1] - 1.0
    }

    fn source(&self, _x: Point) -> [f64; 2] {
        [1.0, 1.0]
    }

    fn name(&self) -> &'static str {
        "polynomial"
    }
}

/// u = 0, p = 0, f = 0.
#[derive(Clone, Copy, Debug, Default)]
pub struct ZeroSolution;

impl ExactSolution for ZeroSolution {
    fn velocity(&self, _x: Point) -> [f64; 2] {
        [0.0; 2]
    }

    fn velocity_gradient(&self, _x: Point) -> [[f64; 2]; 2] {
        [[0.0; 2]; 2]
    }

    fn pressure(&self, _x: Point) -> f64 {
        0.0
    }

    fn source(&self, _x: Point) -> [f64; 2] {
        [0.0; 2]
    }

    fn name(&self) -> &'static str {
        "zero"
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn check_strong_form(s: &dyn ExactSolution, pts: &[Point]) {
        let e = 1e-4;
        for &x in pts {
            let shift = |d: usize, t: f64| {
                let mut y = x;
                y[d] += t;
                y
            };
            // -Δu via second differences of the analytic gradient
            let mut lap = [0.0; 2];
            for d in 0..2 {
                let gp = s.velocity_gradient(shift(d, e));
                let gm = s.velocity_gradient(shift(d, -e));
                for c in 0..2 {
                    lap[c] += (gp[c][d] - gm[c][d]) / (2.0 * e);
                }
            }
            let dp = [
                (s.pressure(shift(0, e)) - s.pressure(shift(0, -e))) / (2.0 * e),
                (s.pressure(shift(1, e)) - s.pressure(shift(1, -e))) / (2.0 * e),
            ];
            let f = s.source(x);
            for c in 0..2 {
                assert!((-lap[c] + dp[c] - f[c]).abs() < 1e-5 * (1.0 + f[c].abs()), "{} at {x:?}", s.name());
            }
            let g = s.velocity_gradient(x);
            assert!((g[0][0] + g[1][1]).abs() < 1e-12);
            for c in 0..2 {
                for d in 0..2 {
                    let fd = (s.velocity(shift(d, e))[c] - s.velocity(shift(d, -e))[c]) / (2.0 * e);
                    assert!((fd - g[c][d]).abs() < 1e-5 * (1.0 + g[c][d].abs()));
                }
            }
        }
    }

    #[test]
    fn trigonometric_solution_satisfies_stokes() {
        let pts = [[0.1, 0.2], [0.37, 0.81], [0.5, 0.5], [0.9, 0.05], [0.66, 0.33]];
        check_strong_form(&TrigonometricSolution::new(), &pts);
        check_strong_form(&PolynomialSolution, &pts);
    }

    #[test]
    fn trigonometric_source_closed_form() {
        let s = TrigonometricSolution::new();
        // f at (1/4, 1/4): sin(2πy)=1, cos(2πx)=0 → f = (2π·π², 2π·(-π²))
        let f = s.source([0.25, 0.25]);
        assert!((f[0] - 2.0 * PI.powi(3)).abs() < 1e-12);
        assert!((f[1] + 2.0 * PI.powi(3)).abs() < 1e-12);
        // boundary values of u vanish
        for t in [0.0, 0.3, 0.77, 1.0] {
            for x in [[t, 0.0], [t, 1.0], [0.0, t], [1.0, t]] {
                let u = s.velocity(x);
                assert!(u[0].abs() < 1e-14 && u[1].abs() < 1e-14);
            }
        }
    }
}
