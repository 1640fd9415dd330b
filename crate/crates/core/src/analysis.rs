//! Error norms, convergence rates, and empirical stability probes.

use std::io::Write;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::Point;
use crate::mesh::{CellLabel, Mesh, BACKGROUND, OVERLAP};
use crate::problem::ExactSolution;
use crate::quadrature::{segment_rule, QuadratureRule};
use crate::space::FieldValue;
use crate::system::{CsrMatrix, Discretization, SparseLu, Terms};

/// Error values below this size are excluded from rate fits.
pub const ROUNDOFF_FLOOR: f64 = 1e-7;

#[derive(Clone, Debug, PartialEq)]
pub struct ErrorReport {
    pub k: usize,
    pub n: usize,
    pub h: f64,
    pub ndof: usize,
    pub u_l2: f64,
    pub u_h1: f64,
    /// After removing the mean difference.
    pub p_l2: f64,
    pub energy: f64,
    pub triple: f64,
    /// ||div u_h|| over the physical subdomains.
    pub div_l2: f64,
}

/// Quadrature regions: (mesh, cell, rule).
type Regions = Vec<(usize, usize, QuadratureRule)>;

/// K ∩ Ω_0 for active background cells and all overlapping cells.
fn physical_regions(disc: &Discretization) -> Regions {
    let mut out: Regions = (0..disc.background.num_cells())
        .filter_map(|c| disc.physical_rule(c).map(|r| (BACKGROUND, c, r)))
        .collect();
    if let Some(m) = disc.overlap_mesh() {
        out.extend((0..m.num_cells()).map(|c| (OVERLAP, c, disc.cell_rule(m, c))));
    }
    out
}

/// Whole active cells of both meshes, covering Ω_{h,0} and Ω_{h,1}.
fn extended_regions(disc: &Discretization) -> Regions {
    let mut out: Regions = (0..disc.background.num_cells())
        .filter(|&c| disc.classification.is_active(c))
        .map(|c| (BACKGROUND, c, disc.cell_rule(&disc.background, c)))
        .collect();
    if let Some(m) = disc.overlap_mesh() {
        out.extend((0..m.num_cells()).map(|c| (OVERLAP, c, disc.cell_rule(m, c))));
    }
    out
}

/// Σ over regions and points of `f`, summed in a fixed order.
fn integrate<const N: usize, F>(disc: &Discretization, regions: &Regions, coeffs: &[f64], f: F) -> [f64; N]
where
    F: Fn(Point, &FieldValue) -> [f64; N] + Sync,
{
    let parts: Vec<[f64; N]> = regions
        .par_iter()
        .map(|(mi, c, rule)| {
            let m = disc.mesh(*mi);
            let mut acc = [0.0; N];
            for (x, w) in rule.iter() {
                let v = disc.space.evaluate_in_cell(m, coeffs, *c, x);
                let r = f(x, &v);
                for i in 0..N {
                    acc[i] += w * r[i];
                }
            }
            acc
        })
        .collect();
    let mut total = [0.0; N];
    for p in parts {
        for i in 0..N {
            total[i] += p[i];
        }
    }
    total
}

fn sq_grad_diff(g: &[[f64; 2]; 2], gh: &[[f64; 2]; 2]) -> f64 {
    let mut s = 0.0;
    for i in 0..2 {
        for j in 0..2 {
            s += (g[i][j] - gh[i][j]).powi(2);
        }
    }
    s
}

/// Interface part of the energy norm of u - u_h:
/// h ||<D(u - u_h)> n||² + h^{-1} ||[u - u_h]||².
fn interface_energy(disc: &Discretization, coeffs: &[f64], exact: Option<&dyn ExactSolution>) -> Result<f64> {
    let Some(om) = disc.overlap_mesh() else {
        return Ok(0.0);
    };
    let kappa = disc.params.kappa;
    let parts = disc
        .geometry
        .segments
        .par_iter()
        .map(|s| -> Result<f64> {
            let rule = segment_rule(s.a, s.b, disc.params.interface_order)?;
            let h = disc.background.cell_size(s.background_cell);
            let n = s.normal;
            let mut acc = 0.0;
            for (x, w) in rule.iter() {
                let v0 = disc.space.evaluate_in_cell(&disc.background, coeffs, s.background_cell, x);
                let v1 = disc.space.evaluate_in_cell(om, coeffs, s.overlap_cell, x);
                let (ue, ge) = match exact {
                    Some(e) => (e.velocity(x), e.velocity_gradient(x)),
                    None => ([0.0; 2], [[0.0; 2]; 2]),
                };
                for i in 0..2 {
                    // error field e_m = u - u_{h,m} on each side
                    let e0 = ue[i] - v0.velocity[i];
                    let e1 = ue[i] - v1.velocity[i];
                    let f0 = (0..2).map(|j| (ge[i][j] - v0.velocity_gradient[i][j]) * n[j]).sum::<f64>();
                    let f1 = (0..2).map(|j| (ge[i][j] - v1.velocity_gradient[i][j]) * n[j]).sum::<f64>();
                    let avg = kappa[0] * f0 + kappa[1] * f1;
                    acc += w * (h * avg * avg + (e1 - e0).powi(2) / h);
                }
            }
            Ok(acc)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(parts.iter().sum())
}

/// Errors of the discrete pair `coeffs` against `exact`.
pub fn compute_errors(disc: &Discretization, coeffs: &[f64], exact: &dyn ExactSolution, n: usize) -> Result<ErrorReport> {
    let phys = physical_regions(disc);
    let ext = extended_regions(disc);
    let [diff, area] = integrate(disc, &phys, coeffs, |x, v| [exact.pressure(x) - v.pressure, 1.0]);
    let shift = diff / area;
    let [u_l2, u_h1, p_l2, div] = integrate(disc, &phys, coeffs, |x, v| {
        let u = exact.velocity(x);
        let g = exact.velocity_gradient(x);
        let ep = exact.pressure(x) - v.pressure - shift;
        [
            (u[0] - v.velocity[0]).powi(2) + (u[1] - v.velocity[1]).powi(2),
            sq_grad_diff(&g, &v.velocity_gradient),
            ep * ep,
            (v.velocity_gradient[0][0] + v.velocity_gradient[1][1]).powi(2),
        ]
    });
    let [grad_ext, p_ext] = integrate(disc, &ext, coeffs, |x, v| {
        let ep = exact.pressure(x) - v.pressure - shift;
        [sq_grad_diff(&exact.velocity_gradient(x), &v.velocity_gradient), ep * ep]
    });
    let energy2 = grad_ext + interface_energy(disc, coeffs, Some(exact))?;
    Ok(ErrorReport {
        k: disc.params.k,
        n,
        h: disc.background.h,
        ndof: disc.dim(),
        u_l2: u_l2.sqrt(),
        u_h1: u_h1.sqrt(),
        p_l2: p_l2.sqrt(),
        energy: energy2.sqrt(),
        triple: (energy2 + p_ext).sqrt(),
        div_l2: div.sqrt(),
    })
}

/// Energy norm |||v|||_h of a discrete velocity.
pub fn energy_norm(disc: &Discretization, coeffs: &[f64]) -> Result<f64> {
    let ext = extended_regions(disc);
    let [g] = integrate(disc, &ext, coeffs, |_, v| [sq_grad_diff(&[[0.0; 2]; 2], &v.velocity_gradient)]);
    Ok((g + interface_energy(disc, coeffs, None)?).sqrt())
}

/// Rates between consecutive refinement levels; `None` where either error
/// is below the round-off floor.
#[derive(Clone, Debug, PartialEq)]
pub struct EocRow {
    pub u_l2: Option<f64>,
    pub u_h1: Option<f64>,
    pub p_l2: Option<f64>,
    pub energy: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvergenceRecord {
    pub reports: Vec<ErrorReport>,
    /// `eoc[i]` relates levels i and i + 1.
    pub eoc: Vec<EocRow>,
}

/// log(e_a / e_b) / log(h_a / h_b), guarded by the round-off floor.
pub fn eoc(e_a: f64, e_b: f64, h_a: f64, h_b: f64) -> Option<f64> {
    if e_a < ROUNDOFF_FLOOR || e_b < ROUNDOFF_FLOOR || !e_a.is_finite() || !e_b.is_finite() {
        return None;
    }
    Some((e_a / e_b).ln() / (h_a / h_b).ln())
}

pub fn compute_eoc(reports: Vec<ErrorReport>) -> Result<ConvergenceRecord> {
    if reports.is_empty() {
        return Err(Error::invalid("n", "no refinement levels"));
    }
    for w in reports.windows(2) {
        if !(w[1].h < w[0].h) {
            return Err(Error::invalid(
                "n",
                format!("mesh sizes must strictly decrease, got {} then {}", w[0].h, w[1].h),
            ));
        }
    }
    let eoc = reports
        .windows(2)
        .map(|w| {
            let (a, b) = (&w[0], &w[1]);
            EocRow {
                u_l2: eoc(a.u_l2, b.u_l2, a.h, b.h),
                u_h1: eoc(a.u_h1, b.u_h1, a.h, b.h),
                p_l2: eoc(a.p_l2, b.p_l2, a.h, b.h),
                energy: eoc(a.energy, b.energy, a.h, b.h),
            }
        })
        .collect();
    Ok(ConvergenceRecord { reports, eoc })
}

pub const CSV_HEADER: &str = "k,n,h,ndof,err_u_L2,err_u_H1,err_p_L2,err_energy,eoc_u_L2,eoc_u_H1,eoc_p_L2";

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

impl ConvergenceRecord {
    /// One row per level; the rate columns of a row relate it to the
    /// previous level and are empty on the first row.
    pub fn write_csv<W: Write>(&self, out: &mut W) -> Result<()> {
        writeln!(out, "{CSV_HEADER}")?;
        for (i, r) in self.reports.iter().enumerate() {
            let e = if i == 0 { None } else { Some(&self.eoc[i - 1]) };
            writeln!(
                out,
                "{},{},{:.10e},{},{:.10e},{:.10e},{:.10e},{:.10e},{},{},{}",
                r.k,
                r.n,
                r.h,
                r.ndof,
                r.u_l2,
                r.u_h1,
                r.p_l2,
                r.energy,
                opt(e.and_then(|e| e.u_l2)),
                opt(e.and_then(|e| e.u_h1)),
                opt(e.and_then(|e| e.p_l2)),
            )?;
        }
        Ok(())
    }
}

/// Legacy VTK ASCII dump of one mesh with vertex values of (u_h, p_h).
/// Inactive vertices get zero values and `active = 0`.
pub fn write_solution_vtk<W: Write>(disc: &Discretization, mesh_index: usize, coeffs: &[f64], out: &mut W) -> Result<()> {
    use crate::space::Field;
    let m: &Mesh = disc.mesh(mesh_index);
    let sp = &disc.space;
    let value = |f: Field, v: usize| sp.active_index(mesh_index, f, v).map(|a| coeffs[a]);
    writeln!(out, "# vtk DataFile Version 3.0")?;
    writeln!(out, "solution on mesh {mesh_index}")?;
    writeln!(out, "ASCII\nDATASET UNSTRUCTURED_GRID")?;
    writeln!(out, "POINTS {} double", m.num_vertices())?;
    for v in &m.vertices {
        writeln!(out, "{} {} 0", v[0], v[1])?;
    }
    writeln!(out, "CELLS {} {}", m.num_cells(), 4 * m.num_cells())?;
    for c in &m.cells {
        writeln!(out, "3 {} {} {}", c[0], c[1], c[2])?;
    }
    writeln!(out, "CELL_TYPES {}", m.num_cells())?;
    for _ in &m.cells {
        writeln!(out, "5")?;
    }
    // vertex dofs come first in every dof map
    writeln!(out, "POINT_DATA {}", m.num_vertices())?;
    writeln!(out, "VECTORS velocity double")?;
    for v in 0..m.num_vertices() {
        let ux = value(Field::VelocityX, v).unwrap_or(0.0);
        let uy = value(Field::VelocityY, v).unwrap_or(0.0);
        writeln!(out, "{ux:.12e} {uy:.12e} 0")?;
    }
    writeln!(out, "SCALARS pressure double 1\nLOOKUP_TABLE default")?;
    for v in 0..m.num_vertices() {
        writeln!(out, "{:.12e}", value(Field::Pressure, v).unwrap_or(0.0))?;
    }
    writeln!(out, "SCALARS active int 1\nLOOKUP_TABLE default")?;
    for v in 0..m.num_vertices() {
        writeln!(out, "{}", u8::from(value(Field::Pressure, v).is_some()))?;
    }
    if mesh_index == BACKGROUND {
        writeln!(out, "CELL_DATA {}\nSCALARS label int 1\nLOOKUP_TABLE default", m.num_cells())?;
        for c in 0..m.num_cells() {
            let l = match disc.classification.label(c) {
                CellLabel::UncutOutside => 0,
                CellLabel::Cut => 1,
                CellLabel::Covered => 2,
            };
            writeln!(out, "{l}")?;
        }
    }
    Ok(())
}

/// Random velocity directions: uniform on the free velocity dofs, zero
/// elsewhere.
pub fn random_velocities(disc: &Discretization, samples: usize, seed: u64) -> Vec<Vec<f64>> {
    let free = disc.free_velocity_dofs();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..samples)
        .map(|_| {
            let mut v = vec![0.0; disc.dim()];
            for &a in &free {
                v[a] = rng.random_range(-1.0..1.0);
            }
            v
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct CoercivityReport {
    /// a_h(v, v) / |||v|||_h² per sample.
    pub ratios: Vec<f64>,
    pub min: f64,
    pub max: f64,
}

/// Velocity form and energy Gram matrix of a discretization.
pub fn velocity_operators(disc: &Discretization) -> Result<(CsrMatrix, CsrMatrix)> {
    let (a, _) = disc.assemble_operator(&Terms::velocity_form(&disc.params), None)?;
    Ok((a, disc.energy_gram()?))
}

pub fn coercivity_probe(disc: &Discretization, samples: usize, seed: u64) -> Result<CoercivityReport> {
    let (a, x) = velocity_operators(disc)?;
    let ratios: Vec<f64> = random_velocities(disc, samples, seed)
        .iter()
        .map(|v| a.bilinear(v, v) / x.bilinear(v, v))
        .collect();
    let min = ratios.iter().copied().fold(f64::INFINITY, f64::min);
    let max = ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(CoercivityReport { ratios, min, max })
}

/// max |a_h(v, w)| / (|||v|||_h |||w|||_h) over random pairs.
pub fn continuity_probe(disc: &Discretization, samples: usize, seed: u64) -> Result<f64> {
    let (a, x) = velocity_operators(disc)?;
    let v = random_velocities(disc, 2 * samples, seed);
    Ok(v.chunks(2)
        .map(|p| a.bilinear(&p[0], &p[1]).abs() / (x.bilinear(&p[0], &p[0]) * x.bilinear(&p[1], &p[1])).sqrt())
        .fold(0.0, f64::max))
}

/// Blocks entering the inf-sup constant, restricted to the free velocity
/// dofs `F` and the pressure dofs `P`.
#[derive(Clone, Debug)]
pub struct InfSupBlocks {
    /// Energy Gram on F.
    pub x: CsrMatrix,
    /// b_h with rows P and columns F.
    pub b: CsrMatrix,
    /// Pressure Gram on P.
    pub m: CsrMatrix,
    /// Coefficients of the constant pressure on P.
    pub constant: Vec<f64>,
}

pub fn infsup_blocks(disc: &Discretization) -> Result<InfSupBlocks> {
    let free = disc.free_velocity_dofs();
    let pres = disc.pressure_dofs();
    let (bfull, _) = disc.assemble_operator(&Terms::divergence_form(), None)?;
    let x = disc.energy_gram()?.submatrix(&free, &free);
    let b = bfull.submatrix(&pres, &free);
    let m = disc.pressure_gram()?.submatrix(&pres, &pres);
    Ok(InfSupBlocks {
        x,
        b,
        m,
        constant: vec![1.0; pres.len()],
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct InfSupEstimate {
    /// Estimate of min_q sup_v b_h(v, q) / (|||v|||_h ||q||_h) over
    /// pressures M-orthogonal to the constant.
    pub value: f64,
    pub iterations: usize,
    /// Relative Ritz residual at termination.
    pub residual: f64,
}

fn mdot(m: &CsrMatrix, a: &[f64], b: &[f64]) -> f64 {
    m.bilinear(a, b)
}

/// Lanczos iteration in the M inner product on T = S⁺M, S = B X⁻¹ Bᵀ,
/// restricted to the M-orthogonal complement of the constant pressure.
/// The largest Ritz value θ of T gives the estimate 1 / √θ.
pub fn infsup_probe(blocks: &InfSupBlocks, tol: f64, max_iter: usize, seed: u64) -> Result<InfSupEstimate> {
    let nf = blocks.x.nrows;
    let np = blocks.m.nrows;
    let mc = blocks.m.matvec(&blocks.constant);
    // K = [[X, Bᵀ, 0], [B, 0, Mc], [0, (Mc)ᵀ, 0]]
    let mut trip = Vec::new();
    for i in 0..nf {
        for (j, v) in blocks.x.row(i) {
            trip.push((i, j, v));
        }
    }
    for i in 0..np {
        for (j, v) in blocks.b.row(i) {
            trip.push((nf + i, j, v));
            trip.push((j, nf + i, v));
        }
        if mc[i] != 0.0 {
            trip.push((nf + i, nf + np, mc[i]));
            trip.push((nf + np, nf + i, mc[i]));
        }
    }
    let k = CsrMatrix::from_triplets(nf + np + 1, nf + np + 1, trip);
    let lu = SparseLu::factor(&k)?;
    let apply_t = |q: &[f64]| -> Vec<f64> {
        let r = blocks.m.matvec(q);
        let mut rhs = vec![0.0; nf + np + 1];
        for i in 0..np {
            rhs[nf + i] = -r[i];
        }
        let (sol, _) = lu.solve_refined(&rhs);
        sol[nf..nf + np].to_vec()
    };
    let c_norm2 = mdot(&blocks.m, &blocks.constant, &blocks.constant);
    let deflate = |v: &mut Vec<f64>| {
        let s = mdot(&blocks.m, &blocks.constant, v) / c_norm2;
        for (vi, ci) in v.iter_mut().zip(&blocks.constant) {
            *vi -= s * ci;
        }
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut q: Vec<f64> = (0..np).map(|_| rng.random_range(-1.0..1.0)).collect();
    deflate(&mut q);
    let nq = mdot(&blocks.m, &q, &q).sqrt();
    q.iter_mut().for_each(|v| *v /= nq);
    let mut basis: Vec<Vec<f64>> = vec![q];
    let mut alpha: Vec<f64> = Vec::new();
    let mut beta: Vec<f64> = Vec::new();
    let limit = max_iter.min(np.saturating_sub(1)).max(1);
    let mut last = (0.0, f64::INFINITY);
    for it in 1..=limit {
        let qj = basis.last().unwrap().clone();
        let mut w = apply_t(&qj);
        deflate(&mut w);
        let a = mdot(&blocks.m, &qj, &w);
        alpha.push(a);
        // full reorthogonalization, twice for stability
        for _ in 0..2 {
            for b in &basis {
                let s = mdot(&blocks.m, b, &w);
                for (wi, bi) in w.iter_mut().zip(b) {
                    *wi -= s * bi;
                }
            }
            deflate(&mut w);
        }
        let bnext = mdot(&blocks.m, &w, &w).sqrt();
        let m = alpha.len();
        let mut t = DMatrix::<f64>::zeros(m, m);
        for i in 0..m {
            t[(i, i)] = alpha[i];
            if i + 1 < m {
                t[(i, i + 1)] = beta[i];
                t[(i + 1, i)] = beta[i];
            }
        }
        let eig = SymmetricEigen::new(t);
        let (imax, theta) = eig
            .eigenvalues
            .iter()
            .copied()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (i, v)| if v > acc.1 { (i, v) } else { acc });
        let resid = (bnext * eig.eigenvectors[(m - 1, imax)]).abs() / theta.abs();
        last = (theta, resid);
        if resid <= tol || bnext <= 1e-14 * theta.abs() {
            if !(theta > 0.0) {
                return Err(Error::ProbeBreakdown {
                    iterations: it,
                    residual: resid,
                });
            }
            return Ok(InfSupEstimate {
                value: 1.0 / theta.sqrt(),
                iterations: it,
                residual: resid,
            });
        }
        beta.push(bnext);
        basis.push(w.iter().map(|v| v / bnext).collect());
    }
    Err(Error::ProbeBreakdown {
        iterations: limit,
        residual: last.1,
    })
}

/// Default stopping tolerance of the inf-sup estimator.
pub const INFSUP_TOL: f64 = 1e-7;
pub const INFSUP_MAX_ITER: usize = 300;

/// Dense reference for small systems: the square root of the second
/// smallest generalized eigenvalue of S q = μ M q (the smallest is the
/// constant pressure).
pub fn infsup_dense(blocks: &InfSupBlocks) -> Result<f64> {
    let dense = |a: &CsrMatrix| {
        let mut d = DMatrix::<f64>::zeros(a.nrows, a.ncols);
        for i in 0..a.nrows {
            for (j, v) in a.row(i) {
                d[(i, j)] = v;
            }
        }
        d
    };
    let x = dense(&blocks.x);
    let b = dense(&blocks.b);
    let m = dense(&blocks.m);
    let xc = x
        .cholesky()
        .ok_or_else(|| Error::Structure("energy Gram matrix is not positive definite".into()))?;
    let s = &b * xc.solve(&b.transpose());
    let mc = m
        .cholesky()
        .ok_or_else(|| Error::Structure("pressure Gram matrix is not positive definite".into()))?;
    let l = mc.l();
    let linv = l
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Structure("singular pressure Gram factor".into()))?;
    let c = &linv * s * linv.transpose();
    let c = (&c + c.transpose()) * 0.5;
    let mut ev: Vec<f64> = SymmetricEigen::new(c).eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
    if ev.len() < 2 {
        return Err(Error::Structure("pressure space too small".into()));
    }
    Ok(ev[1].max(0.0).sqrt())
}
