//! Local integrators for the stabilized Nitsche formulation.
//!
//! All tensors are indexed `[test][trial]`. The local dof layout of a cell
//! is velocity-x shape functions, velocity-y shape functions, then pressure
//! shape functions; interface and overlap tensors concatenate the
//! background cell block and the overlapping cell block in that order.

use crate::basis::{eval_physical, AffineMap, BasisValues};
use crate::cutgeom::InterfaceSegment;
use crate::error::{Error, Result};
use crate::geometry::Point;
use crate::mesh::{Mesh, BACKGROUND, OVERLAP};
use crate::quadrature::QuadratureRule;
use crate::space::MultimeshSpace;

/// Region of a band cell on which the least-squares term is integrated.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LeastSquaresRegion {
    /// The whole background cell.
    FullCell,
    /// Only the part outside the overlapping domain.
    PhysicalPart,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DiscretizationParams {
    pub k: usize,
    pub beta: f64,
    /// Weights of the interface average, summing to one.
    pub kappa: [f64; 2],
    pub ls_scale: f64,
    pub least_squares: bool,
    pub overlap_stabilization: bool,
    pub ls_region: LeastSquaresRegion,
    pub volume_order: usize,
    pub interface_order: usize,
}

impl DiscretizationParams {
    /// Defaults: beta = 20 k^2, equal average weights, quadrature order
    /// 2k + 2 everywhere, both stabilizations on.
    pub fn new(k: usize) -> Self {
        DiscretizationParams {
            k,
            beta: 20.0 * (k * k) as f64,
            kappa: [0.5, 0.5],
            ls_scale: 1.0,
            least_squares: true,
            overlap_stabilization: true,
            ls_region: LeastSquaresRegion::FullCell,
            volume_order: 2 * k + 2,
            interface_order: 2 * k + 2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(2..=3).contains(&self.k) {
            return Err(Error::invalid("k", format!("must be 2 or 3, got {}", self.k)));
        }
        if !(self.beta > 0.0) || !self.beta.is_finite() {
            return Err(Error::invalid("beta", format!("must be positive, got {}", self.beta)));
        }
        let [k0, k1] = self.kappa;
        if !(0.0..=1.0).contains(&k0) || !(0.0..=1.0).contains(&k1) || (k0 + k1 - 1.0).abs() > 1e-14 {
            return Err(Error::invalid(
                "kappa0",
                format!("average weights must lie in [0, 1] and sum to one, got {k0}, {k1}"),
            ));
        }
        if !(self.ls_scale >= 0.0) || !self.ls_scale.is_finite() {
            return Err(Error::invalid("ls-scale", format!("must be non-negative, got {}", self.ls_scale)));
        }
        if !(1..=crate::quadrature::MAX_TRIANGLE_ORDER).contains(&self.volume_order) {
            return Err(Error::invalid("quad-order", format!("volume order {} out of range", self.volume_order)));
        }
        if self.interface_order > crate::quadrature::MAX_SEGMENT_ORDER {
            return Err(Error::invalid("quad-order", format!("interface order {} out of range", self.interface_order)));
        }
        Ok(())
    }
}

/// Dense local contribution with the active global indices of its dofs.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LocalTensor {
    pub dofs: Vec<usize>,
    /// Row-major `dofs.len()^2` block, or empty for load-only tensors.
    pub matrix: Vec<f64>,
    /// Load vector, or empty for matrix-only tensors.
    pub rhs: Vec<f64>,
}

impl LocalTensor {
    fn with_matrix(dofs: Vec<usize>) -> Self {
        let n = dofs.len();
        LocalTensor {
            dofs,
            matrix: vec![0.0; n * n],
            rhs: Vec::new(),
        }
    }

    fn with_rhs(dofs: Vec<usize>) -> Self {
        let n = dofs.len();
        LocalTensor {
            dofs,
            matrix: Vec::new(),
            rhs: vec![0.0; n],
        }
    }

    pub fn size(&self) -> usize {
        self.dofs.len()
    }

    #[inline]
    fn add(&mut self, i: usize, j: usize, v: f64) {
        let n = self.dofs.len();
        self.matrix[i * n + j] += v;
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.matrix[i * self.dofs.len() + j]
    }

    /// Bilinear value `test^T M trial` on local coefficient vectors.
    pub fn apply(&self, test: &[f64], trial: &[f64]) -> f64 {
        let n = self.size();
        (0..n)
            .map(|i| test[i] * (0..n).map(|j| self.matrix[i * n + j] * trial[j]).sum::<f64>())
            .sum()
    }

    /// Gathers the local coefficients from a global active vector.
    pub fn gather(&self, global: &[f64]) -> Vec<f64> {
        self.dofs.iter().map(|&d| global[d]).collect()
    }
}

/// One cell of one mesh, with its affine map and local dof layout.
#[derive(Clone, Copy, Debug)]
pub struct CellRef<'a> {
    pub mesh: &'a Mesh,
    pub cell: usize,
    map: AffineMap,
}

impl<'a> CellRef<'a> {
    pub fn new(mesh: &'a Mesh, cell: usize) -> Self {
        CellRef {
            mesh,
            cell,
            map: AffineMap::new(mesh.cell_points(cell)),
        }
    }

    fn mesh_index(&self) -> usize {
        self.mesh.mesh_index
    }
}

struct Layout {
    nv: usize,
    np: usize,
}

impl Layout {
    fn new(space: &MultimeshSpace) -> Self {
        Layout {
            nv: space.velocity_basis.len(),
            np: space.pressure_basis.len(),
        }
    }

    fn block(&self) -> usize {
        2 * self.nv + self.np
    }

    #[inline]
    fn vel(&self, side: usize, comp: usize, a: usize) -> usize {
        side * self.block() + comp * self.nv + a
    }

    #[inline]
    fn pres(&self, side: usize, a: usize) -> usize {
        side * self.block() + 2 * self.nv + a
    }
}

struct PointBasis {
    v: BasisValues,
    p: BasisValues,
}

fn eval_at(space: &MultimeshSpace, cell: &CellRef, x: Point) -> PointBasis {
    PointBasis {
        v: eval_physical(&space.velocity_basis, &cell.map, x),
        p: eval_physical(&space.pressure_basis, &cell.map, x),
    }
}

#[inline]
fn dot2(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

#[inline]
fn laplacian(h: &[[f64; 2]; 2]) -> f64 {
    h[0][0] + h[1][1]
}

/// Viscous term (Du, Dv) and divergence terms -(div u, q) - (div v, p)
/// over the region covered by `rule`.
pub fn volume_terms(space: &MultimeshSpace, cell: &CellRef, rule: &QuadratureRule) -> LocalTensor {
    let mut t = LocalTensor::with_matrix(space.cell_active_dofs(cell.mesh_index(), cell.cell));
    let l = Layout::new(space);
    for (x, w) in rule.iter() {
        let b = eval_at(space, cell, x);
        for a in 0..l.nv {
            let ga = b.v.gradients[a];
            for bb in 0..l.nv {
                let s = w * dot2(ga, b.v.gradients[bb]);
                t.add(l.vel(0, 0, a), l.vel(0, 0, bb), s);
                t.add(l.vel(0, 1, a), l.vel(0, 1, bb), s);
            }
            for q in 0..l.np {
                let psi = b.p.values[q];
                for c in 0..2 {
                    let s = -w * ga[c] * psi;
                    t.add(l.pres(0, q), l.vel(0, c, a), s);
                    t.add(l.vel(0, c, a), l.pres(0, q), s);
                }
            }
        }
    }
    t
}

/// Viscous part only: (Du, Dv) over the region.
pub fn gradient_gram(space: &MultimeshSpace, cell: &CellRef, rule: &QuadratureRule) -> LocalTensor {
    let mut t = LocalTensor::with_matrix(space.cell_active_dofs(cell.mesh_index(), cell.cell));
    let l = Layout::new(space);
    for (x, w) in rule.iter() {
        let b = eval_at(space, cell, x);
        for a in 0..l.nv {
            for bb in 0..l.nv {
                let s = w * dot2(b.v.gradients[a], b.v.gradients[bb]);
                t.add(l.vel(0, 0, a), l.vel(0, 0, bb), s);
                t.add(l.vel(0, 1, a), l.vel(0, 1, bb), s);
            }
        }
    }
    t
}

/// Pressure mass matrix (p, q) over the region.
pub fn pressure_mass(space: &MultimeshSpace, cell: &CellRef, rule: &QuadratureRule) -> LocalTensor {
    let mut t = LocalTensor::with_matrix(space.cell_active_dofs(cell.mesh_index(), cell.cell));
    let l = Layout::new(space);
    for (x, w) in rule.iter() {
        let b = eval_at(space, cell, x);
        for a in 0..l.np {
            for bb in 0..l.np {
                t.add(l.pres(0, a), l.pres(0, bb), w * b.p.values[a] * b.p.values[bb]);
            }
        }
    }
    t
}

/// Integrals of the pressure shape functions over the region, laid out on
/// the cell's dofs (velocity entries are zero).
pub fn pressure_mean(space: &MultimeshSpace, cell: &CellRef, rule: &QuadratureRule) -> LocalTensor {
    let mut t = LocalTensor::with_rhs(space.cell_active_dofs(cell.mesh_index(), cell.cell));
    let l = Layout::new(space);
    for (x, w) in rule.iter() {
        let b = eval_at(space, cell, x);
        for a in 0..l.np {
            t.rhs[l.pres(0, a)] += w * b.p.values[a];
        }
    }
    t
}

/// Load (f, v) over the region.
pub fn source_volume(
    space: &MultimeshSpace,
    cell: &CellRef,
    rule: &QuadratureRule,
    f: &(dyn Fn(Point) -> [f64; 2] + Sync),
) -> LocalTensor {
    let mut t = LocalTensor::with_rhs(space.cell_active_dofs(cell.mesh_index(), cell.cell));
    let l = Layout::new(space);
    for (x, w) in rule.iter() {
        let b = eval_at(space, cell, x);
        let fx = f(x);
        for a in 0..l.nv {
            for c in 0..2 {
                t.rhs[l.vel(0, c, a)] += w * fx[c] * b.v.values[a];
            }
        }
    }
    t
}

fn pair_dofs(space: &MultimeshSpace, bg: &CellRef, ov: &CellRef) -> Result<Vec<usize>> {
    if bg.mesh_index() != BACKGROUND || ov.mesh_index() != OVERLAP {
        return Err(Error::Structure(
            "coupling term needs a background cell and an overlapping cell".into(),
        ));
    }
    let mut dofs = space.cell_active_dofs(BACKGROUND, bg.cell);
    dofs.extend(space.cell_active_dofs(OVERLAP, ov.cell));
    Ok(dofs)
}

/// Nitsche coupling on one interface segment:
/// -(<(Du)n>, [v]) - ([u], <(Dv)n>) + beta/h ([u], [v])
/// + ([n.u], <q>) + ([n.v], <p>),
/// with [w] = w_1 - w_0 and <w> = kappa_0 w_0 + kappa_1 w_1.
pub fn nitsche_interface_terms(
    space: &MultimeshSpace,
    bg: &CellRef,
    ov: &CellRef,
    segment: &InterfaceSegment,
    rule: &QuadratureRule,
    params: &DiscretizationParams,
) -> Result<LocalTensor> {
    if segment.background_cell != bg.cell || segment.overlap_cell != ov.cell {
        return Err(Error::Structure(format!(
            "segment adjacency ({}, {}) does not match cells ({}, {})",
            segment.background_cell, segment.overlap_cell, bg.cell, ov.cell
        )));
    }
    let mut t = LocalTensor::with_matrix(pair_dofs(space, bg, ov)?);
    let l = Layout::new(space);
    let n = segment.normal;
    let h = bg.mesh.cell_size(bg.cell);
    let penalty = params.beta / h;
    let kappa = params.kappa;
    let sign = [-1.0, 1.0];
    for (x, w) in rule.iter() {
        let sides = [eval_at(space, bg, x), eval_at(space, ov, x)];
        let flux: [Vec<f64>; 2] = [0, 1].map(|s| sides[s].v.gradients.iter().map(|g| dot2(*g, n)).collect());
        for si in 0..2 {
            for a in 0..l.nv {
                let phi_a = sides[si].v.values[a];
                let ja = sign[si] * phi_a;
                let fa = kappa[si] * flux[si][a];
                for sj in 0..2 {
                    for b in 0..l.nv {
                        let phi_b = sides[sj].v.values[b];
                        let jb = sign[sj] * phi_b;
                        let fb = kappa[sj] * flux[sj][b];
                        let s = w * (-fb * ja - jb * fa + penalty * ja * jb);
                        for c in 0..2 {
                            t.add(l.vel(si, c, a), l.vel(sj, c, b), s);
                        }
                    }
                    for q in 0..l.np {
                        let avg_q = kappa[sj] * sides[sj].p.values[q];
                        for c in 0..2 {
                            let s = w * ja * n[c] * avg_q;
                            t.add(l.vel(si, c, a), l.pres(sj, q), s);
                            t.add(l.pres(sj, q), l.vel(si, c, a), s);
                        }
                    }
                }
            }
        }
    }
    Ok(t)
}

/// Interface part of the energy-norm Gram matrix:
/// h (<(Dv)n>, <(Dw)n>) + h^{-1} ([v], [w]).
pub fn interface_energy_gram(
    space: &MultimeshSpace,
    bg: &CellRef,
    ov: &CellRef,
    segment: &InterfaceSegment,
    rule: &QuadratureRule,
    params: &DiscretizationParams,
) -> Result<LocalTensor> {
    let mut t = LocalTensor::with_matrix(pair_dofs(space, bg, ov)?);
    let l = Layout::new(space);
    let n = segment.normal;
    let h = bg.mesh.cell_size(bg.cell);
    let sign = [-1.0, 1.0];
    for (x, w) in rule.iter() {
        let sides = [eval_at(space, bg, x), eval_at(space, ov, x)];
        for si in 0..2 {
            for a in 0..l.nv {
                let ja = sign[si] * sides[si].v.values[a];
                let fa = params.kappa[si] * dot2(sides[si].v.gradients[a], n);
                for sj in 0..2 {
                    for b in 0..l.nv {
                        let jb = sign[sj] * sides[sj].v.values[b];
                        let fb = params.kappa[sj] * dot2(sides[sj].v.gradients[b], n);
                        let s = w * (h * fa * fb + ja * jb / h);
                        for c in 0..2 {
                            t.add(l.vel(si, c, a), l.vel(sj, c, b), s);
                        }
                    }
                }
            }
        }
    }
    Ok(t)
}

/// Gradient-jump stabilization ([Du], [Dv]) over one overlap piece, which
/// lies in exactly one background cell and one overlapping cell.
pub fn overlap_stabilization(
    space: &MultimeshSpace,
    bg: &CellRef,
    ov: &CellRef,
    rule: &QuadratureRule,
) -> Result<LocalTensor> {
    let mut t = LocalTensor::with_matrix(pair_dofs(space, bg, ov)?);
    let l = Layout::new(space);
    let sign = [-1.0, 1.0];
    for (x, w) in rule.iter() {
        let sides = [eval_at(space, bg, x), eval_at(space, ov, x)];
        for si in 0..2 {
            for a in 0..l.nv {
                let ga = sides[si].v.gradients[a];
                for sj in 0..2 {
                    for b in 0..l.nv {
                        let s = w * sign[si] * sign[sj] * dot2(ga, sides[sj].v.gradients[b]);
                        for c in 0..2 {
                            t.add(l.vel(si, c, a), l.vel(sj, c, b), s);
                        }
                    }
                }
            }
        }
    }
    Ok(t)
}

/// Least-squares term h^2 (Δu - ∇p, Δv + ∇q) on a band cell together with
/// its load -h^2 (f, Δv + ∇q). Scaled by `params.ls_scale`.
pub fn least_squares_terms(
    space: &MultimeshSpace,
    cell: &CellRef,
    rule: &QuadratureRule,
    params: &DiscretizationParams,
    f: &(dyn Fn(Point) -> [f64; 2] + Sync),
) -> LocalTensor {
    let mut t = LocalTensor::with_matrix(space.cell_active_dofs(cell.mesh_index(), cell.cell));
    t.rhs = vec![0.0; t.size()];
    let l = Layout::new(space);
    let h = cell.mesh.cell_size(cell.cell);
    let scale = params.ls_scale * h * h;
    // Test functions T_c and trial residuals R_c per component, on the local
    // layout: T_c = Δv_c + ∂_c q, R_c = Δu_c - ∂_c p.
    let n = t.size();
    let mut test = [vec![0.0; n], vec![0.0; n]];
    let mut trial = [vec![0.0; n], vec![0.0; n]];
    for (x, w) in rule.iter() {
        let b = eval_at(space, cell, x);
        for c in 0..2 {
            test[c].iter_mut().for_each(|v| *v = 0.0);
            trial[c].iter_mut().for_each(|v| *v = 0.0);
            for a in 0..l.nv {
                let lap = laplacian(&b.v.hessians[a]);
                test[c][l.vel(0, c, a)] = lap;
                trial[c][l.vel(0, c, a)] = lap;
            }
            for q in 0..l.np {
                test[c][l.pres(0, q)] = b.p.gradients[q][c];
                trial[c][l.pres(0, q)] = -b.p.gradients[q][c];
            }
        }
        let fx = f(x);
        for c in 0..2 {
            for i in 0..n {
                let ti = test[c][i];
                if ti == 0.0 {
                    continue;
                }
                t.rhs[i] -= w * scale * fx[c] * ti;
                for j in 0..n {
                    let rj = trial[c][j];
                    if rj != 0.0 {
                        t.add(i, j, w * scale * ti * rj);
                    }
                }
            }
        }
    }
    t
}
