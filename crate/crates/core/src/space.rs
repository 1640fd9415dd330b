//! Continuous Lagrange dof maps and the direct-sum Taylor-Hood space over
//! the background and overlapping meshes.

use crate::basis::{eval_physical, num_shape_functions, AffineMap, LagrangeBasis};
use crate::cutgeom::locate_point;
use crate::error::{Error, Result};
use crate::geometry::Point;
use crate::mesh::{ElementClassification, Mesh, BACKGROUND};

/// Scalar continuous Lagrange dofs on one mesh. Global numbering: vertices,
/// then edge nodes (edges in lexicographic order, nodes running from the
/// lower to the higher vertex id), then interior nodes by cell.
#[derive(Clone, Debug)]
pub struct DofMap {
    pub mesh_index: usize,
    pub degree: usize,
    per_cell: usize,
    cell_dofs: Vec<usize>,
    pub nodes: Vec<Point>,
}

impl DofMap {
    pub fn build(m: &Mesh, degree: usize) -> Result<Self> {
        let basis = LagrangeBasis::new(degree)?;
        let k = degree;
        let nv = m.num_vertices();
        let ne = m.edges.len();
        let per_edge = k - 1;
        let per_interior = num_shape_functions(k) - 3 - 3 * per_edge;
        let count = nv + ne * per_edge + m.num_cells() * per_interior;
        let mut nodes = vec![[0.0; 2]; count];
        let per_cell = basis.len();
        let mut cell_dofs = Vec::with_capacity(per_cell * m.num_cells());
        let ref_nodes = basis.nodes();
        for c in 0..m.num_cells() {
            let cell = m.cells[c];
            let map = AffineMap::new(m.cell_points(c));
            let mut local = Vec::with_capacity(per_cell);
            local.extend_from_slice(&cell);
            for i in 0..3 {
                let (a, b) = (cell[i], cell[(i + 1) % 3]);
                let e = m.cell_edges[c][i];
                for j in 0..per_edge {
                    let g = if a < b { j } else { per_edge - 1 - j };
                    local.push(nv + e * per_edge + g);
                }
            }
            for j in 0..per_interior {
                local.push(nv + ne * per_edge + c * per_interior + j);
            }
            for (l, &g) in local.iter().enumerate() {
                nodes[g] = map.to_physical(ref_nodes[l]);
            }
            cell_dofs.extend(local);
        }
        Ok(DofMap {
            mesh_index: m.mesh_index,
            degree,
            per_cell,
            cell_dofs,
            nodes,
        })
    }

    pub fn count(&self) -> usize {
        self.nodes.len()
    }

    pub fn dofs_per_cell(&self) -> usize {
        self.per_cell
    }

    pub fn cell_dofs(&self, c: usize) -> &[usize] {
        &self.cell_dofs[c * self.per_cell..(c + 1) * self.per_cell]
    }

    /// Dofs located on the mesh boundary.
    pub fn boundary_dofs(&self, m: &Mesh) -> Vec<usize> {
        let mut out = Vec::new();
        for f in &m.boundary_facets {
            let dofs = self.cell_dofs(f.cell);
            let i = f.local_edge;
            out.push(dofs[i]);
            out.push(dofs[(i + 1) % 3]);
            let per_edge = self.degree - 1;
            out.extend_from_slice(&dofs[3 + i * per_edge..3 + (i + 1) * per_edge]);
        }
        out.sort_unstable();
        out.dedup();
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Field {
    VelocityX,
    VelocityY,
    Pressure,
}

impl Field {
    pub fn velocity(component: usize) -> Field {
        match component {
            0 => Field::VelocityX,
            _ => Field::VelocityY,
        }
    }
}

/// Dof maps for one mesh.
#[derive(Clone, Debug)]
pub struct MeshSpace {
    pub velocity: DofMap,
    pub pressure: DofMap,
    /// Offset of the first velocity-x dof in the full numbering.
    offset: usize,
}

impl MeshSpace {
    fn field_offset(&self, f: Field) -> usize {
        let nv = self.velocity.count();
        self.offset
            + match f {
                Field::VelocityX => 0,
                Field::VelocityY => nv,
                Field::Pressure => 2 * nv,
            }
    }

    fn len(&self) -> usize {
        2 * self.velocity.count() + self.pressure.count()
    }
}

/// Velocity P_k and pressure P_{k-1} per mesh, direct-summed. Background
/// dofs whose support lies only in covered cells are inactive. Coefficient
/// vectors use the active numbering.
#[derive(Clone, Debug)]
pub struct MultimeshSpace {
    pub k: usize,
    pub meshes: Vec<MeshSpace>,
    active: Vec<Option<usize>>,
    full_of_active: Vec<usize>,
    pub velocity_basis: LagrangeBasis,
    pub pressure_basis: LagrangeBasis,
}

impl MultimeshSpace {
    pub fn build(
        bg: &Mesh,
        overlap: Option<&Mesh>,
        class: &ElementClassification,
        k: usize,
    ) -> Result<Self> {
        if !(2..=3).contains(&k) {
            return Err(Error::invalid(
                "k",
                format!("Taylor-Hood velocity degree must be 2 or 3, got {k}"),
            ));
        }
        let mut meshes = Vec::new();
        let mut offset = 0;
        for m in std::iter::once(bg).chain(overlap) {
            let ms = MeshSpace {
                velocity: DofMap::build(m, k)?,
                pressure: DofMap::build(m, k - 1)?,
                offset,
            };
            offset += ms.len();
            meshes.push(ms);
        }
        let mut used = vec![false; offset];
        for (mi, ms) in meshes.iter().enumerate() {
            let ncells = if mi == BACKGROUND { bg.num_cells() } else { overlap.unwrap().num_cells() };
            for c in 0..ncells {
                if mi == BACKGROUND && !class.is_active(c) {
                    continue;
                }
                for f in [Field::VelocityX, Field::VelocityY, Field::Pressure] {
                    let dm = if f == Field::Pressure { &ms.pressure } else { &ms.velocity };
                    let base = ms.field_offset(f);
                    for &d in dm.cell_dofs(c) {
                        used[base + d] = true;
                    }
                }
            }
        }
        let mut active = vec![None; offset];
        let mut full_of_active = Vec::new();
        for (i, u) in used.iter().enumerate() {
            if *u {
                active[i] = Some(full_of_active.len());
                full_of_active.push(i);
            }
        }
        Ok(MultimeshSpace {
            k,
            meshes,
            active,
            full_of_active,
            velocity_basis: LagrangeBasis::new(k)?,
            pressure_basis: LagrangeBasis::new(k - 1)?,
        })
    }

    pub fn has_overlap(&self) -> bool {
        self.meshes.len() > 1
    }

    pub fn num_meshes(&self) -> usize {
        self.meshes.len()
    }

    /// Active dimension N.
    pub fn dim(&self) -> usize {
        self.full_of_active.len()
    }

    /// Size of the full (unmasked) numbering.
    pub fn full_dim(&self) -> usize {
        self.active.len()
    }

    pub fn dofmap(&self, mesh: usize, f: Field) -> &DofMap {
        let ms = &self.meshes[mesh];
        if f == Field::Pressure {
            &ms.pressure
        } else {
            &ms.velocity
        }
    }

    pub fn full_index(&self, mesh: usize, f: Field, dof: usize) -> usize {
        self.meshes[mesh].field_offset(f) + dof
    }

    pub fn active_index(&self, mesh: usize, f: Field, dof: usize) -> Option<usize> {
        self.active[self.full_index(mesh, f, dof)]
    }

    pub fn active_of_full(&self, full: usize) -> Option<usize> {
        self.active[full]
    }

    pub fn full_of_active(&self, a: usize) -> usize {
        self.full_of_active[a]
    }

    /// (mesh, field, local dof) for an active index.
    pub fn locate_dof(&self, a: usize) -> (usize, Field, usize) {
        let full = self.full_of_active[a];
        for (mi, ms) in self.meshes.iter().enumerate() {
            if full < ms.offset + ms.len() {
                let r = full - ms.offset;
                let nv = ms.velocity.count();
                return if r < nv {
                    (mi, Field::VelocityX, r)
                } else if r < 2 * nv {
                    (mi, Field::VelocityY, r - nv)
                } else {
                    (mi, Field::Pressure, r - 2 * nv)
                };
            }
        }
        unreachable!("active index out of range")
    }

    /// Active indices of all dofs of one cell: velocity x, velocity y,
    /// pressure, in local order.
    pub fn cell_active_dofs(&self, mesh: usize, c: usize) -> Vec<usize> {
        let mut out = Vec::new();
        for f in [Field::VelocityX, Field::VelocityY, Field::Pressure] {
            for &d in self.dofmap(mesh, f).cell_dofs(c) {
                out.push(
                    self.active_index(mesh, f, d)
                        .expect("dof of an active cell is active"),
                );
            }
        }
        out
    }

    /// Nodal interpolation of a velocity/pressure pair into the space.
    pub fn interpolate(
        &self,
        velocity: impl Fn(Point) -> [f64; 2],
        pressure: impl Fn(Point) -> f64,
    ) -> Vec<f64> {
        let mut x = vec![0.0; self.dim()];
        for (a, slot) in x.iter_mut().enumerate() {
            let (mi, f, d) = self.locate_dof(a);
            let node = self.dofmap(mi, f).nodes[d];
            *slot = match f {
                Field::VelocityX => velocity(node)[0],
                Field::VelocityY => velocity(node)[1],
                Field::Pressure => pressure(node),
            };
        }
        x
    }

    /// Values of the discrete fields of mesh `mesh` at `x`, which must lie
    /// in cell `c` (or its extension).
    pub fn evaluate_in_cell(&self, m: &Mesh, coeffs: &[f64], c: usize, x: Point) -> FieldValue {
        let mesh = m.mesh_index;
        let map = AffineMap::new(m.cell_points(c));
        let vb = eval_physical(&self.velocity_basis, &map, x);
        let pb = eval_physical(&self.pressure_basis, &map, x);
        let mut out = FieldValue::default();
        for comp in 0..2 {
            let f = Field::velocity(comp);
            for (l, &d) in self.dofmap(mesh, f).cell_dofs(c).iter().enumerate() {
                let Some(a) = self.active_index(mesh, f, d) else {
                    continue;
                };
                let w = coeffs[a];
                out.velocity[comp] += w * vb.values[l];
                out.velocity_gradient[comp][0] += w * vb.gradients[l][0];
                out.velocity_gradient[comp][1] += w * vb.gradients[l][1];
            }
        }
        for (l, &d) in self.dofmap(mesh, Field::Pressure).cell_dofs(c).iter().enumerate() {
            let Some(a) = self.active_index(mesh, Field::Pressure, d) else {
                continue;
            };
            out.pressure += coeffs[a] * pb.values[l];
            out.pressure_gradient[0] += coeffs[a] * pb.gradients[l][0];
            out.pressure_gradient[1] += coeffs[a] * pb.gradients[l][1];
        }
        out
    }

    /// Evaluates the fields of one mesh at an arbitrary point.
    pub fn evaluate_field(&self, m: &Mesh, coeffs: &[f64], x: Point) -> Result<FieldValue> {
        let c = locate_point(m, x).ok_or(Error::PointNotFound(x[0], x[1]))?;
        Ok(self.evaluate_in_cell(m, coeffs, c, x))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct FieldValue {
    pub velocity: [f64; 2],
    /// `velocity_gradient[i][j]` = ∂u_i/∂x_j.
    pub velocity_gradient: [[f64; 2]; 2],
    pub pressure: f64,
    pub pressure_gradient: [f64; 2],
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{classify_elements, generate_overlapping_mesh, generate_unit_square_mesh, make_rotated_square, CellLabel};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn dof_counts() {
        let m = generate_unit_square_mesh(2).unwrap();
        assert_eq!(DofMap::build(&m, 2).unwrap().count(), 25);
        assert_eq!(DofMap::build(&m, 1).unwrap().count(), 9);
        let m = generate_unit_square_mesh(5).unwrap();
        assert_eq!(DofMap::build(&m, 3).unwrap().count(), 16 * 16);
        assert_eq!(DofMap::build(&m, 2).unwrap().count(), 11 * 11);
    }

    #[test]
    fn shared_edge_dofs() {
        let m = generate_unit_square_mesh(3).unwrap();
        for k in 1..=3 {
            let dm = DofMap::build(&m, k).unwrap();
            for e in m.edges.iter().filter(|e| e.cells[1].is_some()) {
                let a: Vec<usize> = dm.cell_dofs(e.cells[0].unwrap()).to_vec();
                let b: Vec<usize> = dm.cell_dofs(e.cells[1].unwrap()).to_vec();
                let shared = a.iter().filter(|d| b.contains(d)).count();
                assert_eq!(shared, k + 1);
                // shared dofs sit at the same physical node
                for d in a.iter().filter(|d| b.contains(d)) {
                    let p = dm.nodes[*d];
                    let on_edge = crate::geometry::point_segment_distance(
                        p,
                        m.vertices[e.vertices[0]],
                        m.vertices[e.vertices[1]],
                    );
                    assert!(on_edge < 1e-15);
                }
            }
        }
    }

    #[test]
    fn rejects_low_degree() {
        let m = generate_unit_square_mesh(2).unwrap();
        let cl = ElementClassification::all_outside(m.num_cells());
        assert!(matches!(
            MultimeshSpace::build(&m, None, &cl, 1),
            Err(Error::InvalidParameter { name: "k", .. })
        ));
    }

    #[test]
    fn active_dofs_match_support_scan() {
        let bg = generate_unit_square_mesh(16).unwrap();
        let d = make_rotated_square([0.5, 0.5], 0.246246, 37.0).unwrap();
        let ov = generate_overlapping_mesh(&d, 8).unwrap();
        let cl = classify_elements(&bg, &d, 1e-12).unwrap();
        let s = MultimeshSpace::build(&bg, Some(&ov), &cl, 2).unwrap();
        // brute force: a background dof is inactive iff every cell listing it is covered
        let scan = |dm: &DofMap| {
            (0..dm.count())
                .filter(|&g| {
                    (0..bg.num_cells())
                        .filter(|&c| dm.cell_dofs(c).contains(&g))
                        .all(|c| cl.label(c) == CellLabel::Covered)
                })
                .count()
        };
        let v0 = s.dofmap(0, Field::VelocityX);
        let p0 = s.dofmap(0, Field::Pressure);
        let inactive = 2 * scan(v0) + scan(p0);
        assert!(inactive > 0);
        let total = 2 * v0.count() + p0.count() + 2 * 17 * 17 + 9 * 9;
        assert_eq!(s.dim(), total - inactive);
        // every dof of a cut cell is active, wherever its node is
        for c in cl.cells_with(CellLabel::Cut) {
            for f in [Field::VelocityX, Field::VelocityY, Field::Pressure] {
                for &dof in s.dofmap(0, f).cell_dofs(c) {
                    assert!(s.active_index(0, f, dof).is_some());
                }
            }
        }
    }

    #[test]
    fn single_mesh_reduction() {
        let bg = generate_unit_square_mesh(4).unwrap();
        let cl = ElementClassification::all_outside(bg.num_cells());
        let s = MultimeshSpace::build(&bg, None, &cl, 2).unwrap();
        assert_eq!(s.dim(), 2 * 81 + 25);
        assert!(!s.has_overlap());
    }

    #[test]
    fn polynomial_reproduction() {
        let bg = generate_unit_square_mesh(8).unwrap();
        let d = make_rotated_square([0.5, 0.5], 0.246246, 37.0).unwrap();
        let ov = generate_overlapping_mesh(&d, 2).unwrap();
        let cl = classify_elements(&bg, &d, 1e-12).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for k in [2, 3] {
            let s = MultimeshSpace::build(&bg, Some(&ov), &cl, k).unwrap();
            let u = |p: Point| {
                let (x, y) = (p[0], p[1]);
                if k == 2 {
                    [x * x, x + 2.0 * y]
                } else {
                    [x * x * y - y * y * y, x + 2.0 * y]
                }
            };
            let one = s.interpolate(|_| [1.0, 1.0], |_| 1.0);
            let c = s.interpolate(u, |p| p[0] - 0.5 * p[1]);
            for _ in 0..30 {
                let x = [rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)];
                for mesh in [&bg, &ov] {
                    let Some(cell) = locate_point(mesh, x) else { continue };
                    if mesh.mesh_index == BACKGROUND && !cl.is_active(cell) {
                        continue;
                    }
                    let v1 = s.evaluate_in_cell(mesh, &one, cell, x);
                    assert!((v1.velocity[0] - 1.0).abs() < 1e-13);
                    assert!((v1.pressure - 1.0).abs() < 1e-13);
                    let v = s.evaluate_in_cell(mesh, &c, cell, x);
                    let e = u(x);
                    assert!((v.velocity[0] - e[0]).abs() < 1e-12);
                    assert!((v.velocity[1] - e[1]).abs() < 1e-13);
                    assert!((v.pressure - (x[0] - 0.5 * x[1])).abs() < 1e-13);
                    if k == 2 {
                        assert!((v.velocity_gradient[0][0] - 2.0 * x[0]).abs() < 1e-12);
                        assert!(v.velocity_gradient[0][1].abs() < 1e-12);
                    }
                }
            }
        }
    }
}
