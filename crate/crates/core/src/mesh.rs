//! Background and overlapping triangulations, and the classification of
//! background cells against the overlapping domain.

use std::collections::BTreeMap;
use std::io::Write;

use crate::cutgeom::clip_polygon_convex;
use crate::error::{Error, Result};
use crate::geometry::{
    add, distance, orient, scale, signed_area, sub, BoundingBox, ConvexPolygonDomain, Point,
};

/// Index of the background mesh.
pub const BACKGROUND: usize = 0;
/// Index of the overlapping mesh.
pub const OVERLAP: usize = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Edge {
    /// Vertex indices, `vertices[0] < vertices[1]`.
    pub vertices: [usize; 2],
    /// Adjacent cells; the second is `None` on the boundary.
    pub cells: [Option<usize>; 2],
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BoundaryFacet {
    /// Endpoints in the counterclockwise order of the owning cell.
    pub vertices: [usize; 2],
    pub cell: usize,
    /// Local edge index in the owning cell (edge `i` joins local vertices
    /// `i` and `i + 1`).
    pub local_edge: usize,
}

#[derive(Clone, Debug)]
pub struct Mesh {
    pub vertices: Vec<Point>,
    pub cells: Vec<[usize; 3]>,
    /// Sorted lexicographically by vertex pair.
    pub edges: Vec<Edge>,
    /// Edge ids of each cell, local edge `i` joining local vertices `i`, `i+1`.
    pub cell_edges: Vec<[usize; 3]>,
    pub boundary_facets: Vec<BoundaryFacet>,
    pub mesh_index: usize,
    /// Longest edge length over the mesh.
    pub h: f64,
}

impl Mesh {
    /// Builds the edge topology and validates orientation.
    pub fn from_cells(vertices: Vec<Point>, cells: Vec<[usize; 3]>, mesh_index: usize) -> Result<Self> {
        let mut map: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
        for (c, cell) in cells.iter().enumerate() {
            let area = orient(vertices[cell[0]], vertices[cell[1]], vertices[cell[2]]);
            if !(area > 0.0) {
                return Err(Error::Structure(format!(
                    "cell {c} of mesh {mesh_index} is not positively oriented"
                )));
            }
            for i in 0..3 {
                let (a, b) = (cell[i], cell[(i + 1) % 3]);
                map.entry((a.min(b), a.max(b))).or_default().push(c);
            }
        }
        let mut edges = Vec::with_capacity(map.len());
        let mut index = BTreeMap::new();
        for (key, adj) in &map {
            if adj.len() > 2 {
                return Err(Error::Structure(format!(
                    "edge {key:?} of mesh {mesh_index} shared by {} cells",
                    adj.len()
                )));
            }
            index.insert(*key, edges.len());
            edges.push(Edge {
                vertices: [key.0, key.1],
                cells: [Some(adj[0]), adj.get(1).copied()],
            });
        }
        let mut cell_edges = Vec::with_capacity(cells.len());
        let mut boundary_facets = Vec::new();
        let mut h: f64 = 0.0;
        for (c, cell) in cells.iter().enumerate() {
            let mut ids = [0; 3];
            for i in 0..3 {
                let (a, b) = (cell[i], cell[(i + 1) % 3]);
                let e = index[&(a.min(b), a.max(b))];
                ids[i] = e;
                h = h.max(distance(vertices[a], vertices[b]));
                if edges[e].cells[1].is_none() {
                    boundary_facets.push(BoundaryFacet {
                        vertices: [a, b],
                        cell: c,
                        local_edge: i,
                    });
                }
            }
            cell_edges.push(ids);
        }
        Ok(Mesh {
            vertices,
            cells,
            edges,
            cell_edges,
            boundary_facets,
            mesh_index,
            h,
        })
    }

    pub fn num_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn cell_points(&self, c: usize) -> [Point; 3] {
        let [a, b, d] = self.cells[c];
        [self.vertices[a], self.vertices[b], self.vertices[d]]
    }

    pub fn cell_area(&self, c: usize) -> f64 {
        signed_area(&self.cell_points(c))
    }

    /// Longest edge of cell `c`; the local mesh size used in the forms.
    pub fn cell_size(&self, c: usize) -> f64 {
        let p = self.cell_points(c);
        distance(p[0], p[1])
            .max(distance(p[1], p[2]))
            .max(distance(p[2], p[0]))
    }

    pub fn cell_bbox(&self, c: usize) -> BoundingBox {
        BoundingBox::of(&self.cell_points(c))
    }

    pub fn edge_length_ratio(&self) -> f64 {
        let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
        for e in &self.edges {
            let l = distance(self.vertices[e.vertices[0]], self.vertices[e.vertices[1]]);
            lo = lo.min(l);
            hi = hi.max(l);
        }
        hi / lo
    }

    /// Legacy VTK ASCII dump. `cell_data` holds optional per-cell scalars.
    pub fn write_vtk<W: Write>(&self, out: &mut W, cell_data: &[(&str, Vec<f64>)]) -> Result<()> {
        writeln!(out, "# vtk DataFile Version 3.0")?;
        writeln!(out, "mesh {}", self.mesh_index)?;
        writeln!(out, "ASCII")?;
        writeln!(out, "DATASET UNSTRUCTURED_GRID")?;
        writeln!(out, "POINTS {} double", self.vertices.len())?;
        for v in &self.vertices {
            writeln!(out, "{} {} 0", v[0], v[1])?;
        }
        writeln!(out, "CELLS {} {}", self.cells.len(), 4 * self.cells.len())?;
        for c in &self.cells {
            writeln!(out, "3 {} {} {}", c[0], c[1], c[2])?;
        }
        writeln!(out, "CELL_TYPES {}", self.cells.len())?;
        for _ in &self.cells {
            writeln!(out, "5")?;
        }
        if !cell_data.is_empty() {
            writeln!(out, "CELL_DATA {}", self.cells.len())?;
            for (name, values) in cell_data {
                writeln!(out, "SCALARS {name} double 1")?;
                writeln!(out, "LOOKUP_TABLE default")?;
                for v in values {
                    writeln!(out, "{v}")?;
                }
            }
        }
        Ok(())
    }
}

/// Structured triangulation of the unit square: `n x n` squares, each split
/// along the diagonal from its lower-left to its upper-right corner.
pub fn generate_unit_square_mesh(n: usize) -> Result<Mesh> {
    if n == 0 {
        return Err(Error::invalid("n", "background resolution must be at least 1"));
    }
    let h = 1.0 / n as f64;
    let mut vertices = Vec::with_capacity((n + 1) * (n + 1));
    for j in 0..=n {
        for i in 0..=n {
            vertices.push([i as f64 * h, j as f64 * h]);
        }
    }
    structured_cells(n, vertices, BACKGROUND)
}

fn structured_cells(n: usize, vertices: Vec<Point>, mesh_index: usize) -> Result<Mesh> {
    let id = |i: usize, j: usize| j * (n + 1) + i;
    let mut cells = Vec::with_capacity(2 * n * n);
    for j in 0..n {
        for i in 0..n {
            let (v00, v10, v11, v01) = (id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1));
            cells.push([v00, v10, v11]);
            cells.push([v00, v11, v01]);
        }
    }
    Mesh::from_cells(vertices, cells, mesh_index)
}

/// Square with the given center and side, rotated counterclockwise by
/// `angle_deg` degrees. It must lie strictly inside the unit square.
pub fn make_rotated_square(center: Point, side: f64, angle_deg: f64) -> Result<ConvexPolygonDomain> {
    if !(side > 0.0) || !side.is_finite() {
        return Err(Error::invalid("side", format!("side length {side} must be positive")));
    }
    let (s, c) = angle_deg.to_radians().sin_cos();
    let half = 0.5 * side;
    let corners = [[-half, -half], [half, -half], [half, half], [-half, half]];
    let vertices: Vec<Point> = corners
        .iter()
        .map(|p| add(center, [c * p[0] - s * p[1], s * p[0] + c * p[1]]))
        .collect();
    if vertices
        .iter()
        .any(|v| !(v[0] > 0.0 && v[0] < 1.0 && v[1] > 0.0 && v[1] < 1.0))
    {
        return Err(Error::DomainOutsideBackground);
    }
    ConvexPolygonDomain::new(vertices)
}

/// Fitted triangulation of a parallelogram domain: the structured unit
/// square mesh mapped affinely onto it, so the boundary facets tile the
/// domain boundary.
pub fn generate_overlapping_mesh(domain: &ConvexPolygonDomain, n1: usize) -> Result<Mesh> {
    if n1 == 0 {
        return Err(Error::invalid("n1", "overlap resolution must be at least 1"));
    }
    let v = domain.vertices();
    if v.len() != 4 {
        return Err(Error::invalid(
            "domain",
            "overlapping mesh generation requires a four-sided domain",
        ));
    }
    let e1 = sub(v[1], v[0]);
    let e2 = sub(v[3], v[0]);
    let gap = distance(add(v[0], add(e1, e2)), v[2]);
    if gap > 1e-12 * distance(v[0], v[2]) {
        return Err(Error::invalid("domain", "overlapping domain is not a parallelogram"));
    }
    let step = 1.0 / n1 as f64;
    let mut vertices = Vec::with_capacity((n1 + 1) * (n1 + 1));
    for j in 0..=n1 {
        for i in 0..=n1 {
            // Corner rows and columns are pinned to the exact domain vertices.
            let p = match (i == n1, j == n1) {
                (false, false) => add(v[0], add(scale(e1, i as f64 * step), scale(e2, j as f64 * step))),
                (true, false) => add(v[1], scale(sub(v[2], v[1]), j as f64 * step)),
                (false, true) => add(v[3], scale(sub(v[2], v[3]), i as f64 * step)),
                (true, true) => v[2],
            };
            vertices.push(p);
        }
    }
    structured_cells(n1, vertices, OVERLAP)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CellLabel {
    /// Entirely outside the overlapping domain (member of the inf-sup
    /// stable region).
    UncutOutside,
    /// Has positive area on both sides of the interface.
    Cut,
    /// Entirely inside the closed overlapping domain; removed.
    Covered,
}

#[derive(Clone, Debug)]
pub struct ElementClassification {
    pub labels: Vec<CellLabel>,
    /// Area of each cell's intersection with the overlapping domain.
    pub inside_area: Vec<f64>,
}

impl ElementClassification {
    /// Classification when there is no overlapping domain.
    pub fn all_outside(num_cells: usize) -> Self {
        ElementClassification {
            labels: vec![CellLabel::UncutOutside; num_cells],
            inside_area: vec![0.0; num_cells],
        }
    }

    pub fn label(&self, c: usize) -> CellLabel {
        self.labels[c]
    }

    /// Member of the active background mesh (not covered).
    pub fn is_active(&self, c: usize) -> bool {
        self.labels[c] != CellLabel::Covered
    }

    pub fn cells_with(&self, label: CellLabel) -> impl Iterator<Item = usize> + '_ {
        self.labels
            .iter()
            .enumerate()
            .filter(move |(_, l)| **l == label)
            .map(|(c, _)| c)
    }

    pub fn count(&self, label: CellLabel) -> usize {
        self.labels.iter().filter(|l| **l == label).count()
    }
}

/// Labels every background cell. A cell is cut when both its intersection
/// with the domain and its remainder exceed `tol` times its diameter in
/// area.
pub fn classify_elements(
    bg: &Mesh,
    domain: &ConvexPolygonDomain,
    tol: f64,
) -> Result<ElementClassification> {
    if !(tol > 0.0) {
        return Err(Error::invalid("tol", "classification tolerance must be positive"));
    }
    let dbox = domain.bounding_box();
    let mut labels = Vec::with_capacity(bg.num_cells());
    let mut inside_area = Vec::with_capacity(bg.num_cells());
    for c in 0..bg.num_cells() {
        let pts = bg.cell_points(c);
        let area = signed_area(&pts);
        let a_in = if bg.cell_bbox(c).overlaps(&dbox, 0.0) {
            signed_area(&clip_polygon_convex(&pts, domain))
        } else {
            0.0
        };
        let thresh = tol * bg.cell_size(c);
        let label = if a_in <= thresh {
            CellLabel::UncutOutside
        } else if area - a_in <= thresh {
            CellLabel::Covered
        } else {
            CellLabel::Cut
        };
        if label == CellLabel::Cut && (domain.area() - a_in).abs() <= thresh {
            return Err(Error::OverlapTooCoarse { cell: c });
        }
        labels.push(label);
        inside_area.push(a_in);
    }
    Ok(ElementClassification { labels, inside_area })
}

#[cfg(test)]
mod tests {
    use super::*;

    const SIDE: f64 = 0.246246;

    fn default_domain() -> ConvexPolygonDomain {
        make_rotated_square([0.5, 0.5], SIDE, 37.0).unwrap()
    }

    #[test]
    fn unit_square_counts() {
        let m1 = generate_unit_square_mesh(1).unwrap();
        assert_eq!((m1.num_cells(), m1.num_vertices()), (2, 4));
        let m2 = generate_unit_square_mesh(2).unwrap();
        assert_eq!((m2.num_cells(), m2.num_vertices()), (8, 9));
        let m4 = generate_unit_square_mesh(4).unwrap();
        let total: f64 = (0..m4.num_cells()).map(|c| m4.cell_area(c)).sum();
        assert!((total - 1.0).abs() < 1e-14);
        assert!((m4.h - 2f64.sqrt() / 4.0).abs() < 1e-15);
        assert!(generate_unit_square_mesh(0).is_err());
    }

    #[test]
    fn facet_sharing() {
        for n in [1, 3, 8] {
            let m = generate_unit_square_mesh(n).unwrap();
            for e in &m.edges {
                let a = m.vertices[e.vertices[0]];
                let b = m.vertices[e.vertices[1]];
                let on_boundary = |p: Point| p[0] == 0.0 || p[0] == 1.0 || p[1] == 0.0 || p[1] == 1.0;
                let boundary_edge =
                    on_boundary(a) && on_boundary(b) && (a[0] == b[0] || a[1] == b[1]);
                assert_eq!(e.cells[1].is_none(), boundary_edge);
            }
            assert_eq!(m.boundary_facets.len(), 4 * n);
            assert!(m.edge_length_ratio() <= 4.0);
        }
    }

    #[test]
    fn rotated_square() {
        let d = default_domain();
        assert!((d.area() - SIDE * SIDE).abs() < 1e-15);
        assert!((d.area() - 0.060637092516).abs() < 1e-12);
        let d0 = make_rotated_square([0.5, 0.5], 0.5, 0.0).unwrap();
        assert_eq!(
            d0.vertices(),
            &[[0.25, 0.25], [0.75, 0.25], [0.75, 0.75], [0.25, 0.75]]
        );
        for angle in [0.0, 13.0, 37.0, 90.0, 211.5] {
            let d = make_rotated_square([0.5, 0.5], 0.3, angle).unwrap();
            let v = d.vertices();
            for i in 0..4 {
                assert!(orient(v[i], v[(i + 1) % 4], v[(i + 2) % 4]) > 0.0);
            }
        }
        assert!(matches!(
            make_rotated_square([0.1, 0.5], 0.3, 0.0),
            Err(Error::DomainOutsideBackground)
        ));
        assert!(make_rotated_square([0.5, 0.5], -1.0, 0.0).is_err());
    }

    #[test]
    fn overlapping_mesh_covers_domain() {
        let sq = make_rotated_square([0.5, 0.5], 0.5, 0.0).unwrap();
        let m = generate_overlapping_mesh(&sq, 1).unwrap();
        assert_eq!(m.num_cells(), 2);
        let a: f64 = (0..2).map(|c| m.cell_area(c)).sum();
        assert!((a - 0.25).abs() < 1e-14);

        let d = default_domain();
        for n1 in [1, 4, 7] {
            let m = generate_overlapping_mesh(&d, n1).unwrap();
            let a: f64 = (0..m.num_cells()).map(|c| m.cell_area(c)).sum();
            assert!((a - SIDE * SIDE).abs() < 1e-12);
            for f in &m.boundary_facets {
                for v in f.vertices {
                    assert!(d.distance_to_boundary(m.vertices[v]) <= 1e-12);
                }
            }
        }
    }

    #[test]
    fn classification_basics() {
        let bg = generate_unit_square_mesh(16).unwrap();
        let d = default_domain();
        let cl = classify_elements(&bg, &d, 1e-12).unwrap();
        // cell 0 at the origin is far away
        assert_eq!(cl.label(0), CellLabel::UncutOutside);
        // the cells at the center of the domain are covered
        let center = (0..bg.num_cells())
            .find(|&c| {
                let p = bg.cell_points(c);
                p.iter().all(|v| distance(*v, [0.5, 0.5]) < 0.1)
            })
            .unwrap();
        assert_eq!(cl.label(center), CellLabel::Covered);
        for c in cl.cells_with(CellLabel::Cut) {
            let g = crate::geometry::centroid(&bg.cell_points(c));
            assert!(d.distance_to_boundary(g) <= 2f64.sqrt() / 16.0);
        }
        let total: f64 = (0..bg.num_cells()).map(|c| bg.cell_area(c)).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn overlap_too_coarse() {
        let bg = generate_unit_square_mesh(2).unwrap();
        let d = make_rotated_square([0.7, 0.3], 0.02, 10.0).unwrap();
        assert!(matches!(
            classify_elements(&bg, &d, 1e-12),
            Err(Error::OverlapTooCoarse { .. })
        ));
    }

    #[test]
    fn cut_count_scales_with_perimeter() {
        let d = default_domain();
        let count = |n| {
            let bg = generate_unit_square_mesh(n).unwrap();
            classify_elements(&bg, &d, 1e-12).unwrap().count(CellLabel::Cut)
        };
        for n in [8, 16, 32] {
            assert!(count(2 * n) <= 4 * count(n));
        }
    }

    #[test]
    fn labels_stable_under_tolerance() {
        let d = default_domain();
        for n in [8, 16, 32] {
            let bg = generate_unit_square_mesh(n).unwrap();
            let a = classify_elements(&bg, &d, 1e-12).unwrap();
            let b = classify_elements(&bg, &d, 1e-11).unwrap();
            let c = classify_elements(&bg, &d, 1e-13).unwrap();
            assert_eq!(a.labels, b.labels);
            assert_eq!(a.labels, c.labels);
        }
    }
}
