//! Polygon clipping and composite quadrature on cut cells.

use std::io::Write;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{
    distance, dot, lerp, norm, orient, signed_area, sub, BoundingBox, ConvexPolygonDomain, Point,
};
use crate::mesh::{CellLabel, ElementClassification, Mesh};
use crate::quadrature::{map_triangle_rule, reference_triangle_rule, QuadratureRule};

/// Clipped polygons below this area are reported as empty.
pub const DEGENERATE_AREA: f64 = 1e-14;

/// Keeps the part of `subject` to the left of the directed line `a` -> `b`.
/// Side values within round-off of zero are snapped onto the line.
pub fn clip_polygon_halfplane(subject: &[Point], a: Point, b: Point) -> Vec<Point> {
    let n = subject.len();
    let mut out = Vec::with_capacity(n + 2);
    if n == 0 {
        return out;
    }
    // Points within round-off of the line count as on it, so polygons
    // sharing an edge with the clip line are preserved.
    let reach = subject.iter().fold(0.0_f64, |m, p| m.max(distance(*p, a)));
    let snap = 1e-13 * distance(a, b) * reach;
    let side: Vec<f64> = subject
        .iter()
        .map(|p| {
            let s = orient(a, b, *p);
            if s.abs() <= snap {
                0.0
            } else {
                s
            }
        })
        .collect();
    for i in 0..n {
        let j = (i + 1) % n;
        let (s, e) = (subject[i], subject[j]);
        let (ds, de) = (side[i], side[j]);
        if ds >= 0.0 {
            out.push(s);
        }
        if (ds >= 0.0) != (de >= 0.0) && ds != de {
            let t = ds / (ds - de);
            // Exact endpoint hits are already emitted.
            if t > 0.0 && t < 1.0 {
                out.push(lerp(s, e, t));
            }
        }
    }
    dedup_ring(&mut out);
    out
}

fn dedup_ring(p: &mut Vec<Point>) {
    p.dedup_by(|a, b| distance(*a, *b) == 0.0);
    while p.len() > 1 && distance(p[0], p[p.len() - 1]) == 0.0 {
        p.pop();
    }
}

fn clip_by_ccw_convex(subject: &[Point], clip: &[Point]) -> Vec<Point> {
    let m = clip.len();
    let mut poly = subject.to_vec();
    for i in 0..m {
        if poly.len() < 3 {
            return Vec::new();
        }
        poly = clip_polygon_halfplane(&poly, clip[i], clip[(i + 1) % m]);
    }
    if poly.len() < 3 || signed_area(&poly) < DEGENERATE_AREA {
        return Vec::new();
    }
    poly
}

/// Sutherland-Hodgman clipping of a counterclockwise simple polygon against
/// a convex domain. Degenerate results are returned as an empty polygon.
pub fn clip_polygon_convex(subject: &[Point], clip: &ConvexPolygonDomain) -> Vec<Point> {
    clip_by_ccw_convex(subject, clip.vertices())
}

fn is_convex(p: &[Point]) -> bool {
    let n = p.len();
    (0..n).all(|i| orient(p[i], p[(i + 1) % n], p[(i + 2) % n]) >= 0.0)
}

fn segments_cross(a: Point, b: Point, c: Point, d: Point) -> bool {
    let d1 = orient(a, b, c);
    let d2 = orient(a, b, d);
    let d3 = orient(c, d, a);
    let d4 = orient(c, d, b);
    ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0)) && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
}

fn self_intersecting(p: &[Point]) -> bool {
    let n = p.len();
    for i in 0..n {
        for j in i + 1..n {
            if j == i + 1 || (i == 0 && j == n - 1) {
                continue;
            }
            if segments_cross(p[i], p[(i + 1) % n], p[j], p[(j + 1) % n]) {
                return true;
            }
        }
    }
    false
}

/// Fan triangulation for convex polygons, ear clipping otherwise.
pub fn triangulate_polygon(p: &[Point]) -> Result<Vec<[Point; 3]>> {
    let n = p.len();
    if n < 3 {
        return Ok(Vec::new());
    }
    if self_intersecting(p) {
        return Err(Error::SelfIntersecting);
    }
    if is_convex(p) {
        return Ok((1..n - 1).map(|i| [p[0], p[i], p[i + 1]]).collect());
    }
    let mut idx: Vec<usize> = (0..n).collect();
    let mut tris = Vec::with_capacity(n - 2);
    while idx.len() > 3 {
        let m = idx.len();
        let ear = (0..m).find(|&i| {
            let (a, b, c) = (p[idx[(i + m - 1) % m]], p[idx[i]], p[idx[(i + 1) % m]]);
            if orient(a, b, c) <= 0.0 {
                return false;
            }
            idx.iter().all(|&k| {
                let q = p[k];
                q == a
                    || q == b
                    || q == c
                    || !(orient(a, b, q) >= 0.0 && orient(b, c, q) >= 0.0 && orient(c, a, q) >= 0.0)
            })
        });
        let Some(i) = ear else {
            return Err(Error::SelfIntersecting);
        };
        tris.push([p[idx[(i + m - 1) % m]], p[idx[i]], p[idx[(i + 1) % m]]]);
        idx.remove(i);
    }
    tris.push([p[idx[0]], p[idx[1]], p[idx[2]]]);
    Ok(tris)
}

/// Composite rule over a polygon from its triangulation.
pub fn polygon_rule(p: &[Point], reference: &QuadratureRule) -> Result<QuadratureRule> {
    let mut rule = QuadratureRule::empty(reference.degree);
    for tri in triangulate_polygon(p)? {
        if orient(tri[0], tri[1], tri[2]) > 0.0 {
            rule.append(&map_triangle_rule(reference, tri));
        }
    }
    Ok(rule)
}

/// Part of the interface inside one background cell and on one boundary
/// facet of the overlapping mesh.
#[derive(Clone, Debug, PartialEq)]
pub struct InterfaceSegment {
    pub a: Point,
    pub b: Point,
    /// Unit normal pointing out of the overlapping domain.
    pub normal: Point,
    pub background_cell: usize,
    pub overlap_cell: usize,
    pub length: f64,
}

/// Intersection of a cut cell with one cell of the overlapping mesh.
#[derive(Clone, Debug)]
pub struct OverlapPiece {
    pub polygon: Vec<Point>,
    pub overlap_cell: usize,
    pub rule: QuadratureRule,
}

#[derive(Clone, Debug)]
pub struct CutCell {
    pub cell: usize,
    /// K ∩ Ω_1, convex and counterclockwise.
    pub inside_polygon: Vec<Point>,
    pub rule_inside: QuadratureRule,
    /// Full-cell rule followed by the negated inside rule.
    pub rule_outside: QuadratureRule,
    pub overlap_pieces: Vec<OverlapPiece>,
}

#[derive(Clone, Debug, Default)]
pub struct CutGeometry {
    pub cut_cells: Vec<CutCell>,
    /// Position in `cut_cells` for each background cell.
    pub cut_index: Vec<Option<usize>>,
    /// Sorted by background cell, then overlap cell.
    pub segments: Vec<InterfaceSegment>,
    pub order: usize,
}

impl CutGeometry {
    pub fn empty(num_bg_cells: usize, order: usize) -> Self {
        CutGeometry {
            cut_cells: Vec::new(),
            cut_index: vec![None; num_bg_cells],
            segments: Vec::new(),
            order,
        }
    }

    pub fn cut_cell(&self, bg_cell: usize) -> Option<&CutCell> {
        self.cut_index[bg_cell].map(|i| &self.cut_cells[i])
    }

    pub fn interface_length(&self) -> f64 {
        self.segments.iter().map(|s| s.length).sum()
    }

    /// Debug dump: one row per clipped polygon or segment.
    pub fn write_csv<W: Write>(&self, out: &mut W) -> Result<()> {
        writeln!(out, "kind,cell_id,overlap_cell,vertices")?;
        let fmt = |pts: &[Point]| {
            pts.iter()
                .map(|p| format!("{} {}", p[0], p[1]))
                .collect::<Vec<_>>()
                .join(";")
        };
        for cc in &self.cut_cells {
            writeln!(out, "inside,{},,{}", cc.cell, fmt(&cc.inside_polygon))?;
            for piece in &cc.overlap_pieces {
                writeln!(out, "piece,{},{},{}", cc.cell, piece.overlap_cell, fmt(&piece.polygon))?;
            }
        }
        for s in &self.segments {
            writeln!(out, "segment,{},{},{}", s.background_cell, s.overlap_cell, fmt(&[s.a, s.b]))?;
        }
        Ok(())
    }
}

/// Parameter interval of the segment `a`-`b` inside the closed triangle.
fn clip_segment_to_triangle(a: Point, b: Point, tri: &[Point; 3], eps: f64) -> Option<(f64, f64)> {
    let (mut t0, mut t1) = (0.0f64, 1.0f64);
    for i in 0..3 {
        let (p, q) = (tri[i], tri[(i + 1) % 3]);
        let l = distance(p, q);
        // signed distance to the edge line, positive inside
        let fa = orient(p, q, a) / l;
        let fb = orient(p, q, b) / l;
        if fa < -eps && fb < -eps {
            return None;
        }
        if fa >= -eps && fb >= -eps {
            continue;
        }
        let t = fa / (fa - fb);
        if fa < -eps {
            t0 = t0.max(t);
        } else {
            t1 = t1.min(t);
        }
    }
    (t1 > t0).then_some((t0, t1))
}

/// Edge of `tri` the segment lies on, if any.
fn collinear_edge(a: Point, b: Point, tri: &[Point; 3], eps: f64) -> Option<usize> {
    (0..3).find(|&i| {
        let (p, q) = (tri[i], tri[(i + 1) % 3]);
        let l = distance(p, q);
        (orient(p, q, a) / l).abs() <= eps && (orient(p, q, b) / l).abs() <= eps
    })
}

/// Interface segments: every boundary facet of the overlapping mesh is
/// clipped against every active background cell. A facet lying along a
/// background edge is assigned to the cell on the outer side only.
fn interface_segments(bg: &Mesh, overlap: &Mesh, class: &ElementClassification) -> Vec<InterfaceSegment> {
    let eps = 1e-12 * bg.h;
    let facets: Vec<(Point, Point, Point, usize, BoundingBox)> = overlap
        .boundary_facets
        .iter()
        .map(|f| {
            let a = overlap.vertices[f.vertices[0]];
            let b = overlap.vertices[f.vertices[1]];
            let e = sub(b, a);
            let l = norm(e);
            // counterclockwise cell: outward is to the right of a -> b
            let n = [e[1] / l, -e[0] / l];
            (a, b, n, f.cell, BoundingBox::of(&[a, b]))
        })
        .collect();
    let per_cell: Vec<Vec<InterfaceSegment>> = (0..bg.num_cells())
        .into_par_iter()
        .map(|c| {
            let mut out = Vec::new();
            if !class.is_active(c) {
                return out;
            }
            let tri = bg.cell_points(c);
            let bbox = BoundingBox::of(&tri);
            for &(a, b, n, oc, fb) in &facets {
                if !bbox.overlaps(&fb, eps) {
                    continue;
                }
                if let Some(e) = collinear_edge(a, b, &tri, eps) {
                    let opposite = tri[(e + 2) % 3];
                    if dot(sub(opposite, a), n) <= 0.0 {
                        continue;
                    }
                }
                let Some((t0, t1)) = clip_segment_to_triangle(a, b, &tri, eps) else {
                    continue;
                };
                let (p, q) = (lerp(a, b, t0), lerp(a, b, t1));
                let length = distance(p, q);
                if length <= 1e-14 * bg.h {
                    continue;
                }
                out.push(InterfaceSegment {
                    a: p,
                    b: q,
                    normal: n,
                    background_cell: c,
                    overlap_cell: oc,
                    length,
                });
            }
            out.sort_by(|x, y| {
                (x.overlap_cell, x.a[0], x.a[1])
                    .partial_cmp(&(y.overlap_cell, y.a[0], y.a[1]))
                    .unwrap()
            });
            out
        })
        .collect();
    per_cell.into_iter().flatten().collect()
}

/// Clipped polygons, composite rules, interface segments, and overlap
/// pieces for every cut cell; `order` is the polynomial exactness of all
/// volume rules.
pub fn build_cut_geometry(
    bg: &Mesh,
    overlap: &Mesh,
    domain: &ConvexPolygonDomain,
    class: &ElementClassification,
    order: usize,
) -> Result<CutGeometry> {
    let reference = reference_triangle_rule(order)?;
    let overlap_boxes: Vec<BoundingBox> = (0..overlap.num_cells()).map(|c| overlap.cell_bbox(c)).collect();
    let cut_ids: Vec<usize> = class.cells_with(CellLabel::Cut).collect();
    let cut_cells: Vec<CutCell> = cut_ids
        .par_iter()
        .map(|&c| -> Result<CutCell> {
            let tri = bg.cell_points(c);
            let inside_polygon = clip_polygon_convex(&tri, domain);
            let rule_inside = polygon_rule(&inside_polygon, &reference)?;
            let mut rule_outside = map_triangle_rule(&reference, tri);
            rule_outside.append_negated(&rule_inside);
            let ibox = BoundingBox::of(&inside_polygon);
            let mut overlap_pieces = Vec::new();
            for (oc, obox) in overlap_boxes.iter().enumerate() {
                if !ibox.overlaps(obox, 0.0) {
                    continue;
                }
                let polygon = clip_by_ccw_convex(&inside_polygon, &overlap.cell_points(oc));
                if polygon.is_empty() {
                    continue;
                }
                let rule = polygon_rule(&polygon, &reference)?;
                overlap_pieces.push(OverlapPiece {
                    polygon,
                    overlap_cell: oc,
                    rule,
                });
            }
            Ok(CutCell {
                cell: c,
                inside_polygon,
                rule_inside,
                rule_outside,
                overlap_pieces,
            })
        })
        .collect::<Result<_>>()?;
    let mut cut_index = vec![None; bg.num_cells()];
    for (i, cc) in cut_cells.iter().enumerate() {
        cut_index[cc.cell] = Some(i);
    }
    let geometry = CutGeometry {
        cut_cells,
        cut_index,
        segments: interface_segments(bg, overlap, class),
        order,
    };
    check_consistency(bg, domain, &geometry)?;
    Ok(geometry)
}

fn check_consistency(bg: &Mesh, domain: &ConvexPolygonDomain, g: &CutGeometry) -> Result<()> {
    for cc in &g.cut_cells {
        let area = bg.cell_area(cc.cell);
        let dev = (cc.rule_inside.measure() + cc.rule_outside.measure() - area).abs();
        if dev > 1e-12 {
            return Err(Error::GeometryConsistency {
                what: format!("inside + outside measure of cell {}", cc.cell),
                deviation: dev,
            });
        }
        let pieces: f64 = cc.overlap_pieces.iter().map(|p| signed_area(&p.polygon)).sum();
        let dev = (pieces - signed_area(&cc.inside_polygon)).abs();
        if dev > 1e-12 {
            return Err(Error::GeometryConsistency {
                what: format!("overlap pieces of cell {}", cc.cell),
                deviation: dev,
            });
        }
    }
    let dev = (g.interface_length() - domain.perimeter()).abs();
    if dev > 1e-10 {
        return Err(Error::GeometryConsistency {
            what: "interface length".into(),
            deviation: dev,
        });
    }
    Ok(())
}

/// Barycentric coordinates of `x` in the triangle.
pub fn barycentric(tri: &[Point; 3], x: Point) -> [f64; 3] {
    let det = orient(tri[0], tri[1], tri[2]);
    let l1 = orient(tri[0], x, tri[2]) / det;
    let l2 = orient(tri[0], tri[1], x) / det;
    [1.0 - l1 - l2, l1, l2]
}

/// Lowest-numbered cell whose closed triangle contains `x`.
pub fn locate_point(m: &Mesh, x: Point) -> Option<usize> {
    (0..m.num_cells()).find(|&c| {
        let tri = m.cell_points(c);
        let bb = BoundingBox::of(&tri);
        if !bb.overlaps(&BoundingBox { min: x, max: x }, 1e-12 * m.h) {
            return false;
        }
        barycentric(&tri, x).iter().all(|l| *l >= -1e-12)
    })
}
