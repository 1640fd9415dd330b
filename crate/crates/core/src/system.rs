//! Global assembly over both meshes, boundary conditions, the mean-pressure
//! multiplier, and the sparse direct solve.

use std::io::Write;

use faer::linalg::solvers::Solve;
use faer::prelude::*;
use faer::sparse::linalg::solvers::Lu;
use faer::sparse::linalg::LuError;
use faer::sparse::{SparseColMat, Triplet};
use rayon::prelude::*;

use crate::cutgeom::{build_cut_geometry, CutGeometry};
use crate::error::{Error, Result};
use crate::forms::{
    gradient_gram, interface_energy_gram, least_squares_terms, nitsche_interface_terms,
    overlap_stabilization, pressure_mass, pressure_mean, source_volume, volume_terms, CellRef,
    DiscretizationParams, LeastSquaresRegion, LocalTensor,
};
use crate::geometry::{ConvexPolygonDomain, Point};
use crate::mesh::{classify_elements, CellLabel, ElementClassification, Mesh, BACKGROUND};
use crate::quadrature::{map_triangle_rule, reference_triangle_rule, segment_rule, QuadratureRule};
use crate::space::{Field, MultimeshSpace};

/// Default absolute tolerance of the element classification.
pub const CLASSIFICATION_TOL: f64 = 1e-12;
/// Largest accepted relative residual of a direct solve.
pub const SOLVE_TOLERANCE: f64 = 1e-9;

/// Compressed sparse row matrix with sorted column indices.
#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix {
    pub nrows: usize,
    pub ncols: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub values: Vec<f64>,
}

impl CsrMatrix {
    /// Duplicates are summed in their input order after a stable sort by
    /// (row, column), so equal inputs give bitwise-equal matrices.
    pub fn from_triplets(nrows: usize, ncols: usize, mut triplets: Vec<(usize, usize, f64)>) -> Self {
        triplets.sort_by_key(|t| (t.0, t.1));
        let mut row_ptr = vec![0; nrows + 1];
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in triplets {
            assert!(r < nrows && c < ncols, "triplet ({r}, {c}) outside {nrows}x{ncols}");
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                col_idx.push(c);
                values.push(v);
                row_ptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for i in 0..nrows {
            row_ptr[i + 1] += row_ptr[i];
        }
        CsrMatrix {
            nrows,
            ncols,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[r.clone()].iter().copied().zip(self.values[r].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.col_idx[r.clone()].binary_search(&j) {
            Ok(p) => self.values[r.start + p],
            Err(_) => 0.0,
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.ncols);
        (0..self.nrows).map(|i| self.row(i).map(|(j, v)| v * x[j]).sum()).collect()
    }

    /// `y^T A x`.
    pub fn bilinear(&self, y: &[f64], x: &[f64]) -> f64 {
        self.matvec(x).iter().zip(y).map(|(a, b)| a * b).sum()
    }

    pub fn transpose(&self) -> CsrMatrix {
        let mut t = Vec::with_capacity(self.nnz());
        for i in 0..self.nrows {
            for (j, v) in self.row(i) {
                t.push((j, i, v));
            }
        }
        CsrMatrix::from_triplets(self.ncols, self.nrows, t)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// max |A_ij - A_ji|.
    pub fn max_asymmetry(&self) -> f64 {
        let mut m: f64 = 0.0;
        for i in 0..self.nrows {
            for (j, v) in self.row(i) {
                m = m.max((v - self.get(j, i)).abs());
            }
        }
        m
    }

    /// Rows `rows` and columns `cols`, renumbered in the given order.
    pub fn submatrix(&self, rows: &[usize], cols: &[usize]) -> CsrMatrix {
        let mut col_map = vec![usize::MAX; self.ncols];
        for (k, &c) in cols.iter().enumerate() {
            col_map[c] = k;
        }
        let mut t = Vec::new();
        for (r, &i) in rows.iter().enumerate() {
            for (j, v) in self.row(i) {
                if col_map[j] != usize::MAX {
                    t.push((r, col_map[j], v));
                }
            }
        }
        CsrMatrix::from_triplets(rows.len(), cols.len(), t)
    }

    pub fn to_faer(&self) -> Result<SparseColMat<usize, f64>> {
        let mut t = Vec::with_capacity(self.nnz());
        for i in 0..self.nrows {
            for (j, v) in self.row(i) {
                t.push(Triplet::new(i, j, v));
            }
        }
        SparseColMat::try_new_from_triplets(self.nrows, self.ncols, &t)
            .map_err(|e| Error::Structure(format!("sparse matrix construction failed: {e:?}")))
    }

    /// MatrixMarket coordinate format, 1-based indices.
    pub fn write_matrix_market<W: Write>(&self, out: &mut W) -> Result<()> {
        writeln!(out, "%%MatrixMarket matrix coordinate real general")?;
        writeln!(out, "{} {} {}", self.nrows, self.ncols, self.nnz())?;
        for i in 0..self.nrows {
            for (j, v) in self.row(i) {
                writeln!(out, "{} {} {:.17e}", i + 1, j + 1, v)?;
            }
        }
        Ok(())
    }
}

/// Polygonal overlapping domain with its fitted mesh.
#[derive(Clone, Debug)]
pub struct Overlap {
    pub domain: ConvexPolygonDomain,
    pub mesh: Mesh,
}

/// Meshes, cut geometry, and function space of one configuration.
#[derive(Clone, Debug)]
pub struct Discretization {
    pub background: Mesh,
    pub overlap: Option<Overlap>,
    pub classification: ElementClassification,
    pub geometry: CutGeometry,
    pub space: MultimeshSpace,
    pub params: DiscretizationParams,
    is_pressure: Vec<bool>,
    reference_rule: QuadratureRule,
}

impl Discretization {
    pub fn new(background: Mesh, overlap: Option<Overlap>, params: DiscretizationParams) -> Result<Self> {
        params.validate()?;
        let (classification, geometry) = match &overlap {
            Some(o) => {
                let c = classify_elements(&background, &o.domain, CLASSIFICATION_TOL)?;
                let g = build_cut_geometry(&background, &o.mesh, &o.domain, &c, params.volume_order)?;
                (c, g)
            }
            None => (
                ElementClassification::all_outside(background.num_cells()),
                CutGeometry::empty(background.num_cells(), params.volume_order),
            ),
        };
        let space = MultimeshSpace::build(&background, overlap.as_ref().map(|o| &o.mesh), &classification, params.k)?;
        let is_pressure = (0..space.dim()).map(|a| space.locate_dof(a).1 == Field::Pressure).collect();
        Ok(Discretization {
            reference_rule: reference_triangle_rule(params.volume_order)?,
            background,
            overlap,
            classification,
            geometry,
            space,
            params,
            is_pressure,
        })
    }

    pub fn dim(&self) -> usize {
        self.space.dim()
    }

    pub fn overlap_mesh(&self) -> Option<&Mesh> {
        self.overlap.as_ref().map(|o| &o.mesh)
    }

    pub fn mesh(&self, index: usize) -> &Mesh {
        if index == BACKGROUND {
            &self.background
        } else {
            self.overlap_mesh().expect("no overlapping mesh")
        }
    }

    pub fn is_pressure(&self, a: usize) -> bool {
        self.is_pressure[a]
    }

    /// Full-cell rule of the volume order.
    pub fn cell_rule(&self, m: &Mesh, c: usize) -> QuadratureRule {
        map_triangle_rule(&self.reference_rule, m.cell_points(c))
    }

    /// Rule on K ∩ Ω_0 for a background cell; none for covered cells.
    pub fn physical_rule(&self, c: usize) -> Option<QuadratureRule> {
        match self.classification.label(c) {
            CellLabel::UncutOutside => Some(self.cell_rule(&self.background, c)),
            CellLabel::Cut => Some(self.geometry.cut_cell(c).expect("cut cell geometry").rule_outside.clone()),
            CellLabel::Covered => None,
        }
    }

    /// Active velocity dofs of the background mesh on the outer boundary,
    /// sorted.
    pub fn dirichlet_dofs(&self) -> Vec<usize> {
        let mut out = Vec::new();
        for f in [Field::VelocityX, Field::VelocityY] {
            for d in self.space.dofmap(BACKGROUND, f).boundary_dofs(&self.background) {
                if let Some(a) = self.space.active_index(BACKGROUND, f, d) {
                    out.push(a);
                }
            }
        }
        out.sort_unstable();
        out.dedup();
        out
    }

    /// Active dofs that are neither pressure nor Dirichlet velocity.
    pub fn free_velocity_dofs(&self) -> Vec<usize> {
        let dir = self.dirichlet_dofs();
        (0..self.dim())
            .filter(|a| !self.is_pressure[*a] && dir.binary_search(a).is_err())
            .collect()
    }

    pub fn pressure_dofs(&self) -> Vec<usize> {
        (0..self.dim()).filter(|a| self.is_pressure[*a]).collect()
    }

    fn interface_rule(&self, a: Point, b: Point) -> Result<QuadratureRule> {
        segment_rule(a, b, self.params.interface_order)
    }

    /// Runs `work` over every background cell, every overlapping cell, and
    /// every interface segment, in parallel, keeping the item order.
    fn collect_items<F>(&self, work: F) -> Result<Vec<(Block, LocalTensor)>>
    where
        F: Fn(Item) -> Result<Vec<(Block, LocalTensor)>> + Sync,
    {
        let nb = self.background.num_cells();
        let no = self.overlap_mesh().map_or(0, |m| m.num_cells());
        let ns = self.geometry.segments.len();
        let parts = (0..nb + no + ns)
            .into_par_iter()
            .map(|i| {
                let item = if i < nb {
                    Item::Background(i)
                } else if i < nb + no {
                    Item::Overlap(i - nb)
                } else {
                    Item::Segment(i - nb - no)
                };
                work(item)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(parts.into_iter().flatten().collect())
    }

    fn accumulate(&self, tensors: &[(Block, LocalTensor)], terms: &Terms, size: usize) -> (Vec<(usize, usize, f64)>, Vec<f64>) {
        let mut trip = Vec::new();
        let mut rhs = vec![0.0; size];
        for (block, t) in tensors {
            let n = t.size();
            if !t.matrix.is_empty() {
                for i in 0..n {
                    let pi = self.is_pressure[t.dofs[i]];
                    for j in 0..n {
                        let pj = self.is_pressure[t.dofs[j]];
                        if terms.keeps(*block, pi, pj) {
                            let v = t.matrix[i * n + j];
                            if v != 0.0 {
                                trip.push((t.dofs[i], t.dofs[j], v));
                            }
                        }
                    }
                }
            }
            if !t.rhs.is_empty() && terms.keeps_load(*block) {
                for (i, v) in t.rhs.iter().enumerate() {
                    rhs[t.dofs[i]] += v;
                }
            }
        }
        (trip, rhs)
    }

    /// Assembles the selected terms of the discrete form on the active dofs,
    /// together with the load if `f` is given.
    pub fn assemble_operator(&self, terms: &Terms, f: Option<&(dyn Fn(Point) -> [f64; 2] + Sync)>) -> Result<(CsrMatrix, Vec<f64>)> {
        let zero = |_: Point| [0.0; 2];
        let force: &(dyn Fn(Point) -> [f64; 2] + Sync) = f.unwrap_or(&zero);
        let sp = &self.space;
        let tensors = self.collect_items(|item| {
            let mut out = Vec::new();
            match item {
                Item::Background(c) => {
                    let Some(rule) = self.physical_rule(c) else {
                        return Ok(out);
                    };
                    let cell = CellRef::new(&self.background, c);
                    out.push((Block::Volume, volume_terms(sp, &cell, &rule)));
                    if f.is_some() {
                        out.push((Block::Load, source_volume(sp, &cell, &rule, force)));
                    }
                    if let Some(cc) = self.geometry.cut_cell(c) {
                        if terms.least_squares {
                            let ls_rule = match self.params.ls_region {
                                LeastSquaresRegion::FullCell => self.cell_rule(&self.background, c),
                                LeastSquaresRegion::PhysicalPart => cc.rule_outside.clone(),
                            };
                            out.push((Block::LeastSquares, least_squares_terms(sp, &cell, &ls_rule, &self.params, force)));
                        }
                        if terms.overlap {
                            let om = self.overlap_mesh().expect("cut cell without overlap");
                            for piece in &cc.overlap_pieces {
                                let ov = CellRef::new(om, piece.overlap_cell);
                                out.push((Block::Overlap, overlap_stabilization(sp, &cell, &ov, &piece.rule)?));
                            }
                        }
                    }
                }
                Item::Overlap(c) => {
                    let m = self.overlap_mesh().unwrap();
                    let rule = self.cell_rule(m, c);
                    let cell = CellRef::new(m, c);
                    out.push((Block::Volume, volume_terms(sp, &cell, &rule)));
                    if f.is_some() {
                        out.push((Block::Load, source_volume(sp, &cell, &rule, force)));
                    }
                }
                Item::Segment(s) => {
                    let seg = &self.geometry.segments[s];
                    let bg = CellRef::new(&self.background, seg.background_cell);
                    let ov = CellRef::new(self.overlap_mesh().unwrap(), seg.overlap_cell);
                    let rule = self.interface_rule(seg.a, seg.b)?;
                    out.push((Block::Nitsche, nitsche_interface_terms(sp, &bg, &ov, seg, &rule, &self.params)?));
                }
            }
            Ok(out)
        })?;
        let n = self.dim();
        let (trip, rhs) = self.accumulate(&tensors, terms, n);
        Ok((CsrMatrix::from_triplets(n, n, trip), rhs))
    }

    /// Gram matrix of the energy norm on velocity dofs: broken gradient
    /// over Ω_{h,0} and Ω_{h,1} plus the interface flux and jump terms.
    pub fn energy_gram(&self) -> Result<CsrMatrix> {
        let sp = &self.space;
        let tensors = self.collect_items(|item| {
            Ok(match item {
                Item::Background(c) if self.classification.is_active(c) => {
                    let rule = self.cell_rule(&self.background, c);
                    vec![(Block::Gram, gradient_gram(sp, &CellRef::new(&self.background, c), &rule))]
                }
                Item::Background(_) => Vec::new(),
                Item::Overlap(c) => {
                    let m = self.overlap_mesh().unwrap();
                    vec![(Block::Gram, gradient_gram(sp, &CellRef::new(m, c), &self.cell_rule(m, c)))]
                }
                Item::Segment(s) => {
                    let seg = &self.geometry.segments[s];
                    let bg = CellRef::new(&self.background, seg.background_cell);
                    let ov = CellRef::new(self.overlap_mesh().unwrap(), seg.overlap_cell);
                    let rule = self.interface_rule(seg.a, seg.b)?;
                    vec![(Block::Gram, interface_energy_gram(sp, &bg, &ov, seg, &rule, &self.params)?)]
                }
            })
        })?;
        let n = self.dim();
        let (trip, _) = self.accumulate(&tensors, &Terms::all(), n);
        Ok(CsrMatrix::from_triplets(n, n, trip))
    }

    /// Gram matrix of Σ_i ||q_i||²_{Ω_{h,i}} on pressure dofs.
    pub fn pressure_gram(&self) -> Result<CsrMatrix> {
        let sp = &self.space;
        let tensors = self.collect_items(|item| {
            Ok(match item {
                Item::Background(c) if self.classification.is_active(c) => {
                    let rule = self.cell_rule(&self.background, c);
                    vec![(Block::Gram, pressure_mass(sp, &CellRef::new(&self.background, c), &rule))]
                }
                Item::Overlap(c) => {
                    let m = self.overlap_mesh().unwrap();
                    vec![(Block::Gram, pressure_mass(sp, &CellRef::new(m, c), &self.cell_rule(m, c)))]
                }
                _ => Vec::new(),
            })
        })?;
        let n = self.dim();
        let (trip, _) = self.accumulate(&tensors, &Terms::all(), n);
        Ok(CsrMatrix::from_triplets(n, n, trip))
    }

    /// m_j = ∫_{Ω_i} ψ_j for pressure dofs of mesh i, zero elsewhere.
    pub fn pressure_mean_vector(&self) -> Result<Vec<f64>> {
        let sp = &self.space;
        let tensors = self.collect_items(|item| {
            Ok(match item {
                Item::Background(c) => match self.physical_rule(c) {
                    Some(rule) => vec![(Block::Load, pressure_mean(sp, &CellRef::new(&self.background, c), &rule))],
                    None => Vec::new(),
                },
                Item::Overlap(c) => {
                    let m = self.overlap_mesh().unwrap();
                    vec![(Block::Load, pressure_mean(sp, &CellRef::new(m, c), &self.cell_rule(m, c)))]
                }
                Item::Segment(_) => Vec::new(),
            })
        })?;
        Ok(self.accumulate(&tensors, &Terms::all(), self.dim()).1)
    }

    /// Nodal values of `g` at the Dirichlet dofs, in `dirichlet_dofs` order.
    pub fn dirichlet_values(&self, g: &dyn Fn(Point) -> [f64; 2]) -> Vec<(usize, f64)> {
        self.dirichlet_dofs()
            .into_iter()
            .map(|a| {
                let (mi, f, d) = self.space.locate_dof(a);
                let node = self.space.dofmap(mi, f).nodes[d];
                let comp = if f == Field::VelocityX { 0 } else { 1 };
                (a, g(node)[comp])
            })
            .collect()
    }

    /// Full saddle-point system with boundary conditions and multiplier.
    pub fn assemble(&self, f: &(dyn Fn(Point) -> [f64; 2] + Sync), g: &dyn Fn(Point) -> [f64; 2]) -> Result<SparseSystem> {
        let terms = Terms::stokes(&self.params);
        let (a, b) = self.assemble_operator(&terms, Some(f))?;
        let mean = self.pressure_mean_vector()?;
        let dirichlet = self.dirichlet_values(g);
        SparseSystem::build(a, b, &mean, &dirichlet)
    }
}

#[derive(Clone, Copy, Debug)]
enum Item {
    Background(usize),
    Overlap(usize),
    Segment(usize),
}

/// Origin of a local tensor, used to select terms during assembly.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Block {
    Volume,
    Nitsche,
    Overlap,
    LeastSquares,
    Load,
    Gram,
}

/// Which terms of the discrete form enter an assembled operator.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Terms {
    /// (Du, Dv) on the physical subdomains.
    pub viscous: bool,
    /// -(div u, q) - (div v, p) on the physical subdomains.
    pub divergence: bool,
    /// Velocity-velocity Nitsche terms.
    pub nitsche_velocity: bool,
    /// ([n.u], <q>) + ([n.v], <p>).
    pub nitsche_pressure: bool,
    pub overlap: bool,
    pub least_squares: bool,
}

impl Terms {
    pub fn all() -> Self {
        Terms {
            viscous: true,
            divergence: true,
            nitsche_velocity: true,
            nitsche_pressure: true,
            overlap: true,
            least_squares: true,
        }
    }

    /// A_h as configured by the parameters.
    pub fn stokes(p: &DiscretizationParams) -> Self {
        Terms {
            overlap: p.overlap_stabilization,
            least_squares: p.least_squares && p.ls_scale > 0.0,
            ..Terms::all()
        }
    }

    /// Velocity form a_h = a_{h,N} + a_{h,O}.
    pub fn velocity_form(p: &DiscretizationParams) -> Self {
        Terms {
            divergence: false,
            nitsche_pressure: false,
            least_squares: false,
            ..Terms::stokes(p)
        }
    }

    /// Divergence form b_h in both off-diagonal blocks.
    pub fn divergence_form() -> Self {
        Terms {
            viscous: false,
            nitsche_velocity: false,
            overlap: false,
            least_squares: false,
            ..Terms::all()
        }
    }

    fn keeps(&self, block: Block, test_pressure: bool, trial_pressure: bool) -> bool {
        let mixed = test_pressure != trial_pressure;
        match block {
            Block::Volume => (mixed && self.divergence) || (!mixed && self.viscous),
            Block::Nitsche => (mixed && self.nitsche_pressure) || (!mixed && self.nitsche_velocity),
            Block::Overlap => self.overlap,
            Block::LeastSquares => self.least_squares,
            Block::Load | Block::Gram => true,
        }
    }

    fn keeps_load(&self, block: Block) -> bool {
        match block {
            Block::LeastSquares => self.least_squares,
            _ => true,
        }
    }
}

/// Square system of size N + 1: the active dofs followed by the
/// mean-pressure multiplier.
#[derive(Clone, Debug)]
pub struct SparseSystem {
    pub matrix: CsrMatrix,
    pub rhs: Vec<f64>,
    pub num_dofs: usize,
    pub dirichlet: Vec<usize>,
}

impl SparseSystem {
    /// Applies Dirichlet values by symmetric elimination and borders the
    /// matrix with the mean constraint `mean`.
    pub fn build(a: CsrMatrix, mut rhs: Vec<f64>, mean: &[f64], dirichlet: &[(usize, f64)]) -> Result<Self> {
        let n = a.nrows;
        if a.ncols != n || rhs.len() != n || mean.len() != n {
            return Err(Error::Structure(format!(
                "dimension mismatch: matrix {}x{}, rhs {}, constraint {}",
                a.nrows,
                a.ncols,
                rhs.len(),
                mean.len()
            )));
        }
        let mut fixed = vec![None; n];
        for &(d, v) in dirichlet {
            fixed[d] = Some(v);
        }
        let mut trip = Vec::with_capacity(a.nnz() + 2 * n);
        for i in 0..n {
            if let Some(v) = fixed[i] {
                trip.push((i, i, 1.0));
                rhs[i] = v;
                continue;
            }
            for (j, v) in a.row(i) {
                match fixed[j] {
                    Some(g) => rhs[i] -= v * g,
                    None => trip.push((i, j, v)),
                }
            }
        }
        for (j, &m) in mean.iter().enumerate() {
            if m != 0.0 && fixed[j].is_none() {
                trip.push((n, j, m));
                trip.push((j, n, m));
            }
        }
        rhs.push(0.0);
        let matrix = CsrMatrix::from_triplets(n + 1, n + 1, trip);
        for i in 0..=n {
            if matrix.row(i).all(|(_, v)| v == 0.0) {
                return Err(Error::Structure(format!("row {i} of the system is empty")));
            }
        }
        Ok(SparseSystem {
            matrix,
            rhs,
            num_dofs: n,
            dirichlet: dirichlet.iter().map(|d| d.0).collect(),
        })
    }

    /// max |A - A^T| relative to max |A|.
    pub fn relative_asymmetry(&self) -> f64 {
        self.matrix.max_asymmetry() / self.matrix.max_abs()
    }

    pub fn solve(&self) -> Result<Solution> {
        let lu = SparseLu::factor(&self.matrix)?;
        let (mut x, residual) = lu.solve_refined(&self.rhs);
        if !(residual <= SOLVE_TOLERANCE) {
            return Err(Error::SolverAccuracy {
                residual,
                tolerance: SOLVE_TOLERANCE,
            });
        }
        let multiplier = x.pop().unwrap();
        Ok(Solution {
            coefficients: x,
            multiplier,
            residual,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Solution {
    /// Active-dof coefficients of velocity and pressure on both meshes.
    pub coefficients: Vec<f64>,
    pub multiplier: f64,
    /// Relative residual ||Ax - b|| / ||b||, absolute if b = 0.
    pub residual: f64,
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Sparse LU with partial pivoting and one step of iterative refinement.
pub struct SparseLu {
    matrix: CsrMatrix,
    lu: Lu<usize, f64>,
}

impl SparseLu {
    pub fn factor(a: &CsrMatrix) -> Result<Self> {
        faer::set_global_parallelism(Par::Seq);
        let m = a.to_faer()?;
        let lu = m.sp_lu().map_err(|e| match e {
            LuError::SymbolicSingular { index } => Error::Factorization { pivot: index },
            LuError::Generic(g) => Error::Structure(format!("factorization failed: {g:?}")),
        })?;
        Ok(SparseLu { matrix: a.clone(), lu })
    }

    fn raw_solve(&self, b: &[f64]) -> Vec<f64> {
        let mut rhs = Mat::<f64>::from_fn(b.len(), 1, |i, _| b[i]);
        self.lu.solve_in_place(rhs.as_mut());
        (0..b.len()).map(|i| rhs[(i, 0)]).collect()
    }

    /// Solution and its relative residual.
    pub fn solve_refined(&self, b: &[f64]) -> (Vec<f64>, f64) {
        let bn = norm2(b);
        if bn == 0.0 {
            return (vec![0.0; b.len()], 0.0);
        }
        let mut x = self.raw_solve(b);
        let r: Vec<f64> = self.matrix.matvec(&x).iter().zip(b).map(|(ax, bi)| bi - ax).collect();
        let dx = self.raw_solve(&r);
        for (xi, d) in x.iter_mut().zip(&dx) {
            *xi += d;
        }
        let ax = self.matrix.matvec(&x);
        let res = norm2(&ax.iter().zip(b).map(|(a, bi)| a - bi).collect::<Vec<_>>()) / bn;
        let res = if x.iter().all(|v| v.is_finite()) { res } else { f64::INFINITY };
        (x, res)
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows
    }
}
