//! Experiment configuration and drivers for solves, convergence studies,
//! and stability probes.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use crate::analysis::{
    coercivity_probe, compute_eoc, compute_errors, continuity_probe, infsup_blocks, infsup_probe,
    ConvergenceRecord, ErrorReport, INFSUP_MAX_ITER, INFSUP_TOL,
};
use crate::error::{Error, Result};
use crate::forms::{DiscretizationParams, LeastSquaresRegion};
use crate::geometry::{ConvexPolygonDomain, Point};
use crate::mesh::{generate_overlapping_mesh, generate_unit_square_mesh, make_rotated_square, CellLabel};
use crate::problem::ExactSolution;
use crate::system::{Discretization, Overlap, Solution};

#[derive(Clone, Debug, PartialEq)]
pub struct CaseConfig {
    pub k: usize,
    /// Background resolutions; a single solve uses the first entry.
    pub n: Vec<usize>,
    /// Overlapping-mesh resolution; derived from `n` when absent.
    pub n1: Option<usize>,
    pub center: Point,
    pub side: f64,
    pub angle: f64,
    /// Run on the background mesh alone.
    pub no_overlap: bool,
    /// Defaults to 20 k².
    pub beta: Option<f64>,
    pub ls_scale: f64,
    pub kappa0: f64,
    pub least_squares: bool,
    pub overlap_stabilization: bool,
    pub ls_region: LeastSquaresRegion,
    /// Overrides both volume and interface quadrature orders.
    pub quad_order: Option<usize>,
    pub seed: u64,
    /// Random directions per coercivity probe.
    pub samples: usize,
    /// Resolution of the inf-sup sweep and the sliver table.
    pub probe_n: usize,
    pub out: Option<String>,
    pub vtk: Option<String>,
}

impl Default for CaseConfig {
    fn default() -> Self {
        CaseConfig {
            k: 2,
            n: vec![16],
            n1: None,
            center: [0.5, 0.5],
            side: 0.246246,
            angle: 37.0,
            no_overlap: false,
            beta: None,
            ls_scale: 1.0,
            kappa0: 0.5,
            least_squares: true,
            overlap_stabilization: true,
            ls_region: LeastSquaresRegion::FullCell,
            quad_order: None,
            seed: 1,
            samples: 100,
            probe_n: 16,
            out: None,
            vtk: None,
        }
    }
}

/// Overlapping resolution giving both meshes the same cell size.
pub fn default_n1(n: usize, side: f64) -> usize {
    ((n as f64 * side).ceil() as usize).max(2)
}

fn parse_bool(name: &'static str, v: &str) -> Result<bool> {
    match v {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(Error::invalid(name, format!("expected a boolean, got '{v}'"))),
    }
}

fn parse_num<T: std::str::FromStr>(name: &'static str, v: &str) -> Result<T> {
    v.trim().parse().map_err(|_| Error::invalid(name, format!("cannot parse '{v}'")))
}

/// Comma- or space-separated list.
pub fn parse_list<T: std::str::FromStr>(name: &'static str, v: &str) -> Result<Vec<T>> {
    v.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .map(|s| parse_num(name, s))
        .collect()
}

impl CaseConfig {
    /// Sets one field from its textual form. Keys use either `-` or `_`.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key.trim().replace('-', "_").as_str() {
            "k" => self.k = parse_num("k", value)?,
            "n" => self.n = parse_list("n", value)?,
            "n1" => self.n1 = Some(parse_num("n1", value)?),
            "center" => {
                let c: Vec<f64> = parse_list("center", value)?;
                if c.len() != 2 {
                    return Err(Error::invalid("center", format!("expected two coordinates, got '{value}'")));
                }
                self.center = [c[0], c[1]];
            }
            "side" => self.side = parse_num("side", value)?,
            "angle" => self.angle = parse_num("angle", value)?,
            "no_overlap" => self.no_overlap = parse_bool("no-overlap", value)?,
            "beta" => self.beta = Some(parse_num("beta", value)?),
            "ls_scale" => self.ls_scale = parse_num("ls-scale", value)?,
            "kappa0" => self.kappa0 = parse_num("kappa0", value)?,
            "least_squares" | "stab" => self.least_squares = parse_bool("stab", value)?,
            "overlap_stabilization" | "overlap_stab" => {
                self.overlap_stabilization = parse_bool("overlap-stab", value)?
            }
            "ls_region" => {
                self.ls_region = match value {
                    "full" => LeastSquaresRegion::FullCell,
                    "physical" => LeastSquaresRegion::PhysicalPart,
                    _ => return Err(Error::invalid("ls-region", format!("expected 'full' or 'physical', got '{value}'"))),
                }
            }
            "quad_order" => self.quad_order = Some(parse_num("quad-order", value)?),
            "seed" => self.seed = parse_num("seed", value)?,
            "samples" => self.samples = parse_num("samples", value)?,
            "probe_n" => self.probe_n = parse_num("probe-n", value)?,
            "out" => self.out = Some(value.to_string()),
            "vtk" => self.vtk = Some(value.to_string()),
            other => return Err(Error::invalid("config", format!("unknown key '{other}'"))),
        }
        Ok(())
    }

    /// Applies a flat `key = value` text; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::invalid("config", format!("line {}: expected key = value", lineno + 1)))?;
            self.set(key, value)?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path)?;
        self.apply_text(&text)
    }

    pub fn params(&self) -> DiscretizationParams {
        let mut p = DiscretizationParams::new(self.k);
        if let Some(b) = self.beta {
            p.beta = b;
        }
        p.kappa = [self.kappa0, 1.0 - self.kappa0];
        p.ls_scale = self.ls_scale;
        p.least_squares = self.least_squares;
        p.overlap_stabilization = self.overlap_stabilization;
        p.ls_region = self.ls_region;
        if let Some(q) = self.quad_order {
            p.volume_order = q;
            p.interface_order = q;
        }
        p
    }

    pub fn validate(&self) -> Result<()> {
        self.params().validate()?;
        if self.n.is_empty() || self.n.iter().any(|&n| n == 0) {
            return Err(Error::invalid("n", "resolutions must be positive"));
        }
        if self.n1 == Some(0) {
            return Err(Error::invalid("n1", "must be positive"));
        }
        if !(self.side > 0.0) {
            return Err(Error::invalid("side", format!("must be positive, got {}", self.side)));
        }
        if !self.angle.is_finite() {
            return Err(Error::invalid("angle", "must be finite"));
        }
        if self.probe_n == 0 {
            return Err(Error::invalid("probe-n", "must be positive"));
        }
        if self.samples == 0 {
            return Err(Error::invalid("samples", "must be positive"));
        }
        Ok(())
    }

    /// Short description of the enabled stabilizations.
    pub fn label(&self) -> String {
        let ls = self.least_squares && self.ls_scale > 0.0;
        match (ls, self.overlap_stabilization) {
            (true, true) => "stabilized".into(),
            (false, true) => "no-ls".into(),
            (true, false) => "no-overlap-stab".into(),
            (false, false) => "unstabilized".into(),
        }
    }

    pub fn domain(&self) -> Result<ConvexPolygonDomain> {
        make_rotated_square(self.center, self.side, self.angle)
    }

    pub fn n1_for(&self, n: usize) -> usize {
        self.n1.unwrap_or_else(|| default_n1(n, self.side))
    }

    pub fn discretization(&self, n: usize) -> Result<Discretization> {
        self.validate()?;
        let domain = (!self.no_overlap).then(|| self.domain()).transpose()?;
        discretize(n, domain, self.n1_for(n), self.params())
    }
}

/// Background mesh of resolution `n` with an optional overlapping domain
/// meshed at resolution `n1`.
pub fn discretize(n: usize, domain: Option<ConvexPolygonDomain>, n1: usize, params: DiscretizationParams) -> Result<Discretization> {
    let bg = generate_unit_square_mesh(n)?;
    let overlap = match domain {
        Some(d) => {
            let mesh = generate_overlapping_mesh(&d, n1)?;
            Some(Overlap { domain: d, mesh })
        }
        None => None,
    };
    Discretization::new(bg, overlap, params)
}

#[derive(Clone, Debug)]
pub struct LevelResult {
    pub discretization: Discretization,
    pub solution: Solution,
    pub errors: ErrorReport,
}

/// Assembles and solves the Dirichlet problem with boundary data and
/// forcing taken from `exact`.
pub fn solve_discretization(disc: &Discretization, exact: &dyn ExactSolution) -> Result<Solution> {
    let f = |x: Point| exact.source(x);
    let g = |x: Point| exact.velocity(x);
    disc.assemble(&f, &g)?.solve()
}

pub fn run_level(cfg: &CaseConfig, n: usize, exact: &dyn ExactSolution) -> Result<LevelResult> {
    let disc = cfg.discretization(n)?;
    let solution = solve_discretization(&disc, exact)?;
    let errors = compute_errors(&disc, &solution.coefficients, exact, n)?;
    Ok(LevelResult {
        discretization: disc,
        solution,
        errors,
    })
}

/// Minimum number of levels of a convergence study.
pub const MIN_LEVELS: usize = 3;

/// Levels solved before a failure, with the failure itself.
#[derive(Debug)]
pub struct PartialStudy {
    pub record: Option<ConvergenceRecord>,
    /// Level that failed; `None` when the configuration was rejected.
    pub failed_n: Option<usize>,
    pub error: Error,
}

/// Solves every level of `cfg.n` in order. On failure the completed levels
/// are returned alongside the error.
pub fn run_convergence(cfg: &CaseConfig, exact: &dyn ExactSolution) -> std::result::Result<ConvergenceRecord, Box<PartialStudy>> {
    let fail = |record, failed_n, error| Box::new(PartialStudy { record, failed_n, error });
    if let Err(e) = cfg.validate() {
        return Err(fail(None, None, e));
    }
    if cfg.n.len() < MIN_LEVELS {
        let e = Error::invalid("n", format!("a convergence study needs at least {MIN_LEVELS} levels, got {}", cfg.n.len()));
        return Err(fail(None, None, e));
    }
    if cfg.n.windows(2).any(|w| w[1] <= w[0]) {
        return Err(fail(None, None, Error::invalid("n", "resolutions must strictly increase")));
    }
    let mut reports = Vec::new();
    for &n in &cfg.n {
        match run_level(cfg, n, exact) {
            Ok(level) => reports.push(level.errors),
            Err(e) => return Err(fail(compute_eoc(reports).ok(), Some(n), e)),
        }
    }
    compute_eoc(reports).map_err(|e| fail(None, None, e))
}

/// Smallest cut fraction min(|K ∩ Ω_1|, |K ∩ Ω_0|) / |K| over cut cells.
pub fn min_cut_fraction(disc: &Discretization) -> f64 {
    disc.classification
        .cells_with(CellLabel::Cut)
        .map(|c| {
            let a = disc.background.cell_area(c);
            let inside = disc.classification.inside_area[c];
            inside.min(a - inside) / a
        })
        .fold(f64::INFINITY, f64::min)
}

/// Axis-aligned square whose left edge sits `eps` cells right of a grid
/// line and whose bottom edge sits `eps` cells below one; the cell at the
/// lower-left corner keeps a triangle of relative area about eps².
pub fn sliver_domain(n: usize, eps: f64) -> Result<ConvexPolygonDomain> {
    let hx = 1.0 / n as f64;
    let side = 0.2537;
    let i = (0.375 * n as f64).round();
    let x0 = i * hx + eps * hx;
    let y0 = i * hx - eps * hx;
    make_rotated_square([x0 + side / 2.0, y0 + side / 2.0], side, 0.0)
}

#[derive(Clone, Debug, PartialEq)]
pub struct SliverRow {
    pub eps: f64,
    pub cut_fraction: f64,
    pub label: String,
    /// Velocity L2 error, or the failure message.
    pub outcome: std::result::Result<f64, String>,
}

/// Solves the manufactured problem on sliver geometries at resolution `n`.
pub fn sliver_robustness(cfg: &CaseConfig, n: usize, offsets: &[f64], exact: &dyn ExactSolution) -> Result<Vec<SliverRow>> {
    cfg.validate()?;
    let mut rows = Vec::new();
    for &eps in offsets {
        let domain = sliver_domain(n, eps)?;
        let n1 = cfg.n1.unwrap_or_else(|| default_n1(n, domain.perimeter() / 4.0));
        let mut fraction = f64::NAN;
        let outcome = discretize(n, Some(domain), n1, cfg.params()).and_then(|disc| {
            fraction = min_cut_fraction(&disc);
            let sol = solve_discretization(&disc, exact)?;
            Ok(compute_errors(&disc, &sol.coefficients, exact, n)?.u_l2)
        });
        rows.push(SliverRow {
            eps,
            cut_fraction: fraction,
            label: cfg.label(),
            outcome: outcome.map_err(|e| e.to_string()),
        });
    }
    Ok(rows)
}

/// Interface positions of the inf-sup sweep: the overlapping domain shifted
/// by fractions of one background cell.
pub fn sweep_centers(cfg: &CaseConfig, n: usize, count: usize) -> Vec<Point> {
    let hx = 1.0 / n as f64;
    (0..count)
        .map(|i| {
            let t = i as f64 / count as f64;
            [cfg.center[0] + t * hx, cfg.center[1] + 0.618 * t * hx]
        })
        .collect()
}

/// Inf-sup estimates over `count` interface translations at resolution `n`,
/// without the least-squares term.
pub fn infsup_sweep(cfg: &CaseConfig, n: usize, count: usize) -> Result<Vec<(Point, f64)>> {
    let mut out = Vec::new();
    for c in sweep_centers(cfg, n, count) {
        let mut shifted = cfg.clone();
        shifted.center = c;
        let disc = shifted.discretization(n)?;
        let est = infsup_probe(&infsup_blocks(&disc)?, INFSUP_TOL, INFSUP_MAX_ITER, cfg.seed)?;
        out.push((c, est.value));
    }
    Ok(out)
}

#[derive(Clone, Debug, Default)]
pub struct ProbeReport {
    /// (n, min ratio, max ratio).
    pub coercivity: Vec<(usize, f64, f64)>,
    /// (n, continuity constant).
    pub continuity: Vec<(usize, f64)>,
    pub infsup_n: usize,
    pub infsup: Vec<(Point, f64)>,
    pub sliver: Vec<SliverRow>,
}

/// Offsets of the sliver table; the smallest cut fraction goes from a few
/// per mille down to about 1e-9.
pub const SLIVER_OFFSETS: [f64; 6] = [0.5, 1e-1, 1e-2, 1e-3, 1e-4, 3e-5];

impl ProbeReport {
    pub fn coercivity_spread(&self) -> f64 {
        let mins: Vec<f64> = self.coercivity.iter().map(|c| c.1).collect();
        let hi = mins.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lo = mins.iter().copied().fold(f64::INFINITY, f64::min);
        hi / lo
    }

    pub fn infsup_ratio(&self) -> f64 {
        let hi = self.infsup.iter().map(|v| v.1).fold(f64::NEG_INFINITY, f64::max);
        let lo = self.infsup.iter().map(|v| v.1).fold(f64::INFINITY, f64::min);
        lo / hi
    }

    pub fn write_csv<W: Write>(&self, out: &mut W) -> Result<()> {
        writeln!(out, "probe,n,parameter,value,extra")?;
        for (n, lo, hi) in &self.coercivity {
            writeln!(out, "coercivity_min,{n},,{lo:.10e},")?;
            writeln!(out, "coercivity_max,{n},,{hi:.10e},")?;
        }
        for (n, c) in &self.continuity {
            writeln!(out, "continuity,{n},,{c:.10e},")?;
        }
        for (c, v) in &self.infsup {
            writeln!(out, "infsup,{},{:.6} {:.6},{v:.10e},", self.infsup_n, c[0], c[1])?;
        }
        if !self.infsup.is_empty() {
            writeln!(out, "infsup_ratio,{},,{:.10e},", self.infsup_n, self.infsup_ratio())?;
        }
        for r in &self.sliver {
            let (value, extra) = match &r.outcome {
                Ok(e) => (format!("{e:.10e}"), format!("{} ok", r.label)),
                Err(msg) => (String::new(), format!("{} failed: {}", r.label, msg.replace(',', ";"))),
            };
            writeln!(out, "sliver,{},{:.10e} {:.3e},{value},{extra}", self.infsup_n, r.cut_fraction, r.eps)?;
        }
        Ok(())
    }
}

/// Coercivity and continuity over all levels of `cfg.n`; the inf-sup sweep
/// and the sliver table, stabilized and ablated, at `cfg.probe_n`.
pub fn run_probes(cfg: &CaseConfig, exact: &dyn ExactSolution) -> Result<ProbeReport> {
    cfg.validate()?;
    let mut report = ProbeReport::default();
    for &n in &cfg.n {
        let disc = cfg.discretization(n)?;
        let c = coercivity_probe(&disc, cfg.samples, cfg.seed)?;
        report.coercivity.push((n, c.min, c.max));
        report.continuity.push((n, continuity_probe(&disc, cfg.samples, cfg.seed)?));
    }
    let n = cfg.probe_n;
    report.infsup_n = n;
    report.infsup = infsup_sweep(cfg, n, 10)?;
    report.sliver = sliver_robustness(cfg, n, &SLIVER_OFFSETS, exact)?;
    let mut ablated = cfg.clone();
    ablated.least_squares = false;
    ablated.overlap_stabilization = false;
    report.sliver.extend(sliver_robustness(&ablated, n, &SLIVER_OFFSETS, exact)?);
    Ok(report)
}

/// Key-value dump of a configuration, in the format read by `apply_text`.
pub fn describe(cfg: &CaseConfig) -> String {
    let mut m = BTreeMap::new();
    m.insert("k", cfg.k.to_string());
    m.insert("n", cfg.n.iter().map(|n| n.to_string()).collect::<Vec<_>>().join(","));
    if let Some(n1) = cfg.n1 {
        m.insert("n1", n1.to_string());
    }
    m.insert("center", format!("{},{}", cfg.center[0], cfg.center[1]));
    m.insert("side", cfg.side.to_string());
    m.insert("angle", cfg.angle.to_string());
    m.insert("no_overlap", cfg.no_overlap.to_string());
    m.insert("beta", cfg.params().beta.to_string());
    m.insert("ls_scale", cfg.ls_scale.to_string());
    m.insert("kappa0", cfg.kappa0.to_string());
    m.insert("least_squares", cfg.least_squares.to_string());
    m.insert("overlap_stabilization", cfg.overlap_stabilization.to_string());
    m.insert("seed", cfg.seed.to_string());
    m.insert("samples", cfg.samples.to_string());
    m.insert("probe_n", cfg.probe_n.to_string());
    m.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_text_roundtrip() {
        let mut c = CaseConfig::default();
        c.apply_text("# study\nk = 3\nn = 8, 16 ,32\nls-scale = 0.5\nno_overlap = false\ncenter = 0.4 0.45\n").unwrap();
        assert_eq!(c.k, 3);
        assert_eq!(c.n, vec![8, 16, 32]);
        assert_eq!(c.ls_scale, 0.5);
        assert_eq!(c.center, [0.4, 0.45]);
        let mut d = CaseConfig::default();
        d.apply_text(&describe(&c)).unwrap();
        assert_eq!(d.n, c.n);
        assert_eq!(d.center, c.center);
    }

    #[test]
    fn config_errors_name_the_field() {
        let mut c = CaseConfig::default();
        assert!(matches!(c.set("k", "two"), Err(Error::InvalidParameter { name: "k", .. })));
        assert!(matches!(c.set("bogus", "1"), Err(Error::InvalidParameter { name: "config", .. })));
        c.k = 1;
        assert!(matches!(c.validate(), Err(Error::InvalidParameter { name: "k", .. })));
    }

    #[test]
    fn matched_overlap_resolution() {
        assert_eq!(default_n1(8, 0.246246), 2);
        assert_eq!(default_n1(16, 0.246246), 4);
        assert_eq!(default_n1(64, 0.246246), 16);
    }

    #[test]
    fn sliver_fraction_scales_quadratically() {
        let p = DiscretizationParams::new(2);
        for eps in [1e-2, 1e-4] {
            let d = sliver_domain(16, eps).unwrap();
            let disc = discretize(16, Some(d), 5, p.clone()).unwrap();
            let f = min_cut_fraction(&disc);
            assert!(f > 0.2 * eps * eps && f < 5.0 * eps * eps, "eps {eps}: fraction {f}");
        }
    }
}
