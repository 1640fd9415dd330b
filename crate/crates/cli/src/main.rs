//! `cutfem`: single solves, convergence studies and stability probes for the
//! overlapping-mesh Stokes solver.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use cutfem::analysis::{compute_eoc, write_solution_vtk};
use cutfem::case::{run_convergence, run_level, run_probes, CaseConfig, ProbeReport};
use cutfem::problem::TrigonometricSolution;
use cutfem::{Error, ErrorCategory};

#[derive(Parser)]
#[command(name = "cutfem", version, about = "Overlapping-mesh CutFEM solver for the Stokes equations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve once at the first resolution and write a one-row error table.
    Solve(CaseArgs),
    /// Solve every resolution and write the error table with rates.
    Convergence(CaseArgs),
    /// Coercivity, continuity, inf-sup sweep and sliver table.
    Probe(CaseArgs),
}

#[derive(Args, Debug)]
struct CaseArgs {
    /// Flat `key = value` file applied before the flags.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Velocity degree (2 or 3).
    #[arg(long)]
    k: Option<usize>,
    /// Background resolutions, comma separated.
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    n: Option<Vec<usize>>,
    /// Overlapping mesh resolution.
    #[arg(long)]
    n1: Option<usize>,
    #[arg(long)]
    beta: Option<f64>,
    /// Rotation of the overlapping square in degrees.
    #[arg(long, allow_negative_numbers = true)]
    angle: Option<f64>,
    #[arg(long)]
    side: Option<f64>,
    /// Center of the overlapping square as `x,y`.
    #[arg(long)]
    center: Option<String>,
    #[arg(long)]
    ls_scale: Option<f64>,
    /// Disable the least-squares term.
    #[arg(long)]
    no_stab: bool,
    /// Disable the overlap gradient-jump term.
    #[arg(long)]
    no_overlap_stab: bool,
    /// Background mesh only.
    #[arg(long)]
    no_overlap: bool,
    /// Interface weight of the background side.
    #[arg(long)]
    kappa0: Option<f64>,
    #[arg(long)]
    quad_order: Option<usize>,
    /// `full` or `physical`.
    #[arg(long)]
    ls_region: Option<String>,
    /// CSV output path; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// VTK output prefix; one file per mesh.
    #[arg(long)]
    vtk: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Random directions per coercivity probe.
    #[arg(long)]
    samples: Option<usize>,
    /// Resolution of the inf-sup sweep and the sliver table.
    #[arg(long)]
    probe_n: Option<usize>,
}

impl CaseArgs {
    fn config(&self, default_n: &[usize]) -> cutfem::Result<CaseConfig> {
        let mut cfg = CaseConfig {
            n: default_n.to_vec(),
            ..CaseConfig::default()
        };
        if let Some(path) = &self.config {
            cfg.apply_file(path)?;
        }
        if let Some(v) = self.k {
            cfg.k = v;
        }
        if let Some(v) = &self.n {
            cfg.n = v.clone();
        }
        if self.n1.is_some() {
            cfg.n1 = self.n1;
        }
        if self.beta.is_some() {
            cfg.beta = self.beta;
        }
        if let Some(v) = self.angle {
            cfg.angle = v;
        }
        if let Some(v) = self.side {
            cfg.side = v;
        }
        if let Some(c) = &self.center {
            cfg.set("center", c)?;
        }
        if let Some(v) = self.ls_scale {
            cfg.ls_scale = v;
        }
        if self.no_stab {
            cfg.least_squares = false;
        }
        if self.no_overlap_stab {
            cfg.overlap_stabilization = false;
        }
        if self.no_overlap {
            cfg.no_overlap = true;
        }
        if let Some(v) = self.kappa0 {
            cfg.kappa0 = v;
        }
        if self.quad_order.is_some() {
            cfg.quad_order = self.quad_order;
        }
        if let Some(v) = &self.ls_region {
            cfg.set("ls_region", v)?;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.samples {
            cfg.samples = v;
        }
        if let Some(v) = self.probe_n {
            cfg.probe_n = v;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

enum Failure {
    Run(Error),
    Assertion(Vec<String>),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Run(e)
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Run(Error::Io(e))
    }
}

fn exit_code(category: ErrorCategory) -> u8 {
    match category {
        ErrorCategory::Config | ErrorCategory::Io => 2,
        ErrorCategory::Geometry => 3,
        ErrorCategory::Solver => 4,
    }
}

/// Writes through a sibling temporary file and renames it into place.
fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)
}

fn emit(out: Option<&Path>, bytes: &[u8]) -> io::Result<()> {
    match out {
        Some(p) => write_atomic(p, bytes),
        None => io::stdout().write_all(bytes),
    }
}

fn solve(args: &CaseArgs) -> Result<(), Failure> {
    let cfg = args.config(&[16])?;
    let n = cfg.n[0];
    let level = run_level(&cfg, n, &TrigonometricSolution::new())?;
    let e = &level.errors;
    eprintln!(
        "solve [{}] k={} n={} n1={} ndof={} residual={:.3e} u_L2={:.6e} u_H1={:.6e} p_L2={:.6e} energy={:.6e}",
        cfg.label(),
        cfg.k,
        n,
        if cfg.no_overlap { 0 } else { cfg.n1_for(n) },
        e.ndof,
        level.solution.residual,
        e.u_l2,
        e.u_h1,
        e.p_l2,
        e.energy
    );
    let mut csv = Vec::new();
    compute_eoc(vec![e.clone()])?.write_csv(&mut csv)?;
    emit(args.out.as_deref(), &csv)?;
    if let Some(prefix) = &args.vtk {
        let disc = &level.discretization;
        let meshes = if disc.overlap.is_some() { 2 } else { 1 };
        for i in 0..meshes {
            let mut buf = Vec::new();
            write_solution_vtk(disc, i, &level.solution.coefficients, &mut buf)?;
            let mut name = prefix.as_os_str().to_owned();
            name.push(format!("_mesh{i}.vtk"));
            write_atomic(Path::new(&name), &buf)?;
        }
    }
    Ok(())
}

fn convergence(args: &CaseArgs) -> Result<(), Failure> {
    let cfg = args.config(&[8, 16, 32, 64])?;
    eprintln!("convergence [{}] k={} n={:?}", cfg.label(), cfg.k, cfg.n);
    match run_convergence(&cfg, &TrigonometricSolution::new()) {
        Ok(record) => {
            let mut csv = Vec::new();
            record.write_csv(&mut csv)?;
            emit(args.out.as_deref(), &csv)?;
            Ok(())
        }
        Err(partial) => {
            if let Some(record) = &partial.record {
                let mut csv = Vec::new();
                record.write_csv(&mut csv)?;
                emit(args.out.as_deref(), &csv)?;
                eprintln!("partial table: {} of {} levels", record.reports.len(), cfg.n.len());
            }
            if let Some(n) = partial.failed_n {
                eprintln!("level n={n} failed");
            }
            Err(Failure::Run(partial.error))
        }
    }
}

/// Violations that make a probe run fail: non-positive coercivity or inf-sup
/// values, and failed solves with both stabilizations enabled.
fn probe_violations(report: &ProbeReport) -> Vec<String> {
    let mut bad = Vec::new();
    for (n, lo, _) in &report.coercivity {
        if !(*lo > 0.0) {
            bad.push(format!("coercivity ratio {lo:e} at n={n}"));
        }
    }
    for (c, v) in &report.infsup {
        if !(*v > 0.0) || !v.is_finite() {
            bad.push(format!("inf-sup estimate {v:e} at center ({}, {})", c[0], c[1]));
        }
    }
    for r in &report.sliver {
        if let (Err(msg), "stabilized") = (&r.outcome, r.label.as_str()) {
            bad.push(format!("sliver solve at offset {:e}: {msg}", r.eps));
        }
    }
    bad
}

fn probe(args: &CaseArgs) -> Result<(), Failure> {
    let cfg = args.config(&[8, 16, 32])?;
    let report = run_probes(&cfg, &TrigonometricSolution::new())?;
    let mut csv = Vec::new();
    report.write_csv(&mut csv)?;
    emit(args.out.as_deref(), &csv)?;
    eprintln!(
        "probe [{}] k={} coercivity spread {:.4} inf-sup min/max {:.4e} at n={}",
        cfg.label(),
        cfg.k,
        report.coercivity_spread(),
        report.infsup_ratio(),
        report.infsup_n
    );
    let bad = probe_violations(&report);
    if bad.is_empty() {
        Ok(())
    } else {
        Err(Failure::Assertion(bad))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Solve(a) => solve(a),
        Command::Convergence(a) => convergence(a),
        Command::Probe(a) => probe(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Run(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(e.category()))
        }
        Err(Failure::Assertion(list)) => {
            for v in &list {
                eprintln!("assertion failed: {v}");
            }
            ExitCode::from(5)
        }
    }
}
