use std::fs;
use std::process::{Command, Output};

use cutfem::analysis::compute_eoc;
use cutfem::case::{run_level, CaseConfig};
use cutfem::problem::TrigonometricSolution;

fn cutfem(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cutfem")).args(args).output().expect("spawn cutfem")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn invalid_degree_is_a_config_error_naming_k() {
    let o = cutfem(&["solve", "--k", "1", "--n", "8"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("`k`"), "{}", stderr(&o));
}

#[test]
fn unknown_config_key_and_bad_list_are_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("case.cfg");
    fs::write(&cfg, "k = 2\nwobble = 3\n").unwrap();
    let o = cutfem(&["solve", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("wobble"));
    let o = cutfem(&["convergence", "--n", "16,8,32"]);
    assert_eq!(o.status.code(), Some(2));
    let o = cutfem(&["convergence", "--n", "8,16"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn domain_outside_the_square_is_a_geometry_error() {
    let o = cutfem(&["solve", "--n", "8", "--side", "0.9", "--center", "0.8,0.5"]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

#[test]
fn default_solve_writes_one_finite_row() {
    let o = cutfem(&["solve", "--n", "16"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = String::from_utf8(o.stdout.clone()).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 2);
    assert!(lines[0].starts_with("k,n,h,ndof,err_u_L2"));
    let fields: Vec<&str> = lines[1].split(',').collect();
    assert_eq!(fields.len(), 11);
    for f in &fields[4..8] {
        let v: f64 = f.parse().unwrap();
        assert!(v.is_finite() && v > 0.0);
    }
    assert!(stderr(&o).contains("[stabilized]"));
}

#[test]
fn ablation_runs_and_is_labelled() {
    let o = cutfem(&["solve", "--n", "8", "--no-stab", "--no-overlap-stab"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stderr(&o).contains("[unstabilized]"));
    let o = cutfem(&["solve", "--n", "8", "--ls-scale", "0"]);
    assert!(stderr(&o).contains("[no-ls]"));
    let o = cutfem(&["solve", "--n", "8", "--no-overlap-stab"]);
    assert!(stderr(&o).contains("[no-overlap-stab]"));
}

#[test]
fn solve_csv_matches_direct_module_call() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("row.csv");
    let o = cutfem(&["solve", "--n", "8", "--angle", "20", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let cfg = CaseConfig {
        n: vec![8],
        angle: 20.0,
        ..CaseConfig::default()
    };
    let level = run_level(&cfg, 8, &TrigonometricSolution::new()).unwrap();
    let mut expected = Vec::new();
    compute_eoc(vec![level.errors]).unwrap().write_csv(&mut expected).unwrap();
    assert_eq!(fs::read(&out).unwrap(), expected);
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("case.cfg");
    fs::write(&cfg, "# ablation\nn = 8\nstab = false\nk = 3\n").unwrap();
    let o = cutfem(&["solve", "--config", cfg.to_str().unwrap(), "--k", "2"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let e = stderr(&o);
    assert!(e.contains("[no-ls]") && e.contains("k=2 n=8"), "{e}");
}

#[test]
fn repeated_convergence_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for p in [&a, &b] {
        let o = cutfem(&["convergence", "--n", "8,12,16", "--out", p.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    }
    let (ta, tb) = (fs::read(&a).unwrap(), fs::read(&b).unwrap());
    assert_eq!(ta, tb);
    let text = String::from_utf8(ta).unwrap();
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(rows.len(), 3);
    assert!(rows[0].ends_with(",,,"));
    for r in &rows[1..] {
        let eoc: f64 = r.split(',').nth(8).unwrap().parse().unwrap();
        assert!(eoc > 2.0);
    }
}

#[test]
fn vtk_files_are_written_per_mesh() {
    let dir = tempfile::tempdir().unwrap();
    let prefix = dir.path().join("sol");
    let o = cutfem(&["solve", "--n", "8", "--vtk", prefix.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    for i in 0..2 {
        let text = fs::read_to_string(dir.path().join(format!("sol_mesh{i}.vtk"))).unwrap();
        assert!(text.starts_with("# vtk DataFile"));
    }
}

#[test]
fn probe_reports_positive_coercivity_and_inf_sup_ratio() {
    let args = ["probe", "--n", "8", "--probe-n", "8", "--samples", "10", "--seed", "7"];
    let first = cutfem(&args);
    assert_eq!(first.status.code(), Some(0), "{}", stderr(&first));
    let text = String::from_utf8(first.stdout.clone()).unwrap();
    assert!(text.starts_with("probe,n,parameter,value,extra"));
    for line in text.lines().filter(|l| l.starts_with("coercivity_")) {
        let v: f64 = line.split(',').nth(3).unwrap().parse().unwrap();
        assert!(v > 0.0);
    }
    assert_eq!(text.lines().filter(|l| l.starts_with("infsup,")).count(), 10);
    assert!(text.lines().any(|l| l.starts_with("infsup_ratio,")));
    assert!(stderr(&first).contains("inf-sup min/max"));
    let again = cutfem(&args);
    assert_eq!(first.stdout, again.stdout);
}
