//! End-to-end smoke tests for the `rpbfem` binary.

use std::path::{Path, PathBuf};
use std::process::Command;

const BIN: &str = env!("CARGO_BIN_EXE_rpbfem");

fn scratch(name: &str) -> PathBuf {
    let dir = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join(name);
    if dir.exists() {
        std::fs::remove_dir_all(&dir).unwrap();
    }
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn write_fixture(dir: &Path) -> PathBuf {
    std::fs::write(dir.join("charges.txt"), "# unit charge\n0 0 1\n").unwrap();
    let cfg = "\
dimension = 2
domain_lower = -1 -1
domain_upper = 1 1
interface = circle
interface_center = 0 0
interface_radius = 0.5
charge_file = charges.txt
eps_m = 2
eps_s = 80
kappa = 1
sigma = 0.25
mesh_n = 8
max_iterations = 3
levels = 3
refinements = 1
output_dir = out
";
    let path = dir.join("run.cfg");
    std::fs::write(&path, cfg).unwrap();
    path
}

fn run(args: &[&str]) -> std::process::Output {
    Command::new(BIN).args(args).output().unwrap()
}

fn code(out: &std::process::Output) -> i32 {
    out.status.code().expect("process was signalled")
}

#[test]
fn verify_grid_exit_codes() {
    assert_eq!(code(&run(&["verify-grid", "--grid", "square", "--n", "8"])), 0);
    assert_eq!(code(&run(&["verify-grid", "--grid", "cube5", "--n", "2"])), 0);
    let out = run(&["verify-grid", "--grid", "cube6", "--n", "2"]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stdout).contains("fail"));
    assert_eq!(code(&run(&["verify-grid", "--grid", "bogus"])), 1);
}

#[test]
fn solve_writes_artifacts() {
    let dir = scratch("solve");
    let cfg = write_fixture(&dir);
    let out_dir = dir.join("out");
    let out = run(&[
        "solve",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
        "--verbose",
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let vtk = std::fs::read_to_string(out_dir.join("solution.vtk")).unwrap();
    let summary = rpbfem::vtk::read_vtk_summary(&vtk).unwrap();
    assert!(summary.n_points > 0 && summary.n_cells > 0);
    assert!(summary.scalars.iter().any(|(n, _)| n == "u"));
    let trace = std::fs::read_to_string(out_dir.join("newton_trace.csv")).unwrap();
    assert!(trace.starts_with("iteration,residual,step,energy"));
    assert!(trace.lines().count() > 1);
}

#[test]
fn adapt_is_deterministic_and_round_trips() {
    let dir = scratch("adapt");
    let cfg = write_fixture(&dir);
    let mut histories = Vec::new();
    for run_id in 0..2 {
        let out_dir = dir.join(format!("out{run_id}"));
        let out = run(&[
            "adapt",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out_dir.to_str().unwrap(),
        ]);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
        histories.push(std::fs::read(out_dir.join("history.csv")).unwrap());
        let vtk = std::fs::read_to_string(out_dir.join("iter_000.vtk")).unwrap();
        let summary = rpbfem::vtk::read_vtk_summary(&vtk).unwrap();
        assert!(summary.n_cells > 0);
        assert!(summary.scalars.iter().any(|(n, _)| n == "eta_sq"));
    }
    assert_eq!(histories[0], histories[1], "history CSV must be bit-identical");
}

#[test]
fn convergence_study_reports_first_order() {
    let dir = scratch("study");
    let cfg = write_fixture(&dir);
    let out_dir = dir.join("out");
    let out = run(&[
        "convergence-study",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(out_dir.join("convergence.csv")).unwrap();
    let last = csv.lines().last().unwrap();
    let order: f64 = last.split(',').nth(3).unwrap().parse().unwrap();
    assert!((0.9..=1.1).contains(&order), "order {order}");
}

#[test]
fn reference_solve_writes_energy() {
    let dir = scratch("reference");
    let cfg = write_fixture(&dir);
    let out_dir = dir.join("out");
    let out = run(&[
        "reference-solve",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(out_dir.join("reference.csv")).unwrap();
    let row = csv.lines().nth(1).unwrap();
    let energy: f64 = row.split(',').nth(2).unwrap().parse().unwrap();
    assert!(energy.is_finite());
}

#[test]
fn config_errors_exit_1() {
    let dir = scratch("badcfg");
    // malformed line
    let bad = dir.join("bad.cfg");
    std::fs::write(&bad, "dimension 2\n").unwrap();
    let out = run(&["solve", "--config", bad.to_str().unwrap()]);
    assert_eq!(code(&out), 1);
    assert!(!out.stderr.is_empty());
    // missing charge file
    let missing = dir.join("missing.cfg");
    std::fs::write(
        &missing,
        "interface = circle\ninterface_radius = 0.5\ncharge_file = nope.txt\n",
    )
    .unwrap();
    assert_eq!(code(&run(&["solve", "--config", missing.to_str().unwrap()])), 1);
    // unknown key
    let unknown = dir.join("unknown.cfg");
    std::fs::write(&unknown, "frobnicate = 1\n").unwrap();
    assert_eq!(code(&run(&["solve", "--config", unknown.to_str().unwrap()])), 1);
}
