//! End-to-end tests of the command-line front end: file outputs, exit
//! codes, round-trips and byte determinism.

mod common;

use std::fs;
use std::path::Path;
use std::process::Command;

use mpspectrum::report::files::{AtomEntry, AuditFile, EdgeEntry, SupportFile};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_mpspectrum"))
}

fn write_fig1_spec(dir: &Path) -> std::path::PathBuf {
    let path = dir.join("fig1.json");
    fs::write(
        &path,
        serde_json::json!({
            "A": {"components": [
                {"weight": 0.2, "part": {"type": "atom", "location": 0.0}},
                {"weight": 0.4, "part": {"type": "atom", "location": 1.0}},
                {"weight": 0.4, "part": {"type": "atom", "location": 10.0}}
            ]},
            "B": {"components": [
                {"weight": 0.4, "part": {"type": "atom", "location": -3.0}},
                {"weight": 0.6, "part": {"type": "atom", "location": 3.0}}
            ]},
            "gamma": 0.5
        })
        .to_string(),
    )
    .unwrap();
    path
}

fn write_dirac_b_spec(dir: &Path) -> std::path::PathBuf {
    let path = dir.join("dirac.json");
    fs::write(
        &path,
        serde_json::json!({
            "A": {"components": [{"weight": 1.0, "part": {"type": "atom", "location": 1.0}}]},
            "B": {"components": [{"weight": 1.0, "part": {"type": "atom", "location": 5.0}}]},
            "gamma": 0.25
        })
        .to_string(),
    )
    .unwrap();
    path
}

#[test]
fn support_subcommand_emits_all_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_fig1_spec(dir.path());
    let out = bin()
        .args(["support", "--spec"])
        .arg(&spec)
        .arg("--out-dir")
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let json = fs::read_to_string(dir.path().join("support.json")).unwrap();
    let parsed: SupportFile = serde_json::from_str(&json).unwrap();
    assert_eq!(parsed.atoms.len(), 1);
    assert_eq!(parsed.atoms[0].x, 3.0);
    // Round trip: emitted -> parsed -> emitted is identical.
    let again = serde_json::to_value(&parsed).unwrap();
    let original: serde_json::Value = serde_json::from_str(&json).unwrap();
    assert_eq!(original["atoms"], again["atoms"]);
    assert_eq!(original["edges"], again["edges"]);

    let csv = fs::read_to_string(dir.path().join("hcurve.csv")).unwrap();
    assert!(csv.starts_with("h,m_B,x,x1\n"));
    assert!(csv.lines().count() > 1000);

    let svg = fs::read_to_string(dir.path().join("support.svg")).unwrap();
    assert!(svg.starts_with("<svg"));
    assert!(svg.contains("polyline"));
    // The two hollow boundary dots at (-3, -3) and (3, 3).
    assert_eq!(svg.matches("<circle").count(), 2);
}

#[test]
fn masses_and_edges_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_fig1_spec(dir.path());
    for sub in ["masses", "edges"] {
        let out = bin()
            .args([sub, "--spec"])
            .arg(&spec)
            .arg("--out-dir")
            .arg(dir.path())
            .output()
            .unwrap();
        assert!(out.status.success());
    }
    let masses: Vec<AtomEntry> =
        serde_json::from_str(&fs::read_to_string(dir.path().join("masses.json")).unwrap())
            .unwrap();
    assert_eq!(masses.len(), 1);
    assert!((masses[0].mass - 0.2).abs() < 1e-12);
    let edges: Vec<EdgeEntry> =
        serde_json::from_str(&fs::read_to_string(dir.path().join("edges.json")).unwrap())
            .unwrap();
    assert_eq!(edges.len(), 5);
    assert!(edges.iter().all(|e| e.q_prime > 0.0));
}

#[test]
fn simulate_is_byte_deterministic() {
    let dir1 = tempfile::tempdir().unwrap();
    let dir2 = tempfile::tempdir().unwrap();
    let spec = write_fig1_spec(dir1.path());
    for dir in [dir1.path(), dir2.path()] {
        let out = bin()
            .args(["simulate", "--spec"])
            .arg(&spec)
            .arg("--out-dir")
            .arg(dir)
            .args(["--n", "120", "--seed", "42"])
            .output()
            .unwrap();
        assert!(out.status.success());
    }
    let a = fs::read(dir1.path().join("eigenvalues.csv")).unwrap();
    let b = fs::read(dir2.path().join("eigenvalues.csv")).unwrap();
    assert_eq!(a, b);
    let text = String::from_utf8(a).unwrap();
    assert!(text.starts_with("index,lambda\n"));
    assert_eq!(text.lines().count(), 121);
}

#[test]
fn validate_passes_and_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_fig1_spec(dir.path());
    let out = bin()
        .args(["validate", "--spec"])
        .arg(&spec)
        .arg("--out-dir")
        .arg(dir.path())
        .args(["--n", "500", "--seed", "11"])
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let audit: AuditFile =
        serde_json::from_str(&fs::read_to_string(dir.path().join("audit.json")).unwrap())
            .unwrap();
    assert!(audit.pass);
    assert!(audit.ks < 0.05);
    assert!(audit.gap_audit.gaps.iter().all(|g| g.deep_count == 0));
    // Round trip into equal in-memory structures.
    let re: AuditFile =
        serde_json::from_str(&serde_json::to_string(&audit).unwrap()).unwrap();
    assert_eq!(re, audit);
}

#[test]
fn malformed_spec_exits_2_with_diagnostic() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("broken.json");
    fs::write(&path, "{\"A\": {\"components\": []}, \"gamma\": }").unwrap();
    let out = bin()
        .args(["masses", "--spec"])
        .arg(&path)
        .arg("--out-dir")
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("line"), "diagnostic: {stderr}");
}

#[test]
fn invalid_gamma_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("gamma.json");
    fs::write(
        &path,
        serde_json::json!({
            "A": {"components": [{"weight": 1.0, "part": {"type": "atom", "location": 1.0}}]},
            "B": {"components": [{"weight": 1.0, "part": {"type": "atom", "location": 0.0}}]},
            "gamma": 0.0
        })
        .to_string(),
    )
    .unwrap();
    let out = bin()
        .args(["masses", "--spec"])
        .arg(&path)
        .arg("--out-dir")
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn dirac_b_density_warns_and_succeeds() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_dirac_b_spec(dir.path());
    let out = bin()
        .args(["density", "--spec"])
        .arg(&spec)
        .arg("--out-dir")
        .arg(dir.path())
        .args(["--grid", "51"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("degenerate-B"), "stderr: {stderr}");
    let csv = fs::read_to_string(dir.path().join("density.csv")).unwrap();
    assert!(csv.starts_with("x,f,err\n"));
    assert_eq!(csv.lines().count(), 52);
    // Values carry at least 12 significant digits.
    let first_row = csv.lines().nth(1).unwrap();
    assert!(first_row.split(',').all(|v| v.contains('e') && v.len() > 12));
}

#[test]
fn outputs_filter_restricts_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("filtered.json");
    fs::write(
        &path,
        serde_json::json!({
            "A": {"components": [{"weight": 1.0, "part": {"type": "atom", "location": 1.0}}]},
            "B": {"components": [
                {"weight": 0.4, "part": {"type": "atom", "location": -3.0}},
                {"weight": 0.6, "part": {"type": "atom", "location": 3.0}}
            ]},
            "gamma": 0.5,
            "outputs": ["support.json"]
        })
        .to_string(),
    )
    .unwrap();
    let out = bin()
        .args(["support", "--spec"])
        .arg(&path)
        .arg("--out-dir")
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(dir.path().join("support.json").exists());
    assert!(!dir.path().join("hcurve.csv").exists());
    assert!(!dir.path().join("support.svg").exists());
}

#[test]
fn density_grid_byte_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_fig1_spec(dir.path());
    let mut outputs = Vec::new();
    for run in 0..2 {
        let sub = dir.path().join(format!("run{run}"));
        fs::create_dir_all(&sub).unwrap();
        let out = bin()
            .args(["density", "--spec"])
            .arg(&spec)
            .arg("--out-dir")
            .arg(&sub)
            .args(["--grid", "41"])
            .output()
            .unwrap();
        assert!(out.status.success());
        outputs.push(fs::read(sub.join("density.csv")).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
}
