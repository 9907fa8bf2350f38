use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn manifest(name: &str) -> PathBuf {
    root().join("manifests").join(name)
}

fn run(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sacasscf")).args(args).arg("--out").arg(out).output().unwrap()
}

fn bare(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sacasscf")).args(args).output().unwrap()
}

#[test]
fn help_and_version_exit_zero() {
    assert_eq!(bare(&["--help"]).status.code(), Some(0));
    assert_eq!(bare(&["--version"]).status.code(), Some(0));
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(bare(&[]).status.code(), Some(1));
    assert_eq!(bare(&["scan"]).status.code(), Some(1));
    assert_eq!(bare(&["scan", "--manifest", "x.toml", "--noise", "loud"]).status.code(), Some(1));
    assert_eq!(bare(&["transmogrify"]).status.code(), Some(1));
}

#[test]
fn missing_or_invalid_manifests_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["scan", "--manifest", "/nonexistent/m.toml"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "name = 3\n").unwrap();
    assert_eq!(run(&["scan", "--manifest", bad.to_str().unwrap()], dir.path()).status.code(), Some(1));
    let m = manifest("h3_casci.toml");
    assert_eq!(run(&["scan", "--manifest", m.to_str().unwrap(), "--workers", "0"], dir.path()).status.code(), Some(1));
}

#[test]
fn empty_manifest_writes_a_header_only_table() {
    let dir = tempfile::tempdir().unwrap();
    let m = manifest("empty.toml");
    let out = run(&["scan", "--manifest", m.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("empty.csv")).unwrap();
    assert_eq!(csv, "label,E0,E1,E_av,converged,iters\n");
}

#[test]
fn scan_writes_a_table_and_one_trace_per_point() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(manifest("ethylene_casci.toml")).unwrap();
    let fixtures = root().join("fixtures").canonicalize().unwrap();
    let mut kept = text.split("[[points]]").next().unwrap().to_string();
    for t in ["theta050", "theta130"] {
        kept.push_str(&format!("[[points]]\nlabel = \"{t}\"\nfcidump = \"{}\"\n\n", fixtures.join(format!("ethylene/{t}.fcidump")).display()));
    }
    let m = dir.path().join("two.toml");
    std::fs::write(&m, kept).unwrap();
    let out = run(&["scan", "--manifest", m.to_str().unwrap()], &dir.path().join("out"));
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("out/ethylene_casci.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("theta050,") && lines[1].ends_with(",true,1"));
    for t in ["theta050", "theta130"] {
        let json = std::fs::read_to_string(dir.path().join(format!("out/ethylene_casci/{t}.json"))).unwrap();
        assert!(json.contains("\"iterations\""));
    }
}

#[test]
fn groups_reports_each_sector() {
    let dir = tempfile::tempdir().unwrap();
    let m = manifest("h3_casci.toml");
    let out = run(&["groups", "--manifest", m.to_str().unwrap(), "--point", "z0.400"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.lines().any(|l| l.starts_with("B1 terms=")));
    assert!(text.lines().any(|l| l.starts_with("A1 terms=")));
    let bad = run(&["groups", "--manifest", m.to_str().unwrap(), "--point", "z9"], dir.path());
    assert_eq!(bad.status.code(), Some(1));
}

#[test]
fn adapt_writes_the_circuit_and_its_convergence_table() {
    let dir = tempfile::tempdir().unwrap();
    let m = manifest("h3_casci.toml");
    let out = run(&["adapt", "--manifest", m.to_str().unwrap(), "--point", "z0.600", "--state", "A1"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let circuit = std::fs::read_to_string(dir.path().join("h3_casci_z0.600_A1.circuit")).unwrap();
    assert!(circuit.contains("PROT") || circuit.contains("CNOT"));
    let table = std::fs::read_to_string(dir.path().join("h3_casci_z0.600_A1.csv")).unwrap();
    assert!(table.starts_with("n_ops,operator,energy,error\n0,,"));
    let last: f64 = table.lines().last().unwrap().rsplit(',').next().unwrap().parse().unwrap();
    assert!((0.0..1e-3).contains(&last), "{last}");
    let e = manifest("ethylene_casci.toml");
    let fixed = run(&["adapt", "--manifest", e.to_str().unwrap(), "--point", "theta090", "--state", "A'"], dir.path());
    assert_eq!(fixed.status.code(), Some(1));
}

#[test]
fn vqe_writes_a_trace_for_one_state() {
    let dir = tempfile::tempdir().unwrap();
    let m = manifest("ethylene_casci.toml");
    let out = run(&["vqe", "--manifest", m.to_str().unwrap(), "--point", "theta090", "--state", "A\""], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8(out.stdout).unwrap().starts_with("A\" at theta090: E = -"));
    assert!(dir.path().join("ethylene_casci_theta090_A\".json").exists());
    let missing = run(&["vqe", "--manifest", m.to_str().unwrap(), "--point", "theta090", "--state", "B"], dir.path());
    assert_eq!(missing.status.code(), Some(1));
}
