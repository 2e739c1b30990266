use std::fs;
use std::process::Command;

fn fracocp() -> Command {
    Command::new(env!("CARGO_BIN_EXE_fracocp"))
}

const MINIMAL: &str = "\
domain = unit-interval
initial_refinements = 3
s = 0.5
u_d = sine
a = -10
b = 10
max_cycles = 3
";

#[test]
fn run_fit_and_export() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("minimal.ini");
    fs::write(&cfg, MINIMAL).unwrap();

    let out = fracocp()
        .arg("run")
        .arg(&cfg)
        .env("FRACOCP_THREADS", "2")
        .output()
        .unwrap();
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("4 cycles"));

    let summary = tmp.path().join("run/summary.csv");
    let out = fracocp()
        .arg("fit-rate")
        .arg(&summary)
        .args(["--window", "3"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let slope: f64 = String::from_utf8_lossy(&out.stdout).trim().parse().unwrap();
    assert!(slope < 0.0);

    let out = fracocp()
        .arg("export")
        .arg(tmp.path().join("run"))
        .args(["--cycle", "1"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert!(tmp.path().join("run/cycle_001/export.vtk").is_file());

    let out = fracocp()
        .arg("export")
        .arg(tmp.path().join("run"))
        .args(["--cycle", "9"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn config_errors_exit_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.ini");
    fs::write(&cfg, "s = 1.2\n").unwrap();
    let out = fracocp().arg("run").arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("bad.ini:1:"), "{err}");

    let out = fracocp()
        .arg("run")
        .arg(tmp.path().join("missing.ini"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));

    fs::write(&cfg, MINIMAL).unwrap();
    let out = fracocp()
        .arg("run")
        .arg(&cfg)
        .env("FRACOCP_THREADS", "many")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}
