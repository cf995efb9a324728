//! End-to-end runs of the command-line binary.

use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_navier-wall"));
    c.env_remove("WALL_LAW_OUTPUT_DIR");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn out_dir(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn column(csv: &str, name: &str) -> Vec<f64> {
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let k = header.iter().position(|h| *h == name).unwrap();
    lines.map(|l| l.split(',').nth(k).unwrap().parse().unwrap()).collect()
}

#[test]
fn cell_prints_flat_coefficient() {
    let d = tempfile::tempdir().unwrap();
    let o = run(&["cell", "--h", "flat:1", "--nx", "16", "--ny", "64", "--out", out_dir(d.path())]);
    assert_eq!(o.status.code(), Some(0));
    let text = String::from_utf8(o.stdout).unwrap();
    let c1: f64 = text.lines().find_map(|l| l.strip_prefix("c1 = ")).unwrap().parse().unwrap();
    assert!((c1 - 13.0 / 12.0).abs() < 0.01 * 13.0 / 12.0);
    for f in ["cell.csv", "cell.json", "cell.svg"] {
        assert!(d.path().join(f).exists(), "{f}");
    }
}

#[test]
fn sweep_writes_decreasing_errors() {
    let d = tempfile::tempdir().unwrap();
    let o = run(&[
        "sweep", "--eps", "0.2,0.1,0.05", "--h", "flat:1", "--walllaw", "over_h", "--nx", "16", "--f1", "1-2*y",
        "--model", "stokes", "--out", out_dir(d.path()),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(d.path().join("sweep.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "eps,phi_eps,g_eps,g0,l2_err_u,l2_err_p,cg_iters,picard_iters");
    let e = column(&csv, "l2_err_u");
    assert_eq!(e.len(), 3);
    assert!(e.windows(2).all(|w| w[1] < w[0]), "{e:?}");
    let svg = std::fs::read_to_string(d.path().join("sweep.svg")).unwrap();
    assert!(svg.contains("(log10)"));
}

#[test]
fn csv_and_json_agree() {
    let d = tempfile::tempdir().unwrap();
    let o = run(&[
        "sweep", "--eps", "0.2,0.1,0.05", "--nx", "16", "--f1", "1-2*y", "--model", "stokes", "--out",
        out_dir(d.path()),
    ]);
    assert_eq!(o.status.code(), Some(0));
    let csv = std::fs::read_to_string(d.path().join("sweep.csv")).unwrap();
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(d.path().join("sweep.json")).unwrap()).unwrap();
    let from_csv = column(&csv, "phi_eps");
    for (k, e) in json["entries"].as_array().unwrap().iter().enumerate() {
        let exact = e["phi_eps"].as_f64().unwrap();
        assert_eq!(format!("{exact:.11e}").parse::<f64>().unwrap(), from_csv[k]);
        assert!((exact - from_csv[k]).abs() <= 1e-11 * exact.abs());
    }
}

#[test]
fn serial_reruns_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        let o = run(&["sweep", "--eps", "0.2,0.1,0.05", "--nx", "16", "--f1", "1-2*y", "--out", out_dir(d.path())]);
        assert_eq!(o.status.code(), Some(0));
    }
    for f in ["sweep.csv", "sweep.json", "sweep.svg"] {
        assert_eq!(std::fs::read(a.path().join(f)).unwrap(), std::fs::read(b.path().join(f)).unwrap(), "{f}");
    }
}

#[test]
fn parallel_sweep_matches_serial() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for (d, jobs) in [(&a, "1"), (&b, "3")] {
        let o = run(&[
            "sweep", "--eps", "0.2,0.1,0.05", "--nx", "16", "--f1", "1-2*y", "--jobs", jobs, "--out",
            out_dir(d.path()),
        ]);
        assert_eq!(o.status.code(), Some(0));
    }
    assert_eq!(std::fs::read(a.path().join("sweep.csv")).unwrap(), std::fs::read(b.path().join("sweep.csv")).unwrap());
}

#[test]
fn missing_config_writes_nothing() {
    let d = tempfile::tempdir().unwrap();
    let out = d.path().join("reports");
    let o = run(&["sweep", "--config", "/definitely/not/here.cfg", "--out", out_dir(&out)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(!out.exists());
    let err = String::from_utf8(o.stderr).unwrap();
    assert_eq!(err.trim().lines().count(), 1);
}

#[test]
fn config_file_and_flag_precedence() {
    let d = tempfile::tempdir().unwrap();
    let cfg = d.path().join("run.cfg");
    std::fs::write(&cfg, "# limit run\nlateral = periodic\nnx = 8\nny = 16\nf1 = 2\nmodel = stokes\nwalllaw = no_slip\nformats = csv\n").unwrap();
    let o = run(&["limit", "--config", cfg.to_str().unwrap(), "--walllaw", "over_h", "--out", out_dir(d.path())]);
    assert_eq!(o.status.code(), Some(0));
    let csv = std::fs::read_to_string(d.path().join("limit.csv")).unwrap();
    // the flag wins: a slip trace near 1/2 rather than zero
    let trace = column(&csv, "u_trace");
    assert!(trace.iter().all(|u| (u - 0.5).abs() < 1e-2), "{trace:?}");
    assert!(!d.path().join("limit.json").exists());
}

#[test]
fn environment_sets_output_dir() {
    let d = tempfile::tempdir().unwrap();
    let o = bin()
        .env("WALL_LAW_OUTPUT_DIR", d.path())
        .args(["poiseuille-check", "--nx", "8", "--ny", "8", "--model", "stokes", "--formats", "csv"])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2), "8 rows do not reach the 1e-3 profile tolerance");
    assert!(d.path().join("poiseuille.csv").exists());
}

#[test]
fn poiseuille_check_passes_at_128() {
    let d = tempfile::tempdir().unwrap();
    let o = run(&["poiseuille-check", "--nx", "8", "--ny", "128", "--out", out_dir(d.path())]);
    assert_eq!(o.status.code(), Some(0));
    assert!(String::from_utf8(o.stdout).unwrap().contains("PASS"));
}

#[test]
fn degenerate_control_writes_header_only() {
    let d = tempfile::tempdir().unwrap();
    let o = run(&["control", "--m", "0.2,0.1,0.05", "--nx", "8", "--model", "stokes", "--out", out_dir(d.path())]);
    assert_eq!(o.status.code(), Some(0));
    let csv = std::fs::read_to_string(d.path().join("control.csv")).unwrap();
    assert_eq!(csv, "m,F_value,work_identity_residual,mass_residual,band_fraction_1,int_abs_u1_over_m,M_1\n");
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(d.path().join("control.json")).unwrap()).unwrap();
    assert_eq!(json["report"]["degenerate"], true);
}

#[test]
fn control_run_reports_each_mass() {
    let d = tempfile::tempdir().unwrap();
    let o = run(&[
        "control", "--m", "0.2,0.1,0.05", "--nx", "8", "--model", "stokes", "--f1",
        "exp(-((x-0.35)^2)/0.01-y/0.1)", "--set", "control_tol=1e-6", "--out", out_dir(d.path()),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(d.path().join("control.csv")).unwrap();
    assert_eq!(column(&csv, "m"), vec![0.2, 0.1, 0.05]);
    assert!(column(&csv, "mass_residual").iter().all(|r| *r <= 1e-12));
    assert!(column(&csv, "M_1").iter().all(|m| *m > 0.0));
}

#[test]
fn bad_input_exit_codes() {
    assert_eq!(run(&["sweep", "--eps", "0.1,0.2,0.05"]).status.code(), Some(1));
    assert_eq!(run(&["limit", "--f1", "1+*2"]).status.code(), Some(1));
    assert_eq!(run(&["cell", "--set", "colour=red"]).status.code(), Some(1));
    assert_eq!(run(&["bogus"]).status.code(), Some(1));
}

#[test]
fn unwritable_output_is_io_error() {
    let d = tempfile::tempdir().unwrap();
    let file = d.path().join("plain-file");
    std::fs::write(&file, "x").unwrap();
    let o = run(&["cell", "--nx", "8", "--out", file.join("sub").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn solver_non_convergence_exit_code() {
    let d = tempfile::tempdir().unwrap();
    let o = run(&[
        "limit", "--nx", "16", "--f1", "1-2*y", "--set", "max_cg_iters=1", "--model", "stokes", "--out",
        out_dir(d.path()),
    ]);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
}
