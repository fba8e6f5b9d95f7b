use std::f64::consts::PI;
use std::process::Command;

use narrow_spectra::harness::{
    emit_report, read_json_report, run_sweep, ExperimentConfig, MeshControls, ReportFormat, CSV_HEADER,
};
use narrow_spectra::oscillator::{richardson_pair, solve_on_grid, Grid1D};
use narrow_spectra::{DomainProfile, Error};

fn small(profile: DomainProfile) -> ExperimentConfig {
    ExperimentConfig {
        profile,
        epsilons: vec![0.4, 0.3, 0.2],
        modes: 2,
        order: 2,
        mesh: MeshControls { nt: 8, grid_points: 1001, ..Default::default() },
        ..Default::default()
    }
}

#[test]
fn csv_rows_and_json_round_trip() {
    let cfg = small(DomainProfile::harmonic(1.0, 1.0).unwrap());
    let report = run_sweep(&cfg).unwrap();
    assert_eq!(report.records.len(), 3 * 2 * 3);
    assert_eq!(report.failures(), 0);

    let dir = tempfile::tempdir().unwrap();
    let csv_path = emit_report(&report, dir.path(), "s", ReportFormat::Csv).unwrap();
    let mut reader = csv::Reader::from_path(&csv_path).unwrap();
    assert_eq!(reader.headers().unwrap().iter().collect::<Vec<_>>(), CSV_HEADER.to_vec());
    let rows: Vec<csv::StringRecord> = reader.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 18);
    for (row, rec) in rows.iter().zip(&report.records) {
        assert_eq!(row[3].parse::<f64>().unwrap(), rec.lambda_direct.unwrap());
    }

    let json_path = emit_report(&report, dir.path(), "s", ReportFormat::Json).unwrap();
    assert_eq!(read_json_report(&json_path).unwrap(), report);
}

#[test]
fn sweeps_are_deterministic() {
    let cfg = small(DomainProfile::new(1.0, 2, vec![0.05, 0.01], 1.0, 1.0).unwrap());
    let a = run_sweep(&cfg).unwrap();
    let b = run_sweep(&cfg).unwrap();
    assert_eq!(a, b);
}

#[test]
fn rectangle_sweep_uses_free_box() {
    let cfg = small(DomainProfile::rectangle(1.0, 1.0, 1.0).unwrap());
    let report = run_sweep(&cfg).unwrap();
    for &eps in &cfg.epsilons {
        let delta = eps.powf(0.5);
        let grid = Grid1D::new(-1.0 / delta, 1.0 / delta, cfg.mesh.grid_points).unwrap();
        let c = solve_on_grid(|_| 0.0, grid, 2).unwrap();
        let f = solve_on_grid(|_| 0.0, grid.refined(), 2).unwrap();
        let mu = richardson_pair(&c.eigenvalues, &f.eigenvalues).values;
        for j in 0..2 {
            let r = report.record(eps, j, 0).unwrap();
            let want = (r.lambda_direct.unwrap() - PI * PI / (eps * eps) - mu[j] / eps).abs();
            assert!((r.residual.unwrap() - want).abs() < 1e-9 * r.lambda_direct.unwrap());
            assert!(r.lambda_tilde_oracle.unwrap().abs() < 1e-9 * r.lambda_direct.unwrap());
        }
    }
}

#[test]
fn failing_cells_are_recorded() {
    let mut cfg = small(DomainProfile::harmonic(1.0, 1.0).unwrap());
    cfg.solver.eigen_max_iter = 1;
    let report = run_sweep(&cfg).unwrap();
    assert_eq!(report.records.len(), 18);
    assert!(report.records.iter().all(|r| r.status == "numerical"));
    assert!(report.records.iter().all(|r| r.lambda_pred.is_some()));
}

#[test]
fn config_rejections() {
    let cases = [
        r#"{"profile": {"M": 1, "m": 3, "c_coeffs": [0.1], "l1": 1, "l2": 1}}"#,
        r#"{"profile": {"M": 1, "m": 2, "c_coeffs": [0, 0.1], "l1": 1, "l2": 1}}"#,
        r#"{"profile": {"M": 1, "m": 2, "c_coeffs": [3], "l1": 1, "l2": 1}}"#,
        r#"{"epsilons": [0.2, 0.2]}"#,
        r#"{"epsilons": [1.5]}"#,
        r#"{"modes": 0}"#,
        r#"{"order": 0}"#,
    ];
    for text in cases {
        assert!(matches!(ExperimentConfig::from_json(text), Err(Error::Config(_))), "{text}");
    }
}

fn cli() -> Command {
    Command::new(env!("CARGO_BIN_EXE_narrow-spectra"))
}

#[test]
fn cli_usage_and_exit_codes() {
    let none = cli().output().unwrap();
    assert_ne!(none.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&none.stderr).contains("Usage"));
    assert_ne!(cli().arg("frobnicate").output().unwrap().status.code(), Some(0));
    assert_ne!(cli().args(["verify", "--bogus"]).output().unwrap().status.code(), Some(0));

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"modes": 0}"#).unwrap();
    let out = cli().args(["sweep", "--config", bad.to_str().unwrap()]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn cli_verify_on_rectangle_passes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("rect.json");
    std::fs::write(
        &cfg,
        r#"{"profile": {"M": 1, "m": 2, "c_coeffs": [], "l1": 1, "l2": 1}, "epsilons": [0.4, 0.2, 0.1, 0.05], "modes": 3}"#,
    )
    .unwrap();
    let out = cli()
        .args(["verify", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap(), "--format", "json"])
        .output()
        .unwrap();
    let text = String::from_utf8_lossy(&out.stdout);
    assert_eq!(out.status.code(), Some(0), "{text}");
    assert!(!text.contains("FAIL"));
    assert!(dir.path().join("verify.json").exists());
}

#[test]
fn cli_expand_prints_cross_check() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("h.json");
    std::fs::write(&cfg, r#"{"modes": 2, "order": 2, "mesh": {"grid_points": 1001}}"#).unwrap();
    let out = cli()
        .args(["expand", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("cross-check q1"), "{text}");
    assert!(text.contains("matching global sign"), "{text}");
}
