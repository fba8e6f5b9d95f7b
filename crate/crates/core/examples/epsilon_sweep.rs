//! Small epsilon sweep written to `target/sweep-example/` as CSV and JSON,
//! with the fitted residual exponents.

use narrow_spectra::harness::{emit_report, run_sweep, ExperimentConfig, MeshControls, ReportFormat};
use std::path::Path;

fn main() -> narrow_spectra::Result<()> {
    let cfg = ExperimentConfig {
        epsilons: vec![0.4, 0.2, 0.1, 0.05],
        modes: 2,
        order: 2,
        mesh: MeshControls { nt: 16, ..Default::default() },
        ..Default::default()
    };
    let report = run_sweep(&cfg)?;
    let dir = Path::new("target/sweep-example");
    for format in [ReportFormat::Csv, ReportFormat::Json] {
        println!("wrote {}", emit_report(&report, dir, "sweep", format)?.display());
    }
    for s in &report.slopes {
        println!("j = {}, K = {}: slope {:?} (bound exponent {:.2})", s.j, s.k, s.slope, s.expected);
    }
    Ok(())
}
