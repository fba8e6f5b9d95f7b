//! Block reduction onto the adiabatic subspace: the A22 floor, the
//! correction series and the fixed point for the eigenvalue correction.

use narrow_spectra::reduction::{analyse_levels, ReductionSettings};
use narrow_spectra::DomainProfile;
use std::f64::consts::PI;

fn main() -> narrow_spectra::Result<()> {
    let c0 = 1.0 / (2.0 * PI * PI);
    let profile = DomainProfile::new(1.0, 2, vec![c0, c0 / 4.0], 2.0, 2.0)?;
    let settings = ReductionSettings::default();
    let eps = 0.1;
    let mesh = settings.mesh(&profile, eps)?;
    let (shared, levels) = analyse_levels(&profile, eps, 2, &mesh, &settings)?;
    println!(
        "A22 bottom {:.4e} vs 0.9 x {:.4e}: {}",
        shared.gap.min_ritz,
        shared.gap.bound,
        if shared.gap.passed { "ok" } else { "violated" }
    );
    for (j, level) in levels.into_iter().enumerate() {
        let a = level?;
        println!("level {j}: Lambda = {:.10}, lambda = {:.10}", a.lambda_direct, a.lambda_model);
        println!("  a_n = {:?}", a.oracle.corr_a);
        println!(
            "  fixed point {:+.6e} after {} steps (Lambda - lambda = {:+.6e}); approximate mode {:+.6e}",
            a.oracle_trace.value(),
            a.oracle_trace.iterates.len(),
            a.gap_direct,
            a.approximate_trace.value()
        );
    }
    Ok(())
}
