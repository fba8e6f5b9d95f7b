//! Expansion coefficients `q_n` for a tilted profile, the closed forms for
//! `q1`, `q2`, and the eigenvalue predictions they give at a few widths.

use narrow_spectra::model::{Grading, ModelSettings, OscillatorModel};
use narrow_spectra::perturbation::evaluate_prediction;
use narrow_spectra::DomainProfile;
use std::f64::consts::PI;

fn main() -> narrow_spectra::Result<()> {
    let c0 = 1.0 / (2.0 * PI * PI);
    let profile = DomainProfile::new(1.0, 2, vec![c0, c0 / 4.0], 2.0, 2.0)?;
    let model = OscillatorModel::build(&profile, 4, 2, Grading::General, None, &ModelSettings::default())?;
    for j in 0..2 {
        let ex = model.expansion(j, 4)?;
        let report = model.sign_report(j)?;
        let (q1, q2) = model.closed_form(j)?.signed(report.convention.sign);
        println!("level {j}: mu = {:.8}, q = {:?}", ex.mu_j, ex.q);
        println!("  closed forms q1 = {q1:.3e}, q2 = {q2:.8}");
        println!("  {}", report.summary());
        for eps in [0.1, 0.05, 0.025] {
            let pred: Vec<String> = (0..=4)
                .map(|k| evaluate_prediction(&ex, profile.max_height, profile.alpha1(), eps, k).map(|p| format!("{:.6}", p.lambda)))
                .collect::<narrow_spectra::Result<_>>()?;
            println!("  eps = {eps}: Lambda_K = {}", pred.join(", "));
        }
    }
    Ok(())
}
