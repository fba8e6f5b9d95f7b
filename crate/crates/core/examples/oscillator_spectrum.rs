//! Lowest levels of the model oscillator `-d^2/dy^2 + y^2` with Richardson
//! error estimates and decay certificates.
//!
//! ```bash
//! cargo run --release --example oscillator_spectrum
//! ```

use narrow_spectra::model::{Grading, ModelSettings, OscillatorModel};
use narrow_spectra::DomainProfile;

fn main() -> narrow_spectra::Result<()> {
    let profile = DomainProfile::harmonic(2.0, 2.0)?;
    let model = OscillatorModel::build(&profile, 1, 4, Grading::General, None, &ModelSettings::default())?;
    println!("box [{:.3}, {:.3}]", -model.box_halfwidths.0, model.box_halfwidths.1);
    for (j, cert) in model.decay().iter().take(4).enumerate() {
        println!(
            "mu_{j} = {:.10}  (exact {}, est. error {:.1e}, decay holds: {})",
            model.mu[j],
            2 * j + 1,
            model.mu_error[j],
            cert.holds
        );
    }
    Ok(())
}
