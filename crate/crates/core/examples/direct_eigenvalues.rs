//! Direct finite-element eigenvalues of the narrow domain with mesh
//! extrapolation, compared with the two-term law `pi^2/eps^2 + mu_j/eps`.

use narrow_spectra::laplacian2d::{richardson_direct, EigenSettings, Mesh2D};
use narrow_spectra::DomainProfile;
use std::f64::consts::PI;

fn main() -> narrow_spectra::Result<()> {
    let profile = DomainProfile::harmonic(2.0, 2.0)?;
    let settings = EigenSettings { count: 3, ..Default::default() };
    for eps in [0.2, 0.1, 0.05] {
        let mesh = Mesh2D::for_epsilon(&profile, eps, 32)?;
        let est = richardson_direct(&profile, eps, &mesh, &settings)?;
        println!("eps = {eps} on {} x {} (and refined)", mesh.nx, mesh.nt);
        for (j, lam) in est.eigenvalues.iter().enumerate() {
            let two_term = PI * PI / (eps * eps) + (2 * j + 1) as f64 / eps;
            println!(
                "  Lambda_{j} = {lam:.6} +- {:.1e}; eps (Lambda - pi^2/eps^2) = {:.5}; two-term {two_term:.6}",
                est.errors[j],
                eps * (lam - PI * PI / (eps * eps))
            );
        }
    }
    Ok(())
}
