//! Transverse-mode integrals against their closed forms, and the
//! `|A21 f|^2` formula against the assembled operator.

use narrow_spectra::laplacian2d::Mesh2D;
use narrow_spectra::transverse::{a21_identity_check, default_bump, transverse_integral_check};
use narrow_spectra::DomainProfile;
use std::f64::consts::PI;

fn main() -> narrow_spectra::Result<()> {
    let c0 = 1.0 / (2.0 * PI * PI);
    let profile = DomainProfile::new(1.0, 2, vec![c0, c0 / 4.0], 2.0, 2.0)?;
    let xs = [-1.5, -0.5, 0.0, 0.7, 1.6];
    let report = transverse_integral_check(&profile, 0.1, &xs);
    for row in report.rows.iter().filter(|r| r.x == 0.7) {
        println!("{:>8}: numeric {:+.12e}, closed {:+.12e}, rel. error {:.1e}", row.identity.label(), row.numeric, row.closed, row.error);
    }
    println!("gated identities pass: {}", report.all_gated_pass());

    let eps = 0.1;
    let mut mesh = Mesh2D::for_epsilon(&profile, eps, 16)?;
    for _ in 0..3 {
        let check = a21_identity_check(&profile, eps, &mesh, default_bump(&profile))?;
        println!(
            "nx = {:>4}: |A21 f|^2 discrete {:.6e}, formula {:.6e}, rel. difference {:.2e}",
            mesh.nx, check.discrete, check.closed.exact, check.relative_difference
        );
        mesh = mesh.refined();
    }
    Ok(())
}
