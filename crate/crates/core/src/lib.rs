pub mod error;
pub mod harness;
pub mod laplacian2d;
pub mod model;
pub mod oscillator;
pub mod perturbation;
pub mod potentials;
pub mod profile;
pub mod reduction;
pub mod series;
pub mod sparse;
pub mod transverse;
pub mod tridiag;

pub use error::{Error, ErrorClass, Result};
pub use oscillator::{
    matrix_elements, richardson_refine, select_box_halfwidth, solve_on_grid, solve_schrodinger_1d, Grid1D,
    MatrixElementTable, SpectralResult1D,
};
pub use potentials::{build_perturbation_terms, constant_c_terms, PerturbationFamily, PolynomialPotential};
pub use profile::DomainProfile;
pub use series::TruncatedSeries;
