//! Dense real linear algebra: seeded random matrices, orthogonal
//! constructors, nonsymmetric eigenvalues and spectral rescaling.

mod construct;
mod eigen;
mod matrix;
mod rng;

pub use construct::{cyclic_orthogonal, orthogonality_defect, random_orthogonal, uniform_matrix};
pub use eigen::{eigenvalues, rescale_to_radius, spectral_norm, spectral_radius, Spectrum};
pub use matrix::{dot, norm2, Matrix};
pub use rng::{mix_seed, RngStream};
