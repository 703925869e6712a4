//! Small dense linear algebra and Gaussian closed forms shared by every
//! other module. All reals are 64-bit; the types are generic over
//! [`crate::grad::Scalar`] so gradients flow through the same code.

pub mod gaussian;
pub mod matrix;

pub use gaussian::{gaussian_entropy, gaussian_kl, gaussian_logpdf, GaussianDist, LN_2PI};
pub use matrix::{cholesky, Matrix, Vector};
