//! Small dense-linear-algebra kernel: matrices, a seedable RNG, softmax,
//! and principal-component analysis. Everything downstream builds on these.

pub mod matrix;
pub mod pca;
pub mod rng;

pub use matrix::{argmax, axpy, dot, norm2, scale_slice, softmax, Matrix};
pub use pca::{jacobi_eigen, pca_fit, pca_project, pca_reconstruct, PcaModel};
pub use rng::Rng;
