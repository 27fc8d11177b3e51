//! One-dimensional building blocks: variable-coefficient Sturm-Liouville
//! matrices, their eigen-decompositions, and the discrete sine basis of the
//! constant-coefficient case.

mod coefficient;
mod sine;
mod sturm_liouville;

pub use coefficient::{midpoint_samples, Coefficient1D};
pub use sine::{sine_transform, sine_transform_direct, SineTransform};
pub use sturm_liouville::{eig_sym_tridiag, laplace_eigenvalues, Boundary, Eigen1D, SturmLiouville1D};
