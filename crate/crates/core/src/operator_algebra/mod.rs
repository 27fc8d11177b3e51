//! Matrix functions of the separable elliptic operator in eigenbasis-factored
//! Kronecker form: `F(A) = (⊗ B_l) diag(F(Λ)) (⊗ B_l)^T` with the diagonal
//! kept as a low-rank canonical tensor.

mod coefficient;
mod expsum;
mod factored;
mod sinc;
mod spectral;

pub use coefficient::{
    coefficient_singular_values, compress_coefficient_tensor, compress_coefficient_tensor_capped, CoefficientGrid,
    DEFAULT_RANK_CAP,
};
pub use expsum::{exp_sum_tensor, fit_exp_sum, ExpSum};
pub use factored::{kron_bases, FactoredOperator, Mode, ModeBasis};
pub use sinc::{
    quadrature_tensor, sinc_for_tolerance, sinc_inverse_power, sinc_quadrature, spectral_range, SincQuadrature,
};
pub use spectral::{gamma, SpectralFunction};
