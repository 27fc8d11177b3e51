//! Preconditioners for the Lagrange equation of the control.
//!
//! Case (A) inverts the fractional Lagrange operator of a constant-coefficient
//! (anisotropic) Laplacian, applied through the sine transform. Case (B)
//! approximates the inverse of the variable-coefficient operator directly in
//! the Sturm-Liouville eigenbases. Both are low-rank factored operators.

use faer::Mat;

use crate::discretization::SturmLiouville1D;
use crate::linalg::{mul, sym_eigenvalues};
use crate::operator_algebra::{
    compress_coefficient_tensor_capped, exp_sum_tensor, fit_exp_sum, CoefficientGrid, ExpSum, FactoredOperator, Mode,
    SpectralFunction,
};
use crate::{Error, Result};

/// Default rank of the preconditioner's coefficient tensor.
pub const DEFAULT_PRECOND_RANK: usize = 6;
/// Default compression tolerance of the preconditioner.
pub const DEFAULT_PRECOND_EPS: f64 = 1e-2;

/// Scaling constants `b0` of the anisotropic Laplacian, one per mode, with
/// the coefficient extrema they were derived from.
#[derive(Clone, Debug, PartialEq)]
pub struct AnisotropyCoefficients {
    pub b0: Vec<f64>,
    pub min: Vec<f64>,
    pub max: Vec<f64>,
    /// `max_l (max a_l - b0_l) / b0_l`
    pub q: f64,
}

impl AnisotropyCoefficients {
    /// `b0 = 1` in every mode (the isotropic Laplacian); `q` is then measured
    /// against the actual coefficients when `ops` is given.
    pub fn isotropic(d: usize) -> Self {
        Self { b0: vec![1.0; d], min: vec![1.0; d], max: vec![1.0; d], q: 0.0 }
    }

    /// `b0_l = (max a_l + min a_l) / 2` from the midpoint samples.
    pub fn from_operators(ops: &[SturmLiouville1D]) -> Result<Self> {
        let (min, max): (Vec<f64>, Vec<f64>) = ops.iter().map(|o| o.coefficient_range()).unzip();
        let b0: Vec<f64> = min.iter().zip(&max).map(|(a, b)| 0.5 * (a + b)).collect();
        if let Some(b) = b0.iter().find(|b| !(**b > 0.0 && b.is_finite())) {
            return Err(Error::InvalidInput(format!("scaling constant {b} is not positive")));
        }
        let q = max.iter().zip(&b0).map(|(a, b)| (a - b) / b).fold(0.0, f64::max);
        Ok(Self { b0, min, max, q })
    }

    /// Explicit constants; `q` is measured against `ops`.
    pub fn with_constants(b0: Vec<f64>, ops: &[SturmLiouville1D]) -> Result<Self> {
        if b0.len() != ops.len() {
            return Err(Error::Shape(format!("{} constants for {} modes", b0.len(), ops.len())));
        }
        if let Some(b) = b0.iter().find(|b| !(**b > 0.0 && b.is_finite())) {
            return Err(Error::InvalidInput(format!("scaling constant {b} is not positive")));
        }
        let (min, max): (Vec<f64>, Vec<f64>) = ops.iter().map(|o| o.coefficient_range()).unzip();
        let q = (0..b0.len()).map(|l| ((max[l] - b0[l]) / b0[l]).max((b0[l] - min[l]) / b0[l])).fold(0.0, f64::max);
        Ok(Self { b0, min, max, q })
    }

    /// Condition bound for the preconditioned Lagrange operator,
    /// `max{(1+q)^a, (1-q)^-a} / min{(1+q)^-a, (1-q)^a}`. `None` when `q >= 1`.
    pub fn analytic_bound(&self, alpha: f64) -> Option<f64> {
        let q = self.q;
        if !(0.0..1.0).contains(&q) {
            return None;
        }
        let hi = (1.0 + q).powf(alpha).max((1.0 - q).powf(-alpha));
        let lo = (1.0 + q).powf(-alpha).min((1.0 - q).powf(alpha));
        Some(hi / lo)
    }
}

/// A preconditioner together with the outcome of its compression.
#[derive(Clone, Debug)]
pub struct Preconditioner {
    pub operator: FactoredOperator,
    /// True when the rank cap, not the tolerance, decided the rank.
    pub capped: bool,
}

/// Largest number of exponentials tried before falling back to the SVD
/// compression of the coefficient tensor.
const MAX_EXP_TERMS: usize = 16;

/// Positive exponential-sum approximation of the inverse Lagrange function on
/// the range of eigenvalue sums, with the fewest terms whose relative error is
/// within `eps`. Relative accuracy is what bounds the condition number, and a
/// positive sum keeps the preconditioner SPD however small the rank.
fn inverse_lagrange(
    modes: Vec<Mode>,
    alpha: f64,
    beta: f64,
    gamma: f64,
    eps: f64,
    cap: usize,
) -> Result<Preconditioner> {
    let f = SpectralFunction::lagrange_inverse(alpha, beta, gamma)?;
    let lambdas: Vec<Vec<f64>> = modes.iter().map(|m| m.eigenvalues.clone()).collect();
    let lo: f64 = lambdas.iter().map(|v| v.iter().copied().fold(f64::INFINITY, f64::min)).sum();
    let hi: f64 = lambdas.iter().map(|v| v.iter().copied().fold(0.0, f64::max)).sum();
    let mut best: Option<ExpSum> = None;
    for k in 1..=cap.min(MAX_EXP_TERMS) {
        // a failed fit at one term count leaves the others usable
        let Ok(fit) = fit_exp_sum(&f, lo, hi, k) else { continue };
        let done = fit.log_error <= eps;
        if best.as_ref().map_or(true, |b| fit.log_error < b.log_error) {
            best = Some(fit);
        }
        if done {
            break;
        }
    }
    if cap == 0 {
        return Err(Error::InvalidInput("preconditioner rank cap must be positive".into()));
    }
    if best.as_ref().map_or(true, |b| b.log_error > eps && cap > MAX_EXP_TERMS) {
        let grid = CoefficientGrid::new(lambdas, f)?;
        let (coefficients, capped) = compress_coefficient_tensor_capped(&grid, eps, cap)?;
        return Ok(Preconditioner { operator: FactoredOperator::new(modes, coefficients)?, capped });
    }
    let best = best.ok_or_else(|| Error::NonFinite("exponential sum preconditioner".into()))?;
    let capped = best.log_error > eps;
    let coefficients = exp_sum_tensor(&lambdas, &best)?;
    Ok(Preconditioner { operator: FactoredOperator::new(modes, coefficients)?, capped })
}

/// Case (A): the inverse Lagrange function of `sum_l b0_l (-Delta_l)` in the
/// sine basis.
pub fn build_aniso_laplace_preconditioner(
    n: &[usize],
    coeffs: &AnisotropyCoefficients,
    alpha: f64,
    beta: f64,
    gamma: f64,
    eps: f64,
    rank_cap: usize,
) -> Result<Preconditioner> {
    if n.len() != coeffs.b0.len() {
        return Err(Error::Shape(format!("{} modes but {} scaling constants", n.len(), coeffs.b0.len())));
    }
    let modes = n.iter().zip(&coeffs.b0).map(|(&n, &b)| Mode::laplace(n, b)).collect::<Result<Vec<_>>>()?;
    inverse_lagrange(modes, alpha, beta, gamma, eps, rank_cap)
}

/// Case (B): the inverse Lagrange function of the variable-coefficient
/// operator itself, in its eigenbases.
pub fn build_direct_inverse_preconditioner(
    modes: Vec<Mode>,
    alpha: f64,
    beta: f64,
    gamma: f64,
    eps: f64,
    rank_cap: usize,
) -> Result<Preconditioner> {
    inverse_lagrange(modes, alpha, beta, gamma, eps, rank_cap)
}

/// Extreme eigenvalues of the symmetrized preconditioned operator.
#[derive(Clone, Copy, Debug)]
pub struct ConditionEstimate {
    pub lambda_min: f64,
    pub lambda_max: f64,
}

impl ConditionEstimate {
    pub fn condition(&self) -> f64 {
        self.lambda_max / self.lambda_min
    }
}

/// Spectrum of `P^{1/2} F P^{1/2}` by one dense symmetric eigensolve.
///
/// With `P = B_P diag(p) B_P^T` and `F = B_F diag(f) B_F^T` the matrix is
/// similar to `diag(p)^{1/2} C diag(f) C^T diag(p)^{1/2}`, `C = B_P^T B_F`,
/// and `C` is a Kronecker product of `n x n` blocks. Limited to `10^4`
/// unknowns.
pub fn estimate_condition(precond: &FactoredOperator, forward: &FactoredOperator) -> Result<ConditionEstimate> {
    let shape = forward.shape();
    if precond.shape() != shape {
        return Err(Error::Shape(format!("preconditioner {:?} vs operator {shape:?}", precond.shape())));
    }
    let total: usize = shape.iter().product();
    if total > 10_000 {
        return Err(Error::DenseGuard { shape });
    }
    let p = precond.coefficients().to_dense()?.into_vec();
    let f = forward.coefficients().to_dense()?.into_vec();
    if let Some(v) = p.iter().chain(&f).find(|v| !(**v > 0.0)) {
        return Err(Error::Indefinite(format!("coefficient tensor entry {v:.3e}")));
    }
    let mut c = Mat::from_fn(1, 1, |_, _| 1.0);
    for (mp, mf) in precond.modes().iter().zip(forward.modes()) {
        let block = mul(mp.basis_matrix().transpose(), mf.basis_matrix().as_ref());
        let (q, n) = (c.nrows(), block.nrows());
        c = Mat::from_fn(q * n, q * n, |i, k| c[(i / n, k / n)] * block[(i % n, k % n)]);
    }
    let sp: Vec<f64> = p.iter().map(|v| v.sqrt()).collect();
    let left = Mat::from_fn(total, total, |i, k| sp[i] * c[(i, k)] * f[k].sqrt());
    let m = mul(left.as_ref(), left.transpose());
    let ev = sym_eigenvalues(m.as_ref())?;
    let (lambda_min, lambda_max) = (ev[0], ev[total - 1]);
    if !(lambda_min > 0.0) {
        return Err(Error::Indefinite(format!("preconditioned eigenvalue {lambda_min:.3e}")));
    }
    Ok(ConditionEstimate { lambda_min, lambda_max })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discretization::{Boundary, Coefficient1D};

    fn ops(coefs: &[Coefficient1D], n: usize) -> Vec<SturmLiouville1D> {
        coefs.iter().map(|c| SturmLiouville1D::assemble(c, n, Boundary::DoubledEdge).unwrap()).collect()
    }

    #[test]
    fn scaling_constants_and_q() {
        let a = AnisotropyCoefficients::from_operators(&ops(&[Coefficient1D::A3], 63)).unwrap();
        assert!(a.q > 0.0 && a.q < 1.0);
        assert!((a.b0[0] - 0.5 * (a.min[0] + a.max[0])).abs() < 1e-15);
        let raw = AnisotropyCoefficients::from_operators(&ops(&[Coefficient1D::A1, Coefficient1D::A2], 63)).unwrap();
        let modified =
            AnisotropyCoefficients::from_operators(&ops(&[Coefficient1D::A1, Coefficient1D::A2Modified], 63)).unwrap();
        assert!(modified.q <= raw.q);
        let a2 = AnisotropyCoefficients::from_operators(&ops(&[Coefficient1D::A2], 63)).unwrap();
        let a2m = AnisotropyCoefficients::from_operators(&ops(&[Coefficient1D::A2Modified], 63)).unwrap();
        assert!(a2m.q < a2.q);
    }

    #[test]
    fn analytic_bound_limits() {
        let mut a = AnisotropyCoefficients::isotropic(2);
        assert_eq!(a.analytic_bound(0.5), Some(1.0));
        a.q = 1.0;
        assert_eq!(a.analytic_bound(0.5), None);
        a.q = 0.5;
        let b = a.analytic_bound(1.0).unwrap();
        // max(1.5, 2) / min(2/3, 1/2)
        assert!((b - 4.0).abs() < 1e-12);
    }

    #[test]
    fn exact_preconditioner_has_unit_condition() {
        let n = 15;
        let modes = vec![Mode::laplace(n, 1.0).unwrap(); 2];
        let forward =
            FactoredOperator::build(modes, SpectralFunction::lagrange(0.5, 1.0, 1.0).unwrap(), 1e-13, 100).unwrap();
        let p = build_aniso_laplace_preconditioner(
            &[n, n],
            &AnisotropyCoefficients::isotropic(2),
            0.5,
            1.0,
            1.0,
            1e-12,
            100,
        )
        .unwrap();
        let c = estimate_condition(&p.operator, &forward).unwrap();
        assert!((c.condition() - 1.0).abs() < 1e-8, "{}", c.condition());
    }

    #[test]
    fn direct_inverse_condition_near_one() {
        let n = 15;
        let modes: Vec<Mode> = [Coefficient1D::A1, Coefficient1D::A2Modified]
            .iter()
            .map(|c| Mode::sturm_liouville(c, n, Boundary::DoubledEdge).unwrap())
            .collect();
        let forward =
            FactoredOperator::build(modes.clone(), SpectralFunction::lagrange(1.0, 1.0, 1.0).unwrap(), 1e-13, 100)
                .unwrap();
        let p = build_direct_inverse_preconditioner(modes, 1.0, 1.0, 1.0, 1e-6, 100).unwrap();
        let c = estimate_condition(&p.operator, &forward).unwrap();
        assert!(c.condition() <= 1.0 + 1e-3, "{}", c.condition());
    }

    #[test]
    fn rank_one_preconditioner_stays_positive() {
        let n = 31;
        let modes: Vec<Mode> = [Coefficient1D::A1, Coefficient1D::A3]
            .iter()
            .map(|c| Mode::sturm_liouville(c, n, Boundary::DoubledEdge).unwrap())
            .collect();
        let p = build_direct_inverse_preconditioner(modes, 0.5, 1.0, 1.0, 1e-2, 1).unwrap();
        assert_eq!(p.operator.rank(), 1);
        assert!(p.capped);
        let d = p.operator.coefficients().to_dense().unwrap();
        assert!(d.data().iter().all(|v| *v > 0.0));
    }

    #[test]
    fn near_zero_alpha_gives_constant_half() {
        let p = build_aniso_laplace_preconditioner(
            &[31, 31],
            &AnisotropyCoefficients::isotropic(2),
            1e-9,
            1.0,
            1.0,
            1e-6,
            6,
        )
        .unwrap();
        assert_eq!(p.operator.rank(), 1);
        let d = p.operator.coefficients().to_dense().unwrap();
        assert!(d.data().iter().all(|v| (v - 0.5).abs() < 1e-6));
    }
}
