//! Randomized invariant checks of the tensor and operator algebra against
//! dense oracles. Used by `fraclop validate` and the acceptance suite.

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use crate::discretization::{Boundary, Coefficient1D};
use crate::operator_algebra::{
    compress_coefficient_tensor, quadrature_tensor, sinc_for_tolerance, spectral_range, CoefficientGrid,
    FactoredOperator, Mode, SpectralFunction,
};
use crate::tensor_formats::{canonical_to_tucker, full_to_tucker, truncate, CanonicalTensor, DenseTensor};
use crate::Result;

/// Outcome of one randomized check.
#[derive(Clone, Debug)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub trials: usize,
    /// Worst error over all trials, in the unit `tolerance` is stated in.
    pub max_error: f64,
    pub tolerance: f64,
}

impl CheckOutcome {
    pub fn passed(&self) -> bool {
        self.max_error <= self.tolerance
    }
}

type Check = fn(&mut StdRng) -> Result<f64>;

/// Every check with its tolerance.
pub const CHECKS: [(&str, f64, Check); 8] = [
    ("canonical_add", 1e-12, add_vs_dense),
    ("canonical_hadamard", 1e-12, hadamard_vs_dense),
    ("canonical_inner", 1e-12, inner_vs_dense),
    ("cauchy_schwarz", 1e-10, cauchy_schwarz),
    ("truncate_bound", 3.0, truncate_bound),
    ("rhosvd_vs_hosvd", 5.0, rhosvd_vs_hosvd),
    ("operator_symmetry", 1e-10, operator_symmetry),
    ("inverse_composition", 5.0, inverse_composition),
];

fn random_shape(rng: &mut StdRng, max_n: usize) -> Vec<usize> {
    let d = rng.random_range(2..=3);
    (0..d).map(|_| rng.random_range(2..=max_n)).collect()
}

fn dense_rel(a: &DenseTensor, b: &DenseTensor) -> f64 {
    a.max_abs_diff(b) / b.max_abs().max(f64::MIN_POSITIVE)
}

fn add_vs_dense(rng: &mut StdRng) -> Result<f64> {
    let shape = random_shape(rng, 16);
    let (ra, rb) = (rng.random_range(0..=5), rng.random_range(0..=5));
    let a = CanonicalTensor::random(rng, &shape, ra)?;
    let b = CanonicalTensor::random(rng, &shape, rb)?;
    let dense = a.to_dense()?.add(&b.to_dense()?)?;
    let sum = a.add(&b)?;
    if sum.rank() != ra + rb {
        return Ok(f64::INFINITY);
    }
    if dense.max_abs() == 0.0 {
        return Ok(sum.to_dense()?.max_abs());
    }
    Ok(dense_rel(&sum.to_dense()?, &dense))
}

fn hadamard_vs_dense(rng: &mut StdRng) -> Result<f64> {
    let shape = random_shape(rng, 12);
    let r_a = rng.random_range(1..=4);
    let a = CanonicalTensor::random(rng, &shape, r_a)?;
    let r_b = rng.random_range(1..=4);
    let b = CanonicalTensor::random(rng, &shape, r_b)?;
    let (da, db) = (a.to_dense()?, b.to_dense()?);
    let prod = DenseTensor::from_vec(&shape, da.data().iter().zip(db.data()).map(|(x, y)| x * y).collect())?;
    Ok(dense_rel(&a.hadamard(&b)?.to_dense()?, &prod))
}

fn inner_vs_dense(rng: &mut StdRng) -> Result<f64> {
    let shape = random_shape(rng, 12);
    let r_a = rng.random_range(1..=4);
    let a = CanonicalTensor::random(rng, &shape, r_a)?;
    let r_b = rng.random_range(1..=4);
    let b = CanonicalTensor::random(rng, &shape, r_b)?;
    let exact = a.to_dense()?.dot(&b.to_dense()?);
    // relative to |a| |b| so that near-orthogonal pairs are not penalized
    Ok((a.inner(&b)? - exact).abs() / (a.norm() * b.norm()).max(f64::MIN_POSITIVE))
}

fn cauchy_schwarz(rng: &mut StdRng) -> Result<f64> {
    let shape = random_shape(rng, 12);
    let r_a = rng.random_range(0..=4);
    let a = CanonicalTensor::random(rng, &shape, r_a)?;
    let r_b = rng.random_range(0..=4);
    let b = CanonicalTensor::random(rng, &shape, r_b)?;
    if a.inner(&a)? < 0.0 {
        return Ok(f64::INFINITY);
    }
    let bound = a.norm() * b.norm();
    if bound == 0.0 {
        return Ok(a.inner(&b)?.abs());
    }
    Ok((a.inner(&b)?.abs() / bound - 1.0).max(0.0))
}

/// Error of `truncate` in units of `eps |a|`.
fn truncate_bound(rng: &mut StdRng) -> Result<f64> {
    let shape = random_shape(rng, 12);
    let r = rng.random_range(1..=8);
    // decaying weights give a nontrivial truncation
    let a = CanonicalTensor::random(rng, &shape, r)?;
    let (shape_v, w, f) = a.into_parts();
    let w: Vec<f64> = w.iter().enumerate().map(|(k, v)| v * 0.3f64.powi(k as i32)).collect();
    let a = CanonicalTensor::from_normalized(&shape_v, w, f)?;
    let eps = [1e-2, 1e-4, 1e-8][rng.random_range(0..3)];
    let t = truncate(&a, eps)?;
    if t.rank() > a.rank() {
        return Ok(f64::INFINITY);
    }
    let da = a.to_dense()?;
    let err = t.to_dense()?.sub(&da)?.frobenius_norm();
    Ok(err / (eps * da.frobenius_norm()).max(f64::MIN_POSITIVE))
}

/// Distance between the RHOSVD and HOSVD reconstructions in units of
/// `eps |a|`, on tensors with geometrically decaying terms.
fn rhosvd_vs_hosvd(rng: &mut StdRng) -> Result<f64> {
    let n = rng.random_range(4..=12);
    let shape = vec![n; 3];
    let r_a = rng.random_range(2..=10);
    let a = CanonicalTensor::random(rng, &shape, r_a)?;
    let (s, w, f) = a.into_parts();
    let w: Vec<f64> = w.iter().enumerate().map(|(k, v)| v * 0.1f64.powi(k as i32)).collect();
    let a = CanonicalTensor::from_normalized(&s, w, f)?;
    let eps = 1e-6;
    let da = a.to_dense()?;
    let reduced = canonical_to_tucker(&a, eps)?.to_dense()?;
    let full = full_to_tucker(&da, eps)?.to_dense()?;
    Ok(reduced.sub(&full)?.frobenius_norm() / (eps * da.frobenius_norm()).max(f64::MIN_POSITIVE))
}

fn random_modes(rng: &mut StdRng, d: usize, max_n: usize) -> Result<Vec<Mode>> {
    let pool = [Coefficient1D::A1, Coefficient1D::A2Modified, Coefficient1D::A3, Coefficient1D::Unit];
    (0..d)
        .map(|_| {
            let c = &pool[rng.random_range(0..pool.len())];
            Mode::sturm_liouville(c, rng.random_range(3..=max_n), Boundary::DoubledEdge)
        })
        .collect()
}

fn operator_symmetry(rng: &mut StdRng) -> Result<f64> {
    let d = rng.random_range(2..=3);
    let modes = random_modes(rng, d, 10)?;
    let shape: Vec<usize> = modes.iter().map(|m| m.len()).collect();
    let alpha = rng.random_range(0.05..=1.0);
    let op = FactoredOperator::build(modes, SpectralFunction::lagrange(alpha, 1.0, 1.0)?, 1e-10, 200)?;
    let x = CanonicalTensor::random(rng, &shape, 2)?;
    let y = CanonicalTensor::random(rng, &shape, 2)?;
    let (ax, ay) = (op.apply(&x)?, op.apply(&y)?);
    let scale = (ax.norm() * y.norm()).max(x.norm() * ay.norm()).max(f64::MIN_POSITIVE);
    Ok((ax.inner(&y)? - x.inner(&ay)?).abs() / scale)
}

/// `A^alpha A^-alpha x - x` in units of `eps |x|`. Both operators are built
/// to relative accuracy: `A^-alpha` by sinc quadrature and `A^alpha` as the
/// Hadamard product of the exact linear tensor with the rule for
/// `lambda^(alpha - 1)`.
fn inverse_composition(rng: &mut StdRng) -> Result<f64> {
    let d = rng.random_range(2..=3);
    let modes = random_modes(rng, d, 8)?;
    let shape: Vec<usize> = modes.iter().map(|m| m.len()).collect();
    let alpha: f64 = rng.random_range(0.05..=1.0);
    let eps = 1e-8;
    let lambdas: Vec<Vec<f64>> = modes.iter().map(|m| m.eigenvalues.clone()).collect();
    let (lo, hi) = spectral_range(&lambdas)?;
    let rule = |a: f64| sinc_for_tolerance(a, lo, hi, eps / 10.0, 2000).and_then(|q| quadrature_tensor(&lambdas, &q));
    let linear =
        compress_coefficient_tensor(&CoefficientGrid::new(lambdas.clone(), SpectralFunction::power(1.0)?)?, 1e-14, 3)?;
    let positive = if alpha < 1.0 { linear.hadamard(&rule(1.0 - alpha)?)? } else { linear };
    let f = FactoredOperator::new(modes.clone(), positive)?;
    let g = FactoredOperator::new(modes, rule(alpha)?)?;
    let r_x = rng.random_range(1..=2);
    let x = CanonicalTensor::random(rng, &shape, r_x)?;
    let back = f.apply(&g.apply(&x)?)?;
    // densely: the Gram-based canonical norm of a difference loses half the digits
    let dx = x.to_dense()?;
    Ok(back.to_dense()?.sub(&dx)?.frobenius_norm() / (eps * dx.frobenius_norm()).max(f64::MIN_POSITIVE))
}

/// Runs `check` for `trials` seeds derived from `seed`.
pub fn run_check(name: &'static str, tolerance: f64, check: Check, trials: usize, seed: u64) -> Result<CheckOutcome> {
    let mut rng = StdRng::seed_from_u64(seed);
    let mut max_error: f64 = 0.0;
    for _ in 0..trials {
        let e = check(&mut rng)?;
        max_error = max_error.max(if e.is_nan() { f64::INFINITY } else { e });
    }
    Ok(CheckOutcome { name, trials, max_error, tolerance })
}

pub fn run_all(trials: usize, seed: u64) -> Result<Vec<CheckOutcome>> {
    CHECKS
        .iter()
        .enumerate()
        .map(|(i, &(name, tol, check))| run_check(name, tol, check, trials, seed.wrapping_add(i as u64)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_checks_pass_on_a_few_trials() {
        for c in run_all(5, 11).unwrap() {
            assert!(c.passed(), "{} error {:.3e} > {:.1e}", c.name, c.max_error, c.tolerance);
        }
    }
}
