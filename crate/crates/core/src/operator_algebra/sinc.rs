use faer::Mat;

use super::spectral::{check_alpha, gamma};
use crate::tensor_formats::CanonicalTensor;
use crate::{Error, Result};

/// Quadrature `x^(-alpha) ~ sum_k c_k exp(-t_k x)` valid on `[lo, hi]`.
#[derive(Clone, Debug)]
pub struct SincQuadrature {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    pub step: f64,
    /// Number of exponential nodes left of the origin in the substituted
    /// variable (the first node is `t = 0`).
    pub left: usize,
    /// Predicted relative error.
    pub predicted: f64,
}

/// Builds the `2M + 1` term rule for `x^(-alpha)` on `[lo, hi]`.
///
/// With `t = exp(u) / lo` the Laplace integral becomes an integral over the
/// real line whose integrand decays like `exp(alpha u)` on the left and
/// doubly exponentially on the right. `2M` trapezoidal nodes cover the line;
/// the remaining term is a node at `t = 0` carrying the left tail of the
/// trapezoidal sum of `exp(alpha u)` (a geometric series), which leaves only an
/// `O(x exp(-(1 + alpha) L))` truncation error. The step `h` and the split of
/// the nodes between the two sides balance the discretization error
/// `exp(-pi^2/h)` against both truncation errors.
pub fn sinc_quadrature(alpha: f64, lo: f64, hi: f64, m: usize) -> Result<SincQuadrature> {
    check_alpha(alpha)?;
    if m < 1 {
        return Err(Error::InvalidInput("sinc quadrature needs M >= 1".into()));
    }
    if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
        return Err(Error::InvalidInput(format!("spectral interval [{lo}, {hi}] must be positive")));
    }
    let log_kappa = (hi / lo).ln();
    let pi2 = std::f64::consts::PI.powi(2);
    // exponential nodes u_k = k h for k = -left..=right
    let spread = 2 * m - 1;
    let mut best = (f64::INFINITY, 1.0, spread);
    for s in 1..=400 {
        let h = 0.01 * s as f64;
        for right in 0..=spread {
            let left = spread - right;
            let tail = (left as f64 + 1.0) * h;
            let e_disc = -pi2 / h;
            let e_left = (1.0 + alpha) * (log_kappa - tail);
            let e_right = -(right as f64 * h).exp();
            let e = e_disc.max(e_left).max(e_right);
            if e < best.0 {
                best = (e, h, left);
            }
        }
    }
    let (log_err, h, left) = best;
    let g = gamma(alpha);
    let scale = lo.powf(-alpha) / g;
    let mut nodes = Vec::with_capacity(2 * m + 1);
    let mut weights = Vec::with_capacity(2 * m + 1);
    let tail = (left as f64 + 1.0) * h;
    nodes.push(0.0);
    weights.push(scale * h * (-alpha * tail).exp() / -(-alpha * h).exp_m1());
    for k in 0..=spread {
        let u = (k as f64 - left as f64) * h;
        nodes.push(u.exp() / lo);
        weights.push(scale * h * (alpha * u).exp());
    }
    Ok(SincQuadrature { nodes, weights, step: h, left, predicted: log_err.exp() })
}

/// Smallest `M <= max_m` whose predicted relative error on `[lo, hi]` is at
/// most `eps`, with its rule.
pub fn sinc_for_tolerance(alpha: f64, lo: f64, hi: f64, eps: f64, max_m: usize) -> Result<SincQuadrature> {
    // the predicted error is monotone in M, so bisect
    let (mut a, mut b) = (1, max_m.max(1));
    while a < b {
        let m = (a + b) / 2;
        if sinc_quadrature(alpha, lo, hi, m)?.predicted <= eps {
            b = m;
        } else {
            a = m + 1;
        }
    }
    // the prediction drops constant factors, so confirm on a grid and grow M
    for m in a..=max_m.max(1) {
        let q = sinc_quadrature(alpha, lo, hi, m)?;
        if q.predicted <= eps && q.measured_error(alpha, lo, hi) <= eps {
            return Ok(q);
        }
    }
    Err(Error::InvalidInput(format!("sinc quadrature cannot reach {eps:e} with M <= {max_m}")))
}

impl SincQuadrature {
    pub fn eval(&self, x: f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(t, c)| c * (-t * x).exp()).sum()
    }

    /// Largest `|s(x) x^alpha - 1|` on a log grid over `[lo, hi]`.
    pub fn measured_error(&self, alpha: f64, lo: f64, hi: f64) -> f64 {
        let (a, b) = (lo.ln(), hi.max(lo).ln());
        (0..=1000)
            .map(|j| (a + (b - a) * j as f64 / 1000.0).exp())
            .map(|x| (self.eval(x) * x.powf(alpha) - 1.0).abs())
            .fold(0.0, f64::max)
    }
}

/// Canonical tensor `sum_k c_k ⊗_l exp(-t_k lambda^(l))` approximating
/// `(lambda_{i_1} + ... + lambda_{i_d})^(-alpha)`, rank `2M + 1` (the
/// `t = 0` term is the all-ones tensor).
pub fn sinc_inverse_power(lambdas: &[Vec<f64>], alpha: f64, m: usize) -> Result<CanonicalTensor> {
    let (lo, hi) = spectral_range(lambdas)?;
    quadrature_tensor(lambdas, &sinc_quadrature(alpha, lo, hi, m)?)
}

/// `sum_l lambda^(l)` ranges over `[lo, hi]`.
pub fn spectral_range(lambdas: &[Vec<f64>]) -> Result<(f64, f64)> {
    if lambdas.is_empty() || lambdas.iter().any(|v| v.is_empty()) {
        return Err(Error::InvalidInput("empty spectrum".into()));
    }
    if lambdas.iter().flatten().any(|x| !(x.is_finite() && *x > 0.0)) {
        return Err(Error::InvalidInput("spectrum must be positive".into()));
    }
    let lo: f64 = lambdas.iter().map(|v| v.iter().copied().fold(f64::INFINITY, f64::min)).sum();
    let hi: f64 = lambdas.iter().map(|v| v.iter().copied().fold(0.0, f64::max)).sum();
    Ok((lo, hi))
}

/// The rule evaluated on the eigenvalue sums as a canonical tensor.
pub fn quadrature_tensor(lambdas: &[Vec<f64>], q: &SincQuadrature) -> Result<CanonicalTensor> {
    let shape: Vec<usize> = lambdas.iter().map(|v| v.len()).collect();
    let r = q.nodes.len();
    let factors = lambdas.iter().map(|v| Mat::from_fn(v.len(), r, |i, k| (-q.nodes[k] * v[i]).exp())).collect();
    CanonicalTensor::new(&shape, q.weights.clone(), factors)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalar_values() {
        for alpha in [0.1, 0.3, 0.5, 1.0] {
            let t = sinc_inverse_power(&[vec![1.0]], alpha, 60).unwrap();
            assert!((t.entry(&[0]) - 1.0).abs() < 1e-8, "alpha {alpha}");
        }
        let t = sinc_inverse_power(&[vec![2.0]], 0.5, 80).unwrap();
        assert!((t.entry(&[0]) - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-7);
        assert_eq!(t.rank(), 161);
    }

    #[test]
    fn rule_is_accurate_over_the_interval() {
        let q = sinc_quadrature(0.5, 30.0, 3e4, 40).unwrap();
        for x in [30.0, 100.0, 1234.5, 3e4] {
            let rel = (q.eval(x) - x.powf(-0.5)).abs() * x.sqrt();
            assert!(rel < 10.0 * q.predicted.max(1e-15), "x={x} rel={rel}");
        }
    }

    #[test]
    fn tolerance_search_is_minimal() {
        let q = sinc_for_tolerance(0.5, 10.0, 1e4, 1e-8, 400).unwrap();
        assert!(q.predicted <= 1e-8 && q.measured_error(0.5, 10.0, 1e4) <= 1e-8);
        let m = (q.nodes.len() - 1) / 2;
        let p = sinc_quadrature(0.5, 10.0, 1e4, m - 1).unwrap();
        assert!(p.predicted > 1e-8 || p.measured_error(0.5, 10.0, 1e4) > 1e-8);
        assert!(sinc_for_tolerance(0.5, 10.0, 1e4, 1e-30, 20).is_err());
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(sinc_inverse_power(&[vec![1.0]], 1.5, 10).is_err());
        assert!(sinc_inverse_power(&[vec![1.0]], 0.5, 0).is_err());
        assert!(sinc_inverse_power(&[vec![-1.0]], 0.5, 5).is_err());
    }
}
