use faer::prelude::{Solve, SolveLstsq};
use faer::Mat;

use super::spectral::SpectralFunction;
use crate::tensor_formats::CanonicalTensor;
use crate::{Error, Result};

/// `f(x) ~ sum_k c_k exp(-t_k x)` on an interval, with positive `c_k, t_k`.
#[derive(Clone, Debug)]
pub struct ExpSum {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    /// Largest `|log(s(x) / f(x))|` on a dense check grid.
    pub log_error: f64,
}

impl ExpSum {
    pub fn eval(&self, x: f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(t, c)| c * (-t * x).exp()).sum()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

const FIT_POINTS: usize = 400;
const CHECK_POINTS: usize = 2000;
const STAGES: [f64; 5] = [2.0, 4.0, 8.0, 16.0, 32.0];
const LM_ITERS: usize = 200;

fn log_grid(lo: f64, hi: f64, m: usize) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..m).map(|j| (a + (b - a) * j as f64 / (m - 1) as f64).exp()).collect()
}

struct Problem<'a> {
    x: &'a [f64],
    logf: Vec<f64>,
    k: usize,
}

impl Problem<'_> {
    /// Log-ratio residuals and their Jacobian with respect to
    /// `(log t, log c)`.
    fn eval(&self, q: &[f64], jac: Option<&mut Mat<f64>>) -> Vec<f64> {
        let k = self.k;
        let mut r = vec![0.0; self.x.len()];
        let mut terms = vec![0.0; k];
        let mut jac = jac;
        for (j, &x) in self.x.iter().enumerate() {
            let mut s = 0.0;
            for i in 0..k {
                terms[i] = (q[k + i] - q[i].exp() * x).exp();
                s += terms[i];
            }
            r[j] = s.ln() - self.logf[j];
            if let Some(m) = jac.as_deref_mut() {
                for i in 0..k {
                    m[(j, i)] = -terms[i] * q[i].exp() * x / s;
                    m[(j, k + i)] = terms[i] / s;
                }
            }
        }
        r
    }
}

fn shaped(r: &[f64], p: f64) -> Vec<f64> {
    r.iter().map(|v| v.signum() * v.abs().powf(p / 2.0)).collect()
}

fn cost(r: &[f64], p: f64) -> f64 {
    r.iter().map(|v| v.abs().powf(p)).sum()
}

/// Levenberg-Marquardt on `sum |r_j|^p` written as least squares in
/// `sign(r) |r|^(p/2)`.
fn minimize(prob: &Problem, q: &mut Vec<f64>, p: f64) {
    let np = q.len();
    let mut jac = Mat::<f64>::zeros(prob.x.len(), np);
    let mut r = prob.eval(q, Some(&mut jac));
    let mut c = cost(&r, p);
    let mut mu = 1e-3;
    for _ in 0..LM_ITERS {
        let phi = shaped(&r, p);
        // chain rule for the shaping function
        for (j, v) in r.iter().enumerate() {
            let d = if p == 2.0 { 1.0 } else { 0.5 * p * v.abs().powf(0.5 * p - 1.0) };
            for i in 0..np {
                jac[(j, i)] *= d;
            }
        }
        let jtj = crate::linalg::mul(jac.transpose(), jac.as_ref());
        let jtr: Vec<f64> = (0..np).map(|i| (0..phi.len()).map(|j| jac[(j, i)] * phi[j]).sum()).collect();
        let mut improved = false;
        for _ in 0..12 {
            let a = Mat::from_fn(np, np, |i, k| if i == k { jtj[(i, i)] * (1.0 + mu) + 1e-300 } else { jtj[(i, k)] });
            let rhs = Mat::from_fn(np, 1, |i, _| -jtr[i]);
            let step = a.as_ref().partial_piv_lu().solve(rhs.as_ref());
            // log-parameters move by at most a factor e^4 per step
            let trial: Vec<f64> = (0..np).map(|i| q[i] + step[(i, 0)].clamp(-4.0, 4.0)).collect();
            if trial.iter().any(|v| !v.is_finite()) {
                mu *= 4.0;
                continue;
            }
            let rt = prob.eval(&trial, None);
            let ct = cost(&rt, p);
            if ct.is_finite() && ct < c {
                *q = trial;
                mu = (mu / 3.0).max(1e-12);
                improved = true;
                break;
            }
            mu *= 4.0;
        }
        if !improved {
            break;
        }
        let old = c;
        r = prob.eval(q, Some(&mut jac));
        c = cost(&r, p);
        if old - c <= 1e-12 * old {
            break;
        }
    }
}

/// Log-spaced nodes in `[t_lo, t_hi]`, weights from a linear fit of `s / f`
/// to one.
fn initial_guess(prob: &Problem, t_lo: f64, t_hi: f64) -> Vec<f64> {
    let (x, k) = (prob.x, prob.k);
    let t0 = if k == 1 { vec![t_lo] } else { log_grid(t_lo, t_hi, k) };
    let e = Mat::from_fn(x.len(), k, |j, i| (-t0[i] * x[j]).exp() / prob.logf[j].exp());
    let ones = Mat::from_fn(x.len(), 1, |_, _| 1.0);
    let c0 = e.as_ref().qr().solve_lstsq(ones.as_ref());
    let cmax = (0..k).map(|i| c0[(i, 0)]).fold(f64::MIN_POSITIVE, f64::max);
    let mut q: Vec<f64> = t0.iter().map(|t| t.ln()).collect();
    q.extend((0..k).map(|i| c0[(i, 0)].max(1e-8 * cmax).ln()));
    q
}

/// Fits `k` positive exponentials to `f` on `[lo, hi]` in the relative
/// (log-ratio) sense, driving the error towards its minimax value.
pub fn fit_exp_sum(f: &SpectralFunction, lo: f64, hi: f64, k: usize) -> Result<ExpSum> {
    if k == 0 {
        return Err(Error::InvalidInput("exponential sum needs at least one term".into()));
    }
    if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
        return Err(Error::InvalidInput(format!("interval [{lo}, {hi}] must be positive")));
    }
    let hi = if hi > lo * (1.0 + 1e-12) { hi } else { lo * 1.01 };
    let x = log_grid(lo, hi, FIT_POINTS);
    let logf: Vec<f64> = x.iter().map(|&v| f.eval(v).ln()).collect();
    if logf.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("function must be positive on the interval".into()));
    }
    let prob = Problem { x: &x, logf, k };
    // several log-spaced starts; LM on this problem has poor local minima
    let mut best: Option<(f64, Vec<f64>)> = None;
    for (a, b) in [(0.3, 2.0), (0.05, 1.0), (1.0, 6.0), (0.01, 0.3)] {
        let mut q = initial_guess(&prob, a / hi, b / lo);
        for p in STAGES {
            minimize(&prob, &mut q, p);
        }
        let err = prob.eval(&q, None).iter().fold(0.0, |m: f64, v| m.max(v.abs()));
        let sane = q.iter().all(|v| v.exp().is_finite() && v.exp() > 0.0);
        if sane && err.is_finite() && best.as_ref().map_or(true, |(e, _)| err < *e) {
            best = Some((err, q));
        }
    }
    let q = best.ok_or_else(|| Error::NonFinite("exponential sum fit".into()))?.1;
    let nodes: Vec<f64> = q[..k].iter().map(|v| v.exp()).collect();
    let weights: Vec<f64> = q[k..].iter().map(|v| v.exp()).collect();
    let mut out = ExpSum { nodes, weights, log_error: 0.0 };
    out.log_error =
        log_grid(lo, hi, CHECK_POINTS).into_iter().map(|v| (out.eval(v) / f.eval(v)).ln().abs()).fold(0.0, f64::max);
    if !out.log_error.is_finite() {
        return Err(Error::NonFinite("exponential sum fit".into()));
    }
    Ok(out)
}

/// Canonical tensor `sum_k c_k ⊗_l exp(-t_k lambda^(l))`, the exponential sum
/// evaluated on the eigenvalue sums.
pub fn exp_sum_tensor(lambdas: &[Vec<f64>], s: &ExpSum) -> Result<CanonicalTensor> {
    let shape: Vec<usize> = lambdas.iter().map(|v| v.len()).collect();
    let r = s.len();
    let factors = lambdas.iter().map(|v| Mat::from_fn(v.len(), r, |i, k| (-s.nodes[k] * v[i]).exp())).collect();
    CanonicalTensor::new(&shape, s.weights.clone(), factors)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fit_improves_with_terms() {
        let f = SpectralFunction::lagrange_inverse(1.0, 1.0, 1.0).unwrap();
        let e2 = fit_exp_sum(&f, 6.0, 3.2e4, 2).unwrap().log_error;
        let e4 = fit_exp_sum(&f, 6.0, 3.2e4, 4).unwrap().log_error;
        let e6 = fit_exp_sum(&f, 6.0, 3.2e4, 6).unwrap();
        assert!(e4 < e2 && e6.log_error < e4, "{e2} {e4} {}", e6.log_error);
        assert!(e6.log_error < 0.05);
        assert!(e6.weights.iter().all(|v| *v > 0.0) && e6.nodes.iter().all(|v| *v >= 0.0));
    }

    #[test]
    fn constant_function_needs_one_term() {
        let f = SpectralFunction::lagrange_inverse(1e-9, 1.0, 1.0).unwrap();
        let s = fit_exp_sum(&f, 20.0, 8000.0, 1).unwrap();
        assert!(s.log_error < 1e-6, "{}", s.log_error);
        assert!((s.eval(100.0) - 0.5).abs() < 1e-6);
    }

    #[test]
    fn tensor_matches_scalar_rule() {
        let f = SpectralFunction::inverse_power(0.5, 1.0).unwrap();
        let s = fit_exp_sum(&f, 2.0, 60.0, 5).unwrap();
        let l = vec![vec![1.0, 5.0, 20.0], vec![1.0, 10.0], vec![0.5, 30.0]];
        let t = exp_sum_tensor(&l, &s).unwrap();
        let v = t.entry(&[1, 1, 0]);
        assert!((v - s.eval(15.5)).abs() < 1e-14 * v);
    }
}
