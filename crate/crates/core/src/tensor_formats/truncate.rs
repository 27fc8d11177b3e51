use faer::Mat;

use super::canonical::CanonicalTensor;
use super::tucker::{canonical_to_tucker, recompress_tucker, tucker_to_canonical_capped};
use crate::linalg::{eps_rank, mul, thin_svd};
use crate::Result;

/// Outcome of a capped truncation.
#[derive(Clone, Debug)]
pub struct Truncated {
    pub tensor: CanonicalTensor,
    /// True when the cap, not the tolerance, decided the rank.
    pub capped: bool,
}

/// Rank truncation at relative tolerance `eps` (Frobenius norm).
pub fn truncate(a: &CanonicalTensor, eps: f64) -> Result<CanonicalTensor> {
    Ok(truncate_capped(a, eps, usize::MAX)?.tensor)
}

/// Rank truncation keeping at most `cap` terms.
///
/// 2D: thin QR of both factor matrices and an SVD of the small core.
/// 3D: RHOSVD (tolerance scaled to the actual norm so cancellation in the
/// weights does not hide accuracy), exact projected core, HOSVD of the core
/// and Tucker-to-canonical. The output rank never exceeds the input rank.
pub fn truncate_capped(a: &CanonicalTensor, eps: f64, cap: usize) -> Result<Truncated> {
    if a.rank() == 0 {
        return Ok(Truncated { tensor: a.clone(), capped: false });
    }
    let norm = a.norm();
    if norm == 0.0 || !norm.is_finite() {
        if !norm.is_finite() {
            return Err(crate::Error::NonFinite("truncate input".into()));
        }
        return Ok(Truncated { tensor: CanonicalTensor::zeros(a.shape())?, capped: false });
    }
    let out = match a.order() {
        1 => collapse_1d(a)?,
        2 => truncate_2d(a, eps, cap)?,
        _ => {
            let merged = merge_parallel_terms(a)?;
            if merged.rank() == 0 {
                return Ok(Truncated { tensor: merged, capped: false });
            }
            let out = truncate_3d(&merged, eps, norm, cap)?;
            if out.tensor.rank() >= merged.rank() && merged.rank() <= cap {
                return Ok(Truncated { tensor: merged, capped: false });
            }
            out
        }
    };
    if out.tensor.rank() > a.rank() {
        return Ok(Truncated { tensor: a.clone(), capped: a.rank() > cap });
    }
    Ok(out)
}

/// Folds terms whose factors are parallel in every mode into one term and
/// drops terms that cancel to round-off.
fn merge_parallel_terms(a: &CanonicalTensor) -> Result<CanonicalTensor> {
    const PARALLEL: f64 = 1.0 - 1e-13;
    let r = a.rank();
    let grams: Vec<Mat<f64>> = a.factors().iter().map(|u| mul(u.transpose(), u.as_ref())).collect();
    let mut weights = a.weights().to_vec();
    let mut rep: Vec<usize> = Vec::new();
    let mut keep = vec![false; r];
    'terms: for k in 0..r {
        for &m in &rep {
            let mut sign = 1.0;
            let mut parallel = true;
            for g in &grams {
                let c = g[(k, m)];
                if c.abs() < PARALLEL {
                    parallel = false;
                    break;
                }
                sign *= c.signum();
            }
            if parallel {
                weights[m] += sign * weights[k];
                continue 'terms;
            }
        }
        rep.push(k);
        keep[k] = true;
    }
    let wmax = a.weights().iter().fold(0.0f64, |x, w| x.max(w.abs()));
    let terms: Vec<usize> = (0..r).filter(|&k| keep[k] && weights[k].abs() > 8.0 * f64::EPSILON * wmax).collect();
    if terms.len() == r {
        return Ok(a.clone());
    }
    let shape = a.shape();
    if terms.is_empty() {
        return CanonicalTensor::zeros(shape);
    }
    let factors = a.factors().iter().map(|f| Mat::from_fn(f.nrows(), terms.len(), |i, c| f[(i, terms[c])])).collect();
    CanonicalTensor::new(shape, terms.iter().map(|&k| weights[k]).collect(), factors)
}

fn collapse_1d(a: &CanonicalTensor) -> Result<Truncated> {
    let u = a.factor(0);
    let v: Vec<f64> = (0..u.nrows()).map(|i| (0..a.rank()).map(|k| a.weights()[k] * u[(i, k)]).sum()).collect();
    Ok(Truncated { tensor: CanonicalTensor::rank_one(1.0, &[v])?, capped: false })
}

fn truncate_2d(a: &CanonicalTensor, eps: f64, cap: usize) -> Result<Truncated> {
    let (u, v) = (a.factor(0), a.factor(1));
    let qr_u = u.qr();
    let qr_v = v.qr();
    let (qu, ru) = (qr_u.compute_thin_Q(), qr_u.thin_R().to_owned());
    let (qv, rv) = (qr_v.compute_thin_Q(), qr_v.thin_R().to_owned());
    let w = a.weights();
    let scaled = Mat::from_fn(ru.nrows(), ru.ncols(), |i, k| ru[(i, k)] * w[k]);
    let core = mul(scaled.as_ref(), rv.transpose());
    let svd = thin_svd(core.as_ref())?;
    let wanted = eps_rank(&svd.s, eps);
    let r = wanted.min(cap);
    let left = mul(qu.as_ref(), svd.u.subcols(0, r));
    let right = mul(qv.as_ref(), svd.v.subcols(0, r));
    let tensor = CanonicalTensor::new(a.shape(), svd.s[..r].to_vec(), vec![left, right])?;
    Ok(Truncated { tensor, capped: wanted > r })
}

fn truncate_3d(a: &CanonicalTensor, eps: f64, norm: f64, cap: usize) -> Result<Truncated> {
    let wnorm = crate::linalg::norm2(a.weights());
    let inner_tol = (0.1 * eps * norm / wnorm).max(1e-15);
    let tk = canonical_to_tucker(a, inner_tol)?;
    let tk = recompress_tucker(&tk, eps)?;
    let full = tucker_to_canonical_capped(&tk, eps, usize::MAX)?;
    if full.rank() <= cap {
        return Ok(Truncated { tensor: full, capped: false });
    }
    let tensor = tucker_to_canonical_capped(&tk, eps, cap)?;
    Ok(Truncated { tensor, capped: true })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor_formats::canonical::random_canonical;
    use rand::rngs::StdRng;
    use rand::SeedableRng;

    fn rel_dense_err(a: &CanonicalTensor, b: &CanonicalTensor) -> f64 {
        let da = a.to_dense().unwrap();
        let db = b.to_dense().unwrap();
        da.sub(&db).unwrap().frobenius_norm() / db.frobenius_norm()
    }

    #[test]
    fn rank_one_is_kept() {
        let a = CanonicalTensor::rank_one(2.0, &[vec![1.0, 2.0, 2.0], vec![3.0, 4.0], vec![1.0, 1.0]]).unwrap();
        let t = truncate(&a, 1e-8).unwrap();
        assert_eq!(t.rank(), 1);
        assert!(rel_dense_err(&t, &a) < 1e-14);
    }

    #[test]
    fn duplicated_terms_collapse() {
        let mut rng = StdRng::seed_from_u64(7);
        for shape in [vec![7, 9], vec![5, 6, 7]] {
            let b = random_canonical(&mut rng, &shape, 2);
            let a = b.add(&b).unwrap();
            assert_eq!(a.rank(), 4);
            let t = truncate(&a, 1e-10).unwrap();
            assert_eq!(t.rank(), 2, "shape {shape:?}");
            assert!(rel_dense_err(&t, &a) < 1e-12);
        }
    }

    #[test]
    fn cancellation_gives_zero() {
        let a = CanonicalTensor::ones(&[4, 4, 4]).unwrap();
        let s = a.add(&a.scaled(-1.0)).unwrap();
        let t = truncate(&s, 1e-6).unwrap();
        assert_eq!(t.rank(), 0);
    }

    #[test]
    fn cap_limits_rank_and_flags() {
        let mut rng = StdRng::seed_from_u64(8);
        let a = random_canonical(&mut rng, &[10, 10], 6);
        let t = truncate_capped(&a, 1e-12, 3).unwrap();
        assert_eq!(t.tensor.rank(), 3);
        assert!(t.capped);
        let a3 = random_canonical(&mut rng, &[6, 6, 6], 5);
        let t3 = truncate_capped(&a3, 1e-12, 2).unwrap();
        assert!(t3.tensor.rank() <= 2);
        assert!(t3.capped);
    }

    #[test]
    fn partial_cancellation_3d_keeps_accuracy() {
        let mut rng = StdRng::seed_from_u64(11);
        let b = random_canonical(&mut rng, &[8, 8, 8], 3);
        let c = random_canonical(&mut rng, &[8, 8, 8], 2);
        // b + c - b: weight norm much larger than the result norm
        let a = b.scaled(1e3).add(&c).unwrap().add(&b.scaled(-1e3)).unwrap();
        let t = truncate(&a, 1e-6).unwrap();
        assert!(t.rank() <= 2);
        assert!(rel_dense_err(&t, &c) < 3e-6);
    }
}
