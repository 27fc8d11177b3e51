use faer::{Mat, MatRef};

use super::canonical::CanonicalTensor;
use super::dense::DenseTensor;
use crate::linalg::{eps_rank, left_singular, mul, thin_svd};
use crate::{Error, Result};

/// Largest Tucker rank accepted by [`tucker_to_canonical`].
pub const MAX_CORE_RANK: usize = 256;

/// Orthogonal Tucker tensor `core x_1 V1 x_2 V2 ... x_d Vd`.
#[derive(Clone, Debug)]
pub struct TuckerTensor {
    shape: Vec<usize>,
    core: DenseTensor,
    factors: Vec<Mat<f64>>,
}

impl TuckerTensor {
    pub fn new(core: DenseTensor, factors: Vec<Mat<f64>>) -> Result<Self> {
        if core.order() != factors.len() {
            return Err(Error::Shape(format!("core of order {} with {} factors", core.order(), factors.len())));
        }
        for (l, f) in factors.iter().enumerate() {
            if f.ncols() != core.shape()[l] || f.ncols() > f.nrows() {
                return Err(Error::Shape(format!(
                    "factor {l} is {}x{} for core size {}",
                    f.nrows(),
                    f.ncols(),
                    core.shape()[l]
                )));
            }
        }
        let shape = factors.iter().map(|f| f.nrows()).collect();
        Ok(Self { shape, core, factors })
    }

    pub fn zeros(shape: &[usize]) -> Result<Self> {
        let core = DenseTensor::zeros(&vec![0; shape.len()])?;
        Ok(Self { shape: shape.to_vec(), core, factors: shape.iter().map(|&n| Mat::zeros(n, 0)).collect() })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn ranks(&self) -> &[usize] {
        self.core.shape()
    }

    pub fn core(&self) -> &DenseTensor {
        &self.core
    }

    pub fn factor(&self, mode: usize) -> MatRef<'_, f64> {
        self.factors[mode].as_ref()
    }

    pub fn entry(&self, idx: &[usize]) -> f64 {
        // contract the core with one row of each factor, last mode first
        let mut cur = self.core.data().to_vec();
        let mut dims = self.core.shape().to_vec();
        for l in (0..self.shape.len()).rev() {
            let r = dims[l];
            let outer = cur.len() / r.max(1);
            if r == 0 {
                return 0.0;
            }
            let row: Vec<f64> = (0..r).map(|c| self.factors[l][(idx[l], c)]).collect();
            cur = (0..outer).map(|o| (0..r).map(|c| cur[o * r + c] * row[c]).sum()).collect();
            dims.pop();
        }
        cur.first().copied().unwrap_or(0.0)
    }

    pub fn to_dense(&self) -> Result<DenseTensor> {
        super::dense::check_dense_shape(&self.shape)?;
        let mut t = self.core.clone();
        for (l, f) in self.factors.iter().enumerate() {
            t = t.mode_product(l, f.as_ref())?;
        }
        Ok(t)
    }

    pub fn into_parts(self) -> (DenseTensor, Vec<Mat<f64>>) {
        (self.core, self.factors)
    }
}

/// Truncated HOSVD of a full tensor. Each mode keeps the ε/√d tail of its
/// unfolding, so the reconstruction error is at most `eps * ||t||_F`.
pub fn full_to_tucker(t: &DenseTensor, eps: f64) -> Result<TuckerTensor> {
    if t.data().iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("full_to_tucker input".into()));
    }
    if t.frobenius_norm() == 0.0 {
        return TuckerTensor::zeros(t.shape());
    }
    let d = t.order();
    let mode_tol = eps / (d as f64).sqrt();
    let mut factors = Vec::with_capacity(d);
    for l in 0..d {
        let (u, s) = left_singular(t.unfold(l).as_ref())?;
        let r = eps_rank(&s, mode_tol).max(1);
        factors.push(u.subcols(0, r).to_owned());
    }
    let mut core = t.clone();
    for (l, f) in factors.iter().enumerate() {
        core = core.mode_product(l, f.transpose())?;
    }
    TuckerTensor::new(core, factors)
}

/// Reduced HOSVD: Tucker factors from the SVDs of the weighted side matrices
/// `U_l diag(w)`, core by projecting every canonical term. Never forms the
/// full tensor. The tail cut is relative to `||w||_2`.
pub fn canonical_to_tucker(a: &CanonicalTensor, eps: f64) -> Result<TuckerTensor> {
    if a.rank() == 0 || a.weights().iter().all(|&w| w == 0.0) {
        return TuckerTensor::zeros(a.shape());
    }
    let d = a.order();
    let mode_tol = eps / (d as f64).sqrt();
    let w = a.weights();
    let mut factors = Vec::with_capacity(d);
    for l in 0..d {
        let u = a.factor(l);
        let side = Mat::from_fn(u.nrows(), u.ncols(), |i, k| u[(i, k)] * w[k]);
        let (left, s) = left_singular(side.as_ref())?;
        let r = eps_rank(&s, mode_tol).max(1);
        factors.push(left.subcols(0, r).to_owned());
    }
    let core = project_canonical(a, &factors)?;
    TuckerTensor::new(core, factors)
}

/// Core `sum_k w_k ⊗_l (V_l^T u_k^(l))`.
pub(crate) fn project_canonical(a: &CanonicalTensor, factors: &[Mat<f64>]) -> Result<DenseTensor> {
    let d = a.order();
    let rank = a.rank();
    let ranks: Vec<usize> = factors.iter().map(|f| f.ncols()).collect();
    let coords: Vec<Mat<f64>> = factors.iter().enumerate().map(|(l, v)| mul(v.transpose(), a.factor(l))).collect();
    let w = a.weights();
    let mut core = DenseTensor::zeros(&ranks)?;
    match d {
        1 => {
            for i in 0..ranks[0] {
                core.data_mut()[i] = (0..rank).map(|k| w[k] * coords[0][(i, k)]).sum();
            }
        }
        _ => {
            // core_(1) = C_1 diag(w) KR(C_2, ..., C_d)^T
            let rest: usize = ranks[1..].iter().product();
            let kr = Mat::from_fn(rank, rest, |k, c| {
                let mut v = w[k];
                let mut c = c;
                for l in (1..d).rev() {
                    v *= coords[l][(c % ranks[l], k)];
                    c /= ranks[l];
                }
                v
            });
            let unfolded = mul(coords[0].as_ref(), kr.as_ref());
            let data = core.data_mut();
            for i in 0..ranks[0] {
                for c in 0..rest {
                    data[i * rest + c] = unfolded[(i, c)];
                }
            }
        }
    }
    Ok(core)
}

/// HOSVD of the (small) core followed by a rotation of the factors; ranks are
/// cut at `eps` relative to the core norm.
pub fn recompress_tucker(t: &TuckerTensor, eps: f64) -> Result<TuckerTensor> {
    let inner = full_to_tucker(t.core(), eps)?;
    if inner.ranks().iter().all(|&r| r == 0) {
        return TuckerTensor::zeros(t.shape());
    }
    let (core, rot) = inner.into_parts();
    let factors = t.factors.iter().zip(&rot).map(|(v, q)| mul(v.as_ref(), q.as_ref())).collect();
    TuckerTensor::new(core, factors)
}

/// Tucker-to-canonical through the mixed Tucker-canonical format.
///
/// 2D: SVD of the core matrix. 3D: the core is rotated along its smallest
/// mode into HOSVD order, each slice is expanded by its SVD, and terms are
/// dropped globally (smallest first) while the discarded energy stays below
/// `eps * ||core||`. Output rank is at most `r_min * r_mid`.
pub fn tucker_to_canonical(t: &TuckerTensor, eps: f64) -> Result<CanonicalTensor> {
    tucker_to_canonical_capped(t, eps, usize::MAX)
}

/// [`tucker_to_canonical`] keeping at most `cap` terms (the largest ones).
pub fn tucker_to_canonical_capped(t: &TuckerTensor, eps: f64, cap: usize) -> Result<CanonicalTensor> {
    let ranks = t.ranks();
    if let Some(&r) = ranks.iter().max() {
        if r > MAX_CORE_RANK {
            return Err(Error::OversizedCore { rank: r, max: MAX_CORE_RANK });
        }
    }
    if ranks.iter().any(|&r| r == 0) || t.core().frobenius_norm() == 0.0 {
        return CanonicalTensor::zeros(t.shape());
    }
    let terms = match t.shape().len() {
        1 => {
            let v = Mat::from_fn(ranks[0], 1, |i, _| t.core().data()[i]);
            vec![(1.0, vec![v.col_as_slice(0).to_vec()])]
        }
        2 => core_terms_2d(t.core(), eps, cap)?,
        3 => core_terms_3d(t.core(), eps, cap)?,
        d => return Err(Error::InvalidInput(format!("order {d} not supported"))),
    };
    let rank = terms.len();
    let d = t.shape().len();
    let mut weights = Vec::with_capacity(rank);
    let mut factors: Vec<Mat<f64>> = t.shape().iter().map(|&n| Mat::zeros(n, rank)).collect();
    for (k, (w, vecs)) in terms.into_iter().enumerate() {
        weights.push(w);
        for l in 0..d {
            let col = mul(t.factor(l), Mat::from_fn(vecs[l].len(), 1, |i, _| vecs[l][i]).as_ref());
            for i in 0..col.nrows() {
                factors[l][(i, k)] = col[(i, 0)];
            }
        }
    }
    CanonicalTensor::new(t.shape(), weights, factors)
}

type CoreTerm = (f64, Vec<Vec<f64>>);

fn core_terms_2d(core: &DenseTensor, eps: f64, cap: usize) -> Result<Vec<CoreTerm>> {
    let s = core.shape();
    let m = crate::linalg::row_major(core.data(), s[0], s[1]);
    let svd = thin_svd(m)?;
    let r = eps_rank(&svd.s, eps).min(cap);
    Ok((0..r).map(|k| (svd.s[k], vec![svd.u.col_as_slice(k).to_vec(), svd.v.col_as_slice(k).to_vec()])).collect())
}

fn core_terms_3d(core: &DenseTensor, eps: f64, cap: usize) -> Result<Vec<CoreTerm>> {
    let shape = core.shape().to_vec();
    let slice_mode = (0..3).min_by_key(|&l| (shape[l], l)).unwrap();
    let others: Vec<usize> = (0..3).filter(|&l| l != slice_mode).collect();
    // rotate the slice mode onto its own singular vectors so energy sits in
    // the leading slices
    let (rot, _) = left_singular(core.unfold(slice_mode).as_ref())?;
    let rotated = core.mode_product(slice_mode, rot.transpose())?;
    let (p, q) = (shape[others[0]], shape[others[1]]);
    let mut candidates: Vec<(f64, usize, Vec<f64>, Vec<f64>)> = Vec::new();
    let mut slice = vec![0.0; p * q];
    for nu in 0..rotated.shape()[slice_mode] {
        for a in 0..p {
            for b in 0..q {
                let mut idx = [0usize; 3];
                idx[slice_mode] = nu;
                idx[others[0]] = a;
                idx[others[1]] = b;
                slice[a * q + b] = rotated.get(&idx);
            }
        }
        let svd = thin_svd(crate::linalg::row_major(&slice, p, q))?;
        for k in 0..svd.s.len() {
            if svd.s[k] > 0.0 {
                candidates.push((svd.s[k], nu, svd.u.col_as_slice(k).to_vec(), svd.v.col_as_slice(k).to_vec()));
            }
        }
    }
    // stable ordering: by value descending, then by slice and position
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.sort_by(|&x, &y| candidates[y].0.partial_cmp(&candidates[x].0).unwrap().then(x.cmp(&y)));
    let sigma: Vec<f64> = order.iter().map(|&i| candidates[i].0).collect();
    let keep = eps_rank(&sigma, eps).min(cap);
    let rot_dim = rot.nrows();
    Ok(order[..keep]
        .iter()
        .map(|&i| {
            let (s, nu, ref u, ref v) = candidates[i];
            let e: Vec<f64> = (0..rot_dim).map(|r| rot[(r, nu)]).collect();
            let mut vecs = vec![Vec::new(); 3];
            vecs[slice_mode] = e;
            vecs[others[0]] = u.clone();
            vecs[others[1]] = v.clone();
            (s, vecs)
        })
        .collect())
}
