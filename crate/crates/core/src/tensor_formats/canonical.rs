use faer::{Mat, MatRef};

use super::dense::{increment, DenseTensor};
use crate::linalg::mul;
use crate::{Error, Result};

/// `T = sum_k w_k u_k^(1) ⊗ ... ⊗ u_k^(d)` with unit-norm factor columns.
///
/// The zero tensor is the rank-0 tensor with empty factors.
#[derive(Clone, Debug)]
pub struct CanonicalTensor {
    shape: Vec<usize>,
    weights: Vec<f64>,
    factors: Vec<Mat<f64>>,
}

fn check_order(shape: &[usize]) -> Result<()> {
    if shape.is_empty() || shape.len() > 3 {
        return Err(Error::InvalidInput(format!("tensor order {} not in 1..=3", shape.len())));
    }
    if shape.iter().any(|&n| n == 0) {
        return Err(Error::InvalidInput(format!("zero mode size in {shape:?}")));
    }
    Ok(())
}

impl CanonicalTensor {
    /// Builds a tensor from raw terms; columns are rescaled to unit norm and
    /// their norms folded into the weights.
    pub fn new(shape: &[usize], weights: Vec<f64>, factors: Vec<Mat<f64>>) -> Result<Self> {
        check_order(shape)?;
        if factors.len() != shape.len() {
            return Err(Error::Shape(format!("{} factor matrices for order {}", factors.len(), shape.len())));
        }
        let rank = weights.len();
        for (l, (f, &n)) in factors.iter().zip(shape).enumerate() {
            if f.nrows() != n || f.ncols() != rank {
                return Err(Error::Shape(format!("factor {l} is {}x{}, expected {n}x{rank}", f.nrows(), f.ncols())));
            }
        }
        if weights.iter().any(|w| !w.is_finite())
            || factors.iter().any(|f| (0..rank).any(|k| f.col_as_slice(k).iter().any(|x| !x.is_finite())))
        {
            return Err(Error::NonFinite("canonical tensor term".into()));
        }
        let mut t = Self { shape: shape.to_vec(), weights, factors };
        t.normalize();
        Ok(t)
    }

    /// Like [`CanonicalTensor::new`] but keeps the columns bit-for-bit; they
    /// must already have unit norm (checked to 1e-12).
    pub fn from_normalized(shape: &[usize], weights: Vec<f64>, factors: Vec<Mat<f64>>) -> Result<Self> {
        let t = Self::new(shape, weights.clone(), factors.clone())?;
        for f in &factors {
            for k in 0..weights.len() {
                if (crate::linalg::norm2(f.col_as_slice(k)) - 1.0).abs() > 1e-12 {
                    return Err(Error::InvalidInput(format!("factor column {k} is not unit norm")));
                }
            }
        }
        drop(t);
        Ok(Self { shape: shape.to_vec(), weights, factors })
    }

    pub fn zeros(shape: &[usize]) -> Result<Self> {
        check_order(shape)?;
        Ok(Self {
            shape: shape.to_vec(),
            weights: Vec::new(),
            factors: shape.iter().map(|&n| Mat::zeros(n, 0)).collect(),
        })
    }

    /// Rank-1 tensor of all ones.
    pub fn ones(shape: &[usize]) -> Result<Self> {
        let vecs: Vec<Vec<f64>> = shape.iter().map(|&n| vec![1.0; n]).collect();
        Self::rank_one(1.0, &vecs)
    }

    /// `weight * v_1 ⊗ ... ⊗ v_d`.
    pub fn rank_one(weight: f64, vectors: &[Vec<f64>]) -> Result<Self> {
        let shape: Vec<usize> = vectors.iter().map(|v| v.len()).collect();
        let factors = vectors.iter().map(|v| Mat::from_fn(v.len(), 1, |i, _| v[i])).collect();
        Self::new(&shape, vec![weight], factors)
    }

    fn normalize(&mut self) {
        for k in 0..self.weights.len() {
            let mut scale = 1.0;
            let mut zero = false;
            for f in &self.factors {
                let nrm = crate::linalg::norm2(f.col_as_slice(k));
                if nrm == 0.0 {
                    zero = true;
                }
                scale *= nrm;
            }
            if zero || self.weights[k] == 0.0 {
                self.weights[k] = 0.0;
                for f in &mut self.factors {
                    let col = f.col_as_slice_mut(k);
                    col.fill(0.0);
                    col[0] = 1.0;
                }
                continue;
            }
            self.weights[k] *= scale;
            for f in &mut self.factors {
                let col = f.col_as_slice_mut(k);
                let nrm = crate::linalg::norm2(col);
                col.iter_mut().for_each(|x| *x /= nrm);
            }
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn order(&self) -> usize {
        self.shape.len()
    }

    pub fn rank(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn factor(&self, mode: usize) -> MatRef<'_, f64> {
        self.factors[mode].as_ref()
    }

    pub fn factors(&self) -> &[Mat<f64>] {
        &self.factors
    }

    pub fn into_parts(self) -> (Vec<usize>, Vec<f64>, Vec<Mat<f64>>) {
        (self.shape, self.weights, self.factors)
    }

    /// Number of stored reals, `R (1 + sum n_l)`.
    pub fn storage(&self) -> usize {
        self.rank() * (1 + self.shape.iter().sum::<usize>())
    }

    pub fn entry(&self, idx: &[usize]) -> f64 {
        (0..self.rank())
            .map(|k| {
                let mut v = self.weights[k];
                for (f, &i) in self.factors.iter().zip(idx) {
                    v *= f[(i, k)];
                }
                v
            })
            .sum()
    }

    pub fn to_dense(&self) -> Result<DenseTensor> {
        let mut out = DenseTensor::zeros(&self.shape)?;
        let mut idx = vec![0usize; self.order()];
        for v in out.data_mut().iter_mut() {
            *v = self.entry(&idx);
            increment(&mut idx, &self.shape);
        }
        Ok(out)
    }

    fn check_same_shape(&self, other: &Self, op: &str) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::Shape(format!("{op}: {:?} vs {:?}", self.shape, other.shape)));
        }
        Ok(())
    }

    /// Term concatenation; the rank is the sum of ranks.
    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_same_shape(other, "add")?;
        let mut weights = self.weights.clone();
        weights.extend_from_slice(&other.weights);
        let factors = self
            .factors
            .iter()
            .zip(&other.factors)
            .map(|(a, b)| {
                let (ra, rb) = (a.ncols(), b.ncols());
                Mat::from_fn(a.nrows(), ra + rb, |i, k| if k < ra { a[(i, k)] } else { b[(i, k - ra)] })
            })
            .collect();
        Ok(Self { shape: self.shape.clone(), weights, factors })
    }

    /// `self + alpha * other`.
    pub fn axpy(&self, alpha: f64, other: &Self) -> Result<Self> {
        self.add(&other.scaled(alpha))
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        let mut out = self.clone();
        out.weights.iter_mut().for_each(|w| *w *= alpha);
        out
    }

    /// Entrywise product; the rank is the product of ranks, term `(k, m)` at
    /// position `k * rank(other) + m`.
    pub fn hadamard(&self, other: &Self) -> Result<Self> {
        self.check_same_shape(other, "hadamard")?;
        let (ra, rb) = (self.rank(), other.rank());
        let mut weights = Vec::with_capacity(ra * rb);
        for k in 0..ra {
            for m in 0..rb {
                weights.push(self.weights[k] * other.weights[m]);
            }
        }
        let factors = self
            .factors
            .iter()
            .zip(&other.factors)
            .map(|(a, b)| Mat::from_fn(a.nrows(), ra * rb, |i, c| a[(i, c / rb)] * b[(i, c % rb)]))
            .collect();
        let mut out = Self { shape: self.shape.clone(), weights, factors };
        out.normalize();
        Ok(out)
    }

    /// Euclidean scalar product through per-mode Gram matrices.
    pub fn inner(&self, other: &Self) -> Result<f64> {
        self.check_same_shape(other, "inner")?;
        if self.rank() == 0 || other.rank() == 0 {
            return Ok(0.0);
        }
        let grams: Vec<Mat<f64>> =
            self.factors.iter().zip(&other.factors).map(|(a, b)| mul(a.transpose(), b.as_ref())).collect();
        let mut total = 0.0;
        for k in 0..self.rank() {
            let mut row = 0.0;
            for m in 0..other.rank() {
                let mut p = other.weights[m];
                for g in &grams {
                    p *= g[(k, m)];
                }
                row += p;
            }
            total += self.weights[k] * row;
        }
        Ok(total)
    }

    pub fn norm(&self) -> f64 {
        self.inner(self).map(|v| v.max(0.0).sqrt()).unwrap_or(0.0)
    }

    /// Replace every factor matrix by `f(mode, factor)` keeping the weights;
    /// columns are renormalized afterwards.
    pub fn map_factors(&self, mut f: impl FnMut(usize, MatRef<'_, f64>) -> Mat<f64>) -> Result<Self> {
        let factors = self.factors.iter().enumerate().map(|(l, m)| f(l, m.as_ref())).collect();
        Self::new(&self.shape, self.weights.clone(), factors)
    }

    /// Keep only the terms with the given indices, in that order.
    pub fn select_terms(&self, terms: &[usize]) -> Self {
        let weights = terms.iter().map(|&k| self.weights[k]).collect();
        let factors =
            self.factors.iter().map(|f| Mat::from_fn(f.nrows(), terms.len(), |i, c| f[(i, terms[c])])).collect();
        Self { shape: self.shape.clone(), weights, factors }
    }

    /// Weights and factor entries uniform in `[-1, 1)`.
    pub fn random<R: rand::Rng + ?Sized>(rng: &mut R, shape: &[usize], rank: usize) -> Result<Self> {
        let weights = (0..rank).map(|_| rng.random_range(-1.0..1.0)).collect();
        let factors = shape.iter().map(|&n| Mat::from_fn(n, rank, |_, _| rng.random_range(-1.0..1.0))).collect();
        Self::new(shape, weights, factors)
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().all(|w| w.is_finite())
            && self.factors.iter().all(|f| (0..f.ncols()).all(|k| f.col_as_slice(k).iter().all(|x| x.is_finite())))
    }
}


#[cfg(test)]
pub(crate) use tests::random_canonical;
