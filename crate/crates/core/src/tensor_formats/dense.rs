use faer::{Mat, MatRef};

use crate::linalg::{mul_into, row_major, row_major_mut};
use crate::{Error, Result};

/// Largest per-mode size for which a dense 3-way array may be allocated.
pub const DENSE_3D_LIMIT: usize = 256;

/// Full tensor in row-major order (last index fastest). Used as an oracle and
/// as the bootstrap input of HOSVD; large 3D grids never go through here.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseTensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

pub(crate) fn check_dense_shape(shape: &[usize]) -> Result<()> {
    if shape.len() >= 3 && shape.iter().any(|&n| n > DENSE_3D_LIMIT) {
        return Err(Error::DenseGuard { shape: shape.to_vec() });
    }
    Ok(())
}

impl DenseTensor {
    pub fn zeros(shape: &[usize]) -> Result<Self> {
        check_dense_shape(shape)?;
        let len = shape.iter().product();
        Ok(Self { shape: shape.to_vec(), data: vec![0.0; len] })
    }

    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        check_dense_shape(shape)?;
        if shape.iter().product::<usize>() != data.len() {
            return Err(Error::Shape(format!("{} values for shape {:?}", data.len(), shape)));
        }
        Ok(Self { shape: shape.to_vec(), data })
    }

    pub fn from_fn(shape: &[usize], mut f: impl FnMut(&[usize]) -> f64) -> Result<Self> {
        let mut t = Self::zeros(shape)?;
        let mut idx = vec![0usize; shape.len()];
        for v in t.data.iter_mut() {
            *v = f(&idx);
            increment(&mut idx, shape);
        }
        Ok(t)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn order(&self) -> usize {
        self.shape.len()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn offset(&self, idx: &[usize]) -> usize {
        let mut off = 0;
        for (i, n) in idx.iter().zip(&self.shape) {
            off = off * n + i;
        }
        off
    }

    pub fn get(&self, idx: &[usize]) -> f64 {
        self.data[self.offset(idx)]
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, x| m.max(x.abs()))
    }

    pub fn dot(&self, other: &Self) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a + b)
    }

    fn zip_with(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        if self.shape != other.shape {
            return Err(Error::Shape(format!("{:?} vs {:?}", self.shape, other.shape)));
        }
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect();
        Ok(Self { shape: self.shape.clone(), data })
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.data.iter().zip(&other.data).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
    }

    /// Mode-`mode` unfolding: `n_mode x prod(other sizes)`, remaining indices
    /// in increasing mode order.
    pub fn unfold(&self, mode: usize) -> Mat<f64> {
        let n = self.shape[mode];
        let left: usize = self.shape[..mode].iter().product();
        let right: usize = self.shape[mode + 1..].iter().product();
        Mat::from_fn(n, left * right, |i, col| {
            let l = col / right;
            let r = col % right;
            self.data[(l * n + i) * right + r]
        })
    }

    /// `self x_mode m`, with `m` of shape `p x n_mode`.
    pub fn mode_product(&self, mode: usize, m: MatRef<'_, f64>) -> Result<Self> {
        let n = self.shape[mode];
        if m.ncols() != n {
            return Err(Error::Shape(format!(
                "mode-{mode} product with {}x{} matrix on size {n}",
                m.nrows(),
                m.ncols()
            )));
        }
        let p = m.nrows();
        let left: usize = self.shape[..mode].iter().product();
        let right: usize = self.shape[mode + 1..].iter().product();
        let mut shape = self.shape.clone();
        shape[mode] = p;
        let mut out = Self::zeros(&shape)?;
        if right == 0 || left == 0 {
            return Ok(out);
        }
        for l in 0..left {
            let src = row_major(&self.data[l * n * right..(l + 1) * n * right], n, right);
            let dst = row_major_mut(&mut out.data[l * p * right..(l + 1) * p * right], p, right);
            mul_into(dst, m, src, false);
        }
        Ok(out)
    }
}

/// Advance a row-major multi-index; wraps to zero after the last entry.
pub(crate) fn increment(idx: &mut [usize], shape: &[usize]) {
    for m in (0..idx.len()).rev() {
        idx[m] += 1;
        if idx[m] < shape[m] {
            return;
        }
        idx[m] = 0;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unfold_and_mode_product_agree() {
        let t = DenseTensor::from_fn(&[2, 3, 4], |i| (i[0] * 12 + i[1] * 4 + i[2]) as f64).unwrap();
        let m = Mat::from_fn(2, 3, |i, j| (i + 2 * j) as f64 - 1.0);
        let out = t.mode_product(1, m.as_ref()).unwrap();
        assert_eq!(out.shape(), &[2, 2, 4]);
        for a in 0..2 {
            for p in 0..2 {
                for c in 0..4 {
                    let expect: f64 = (0..3).map(|j| m[(p, j)] * t.get(&[a, j, c])).sum();
                    assert_eq!(out.get(&[a, p, c]), expect);
                }
            }
        }
        let u = t.unfold(2);
        assert_eq!(u.nrows(), 4);
        assert_eq!(u[(3, 5)], t.get(&[1, 2, 3]));
    }

    #[test]
    fn guard_rejects_large_cubes() {
        assert!(matches!(DenseTensor::zeros(&[257, 2, 2]), Err(Error::DenseGuard { .. })));
        assert!(DenseTensor::zeros(&[1000, 1000]).is_ok());
    }
}
