use faer::Mat;
use rustfft::num_complex::Complex;

use super::coefficient::{compress_coefficient_tensor, CoefficientGrid};
use super::spectral::SpectralFunction;
use crate::discretization::{laplace_eigenvalues, Boundary, Coefficient1D, SineTransform, SturmLiouville1D};
use crate::linalg::mul;
use crate::tensor_formats::CanonicalTensor;
use crate::{Error, Result};

/// Orthogonal eigenbasis of one mode.
#[derive(Clone, Debug)]
pub enum ModeBasis {
    /// Eigenvectors as columns.
    Dense(Mat<f64>),
    /// The orthonormal DST-I, applied by FFT.
    Sine(SineTransform),
}

/// Eigenvalues and eigenbasis of one 1D operator.
#[derive(Clone, Debug)]
pub struct Mode {
    pub eigenvalues: Vec<f64>,
    pub basis: ModeBasis,
}

impl Mode {
    /// Sturm-Liouville operator of `coef` on `n` points, decomposed by the
    /// tridiagonal eigensolver.
    pub fn sturm_liouville(coef: &Coefficient1D, n: usize, boundary: Boundary) -> Result<Self> {
        let sl = SturmLiouville1D::assemble(coef, n, boundary)?;
        let eig = sl.eigen()?;
        if let Some(v) = eig.values.first() {
            if *v <= 0.0 {
                return Err(Error::Indefinite(format!("{} on {n} points has eigenvalue {v:.3e}", coef.name())));
            }
        }
        Ok(Self { eigenvalues: eig.values, basis: ModeBasis::Dense(eig.vectors) })
    }

    /// `scale` times the unit-coefficient operator, in the sine basis.
    pub fn laplace(n: usize, scale: f64) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidInput(format!("need at least 2 grid points, got {n}")));
        }
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::InvalidInput(format!("Laplace scale {scale} must be positive")));
        }
        let eigenvalues = laplace_eigenvalues(n).into_iter().map(|l| scale * l).collect();
        Ok(Self { eigenvalues, basis: ModeBasis::Sine(SineTransform::new(n)) })
    }

    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    /// The basis as an explicit `n x n` matrix (columns are basis vectors).
    pub fn basis_matrix(&self) -> Mat<f64> {
        match &self.basis {
            ModeBasis::Dense(g) => g.clone(),
            ModeBasis::Sine(_) => {
                let n = self.len();
                let s = (2.0 / (n as f64 + 1.0)).sqrt();
                Mat::from_fn(n, n, |i, k| {
                    s * (std::f64::consts::PI * ((i + 1) * (k + 1)) as f64 / (n as f64 + 1.0)).sin()
                })
            }
        }
    }

    /// `B^T m` (into spectral coordinates).
    fn forward(&self, m: Mat<f64>) -> Mat<f64> {
        match &self.basis {
            ModeBasis::Dense(g) => mul(g.transpose(), m.as_ref()),
            ModeBasis::Sine(t) => sine_columns(t, m),
        }
    }

    /// `B m` (back to grid values).
    fn backward(&self, m: Mat<f64>) -> Mat<f64> {
        match &self.basis {
            ModeBasis::Dense(g) => mul(g.as_ref(), m.as_ref()),
            ModeBasis::Sine(t) => sine_columns(t, m),
        }
    }
}

fn sine_columns(t: &SineTransform, mut m: Mat<f64>) -> Mat<f64> {
    let mut buf: Vec<Complex<f64>> = Vec::new();
    for c in 0..m.ncols() {
        t.apply_with(m.col_as_slice_mut(c), &mut buf);
    }
    m
}

/// `F(A) = (⊗ B_l) diag(vec(D)) (⊗ B_l)^T` with `D` in canonical format.
#[derive(Clone, Debug)]
pub struct FactoredOperator {
    modes: Vec<Mode>,
    coefficients: CanonicalTensor,
}

impl FactoredOperator {
    pub fn new(modes: Vec<Mode>, coefficients: CanonicalTensor) -> Result<Self> {
        let shape: Vec<usize> = modes.iter().map(|m| m.len()).collect();
        if shape != coefficients.shape() {
            return Err(Error::Shape(format!("modes {shape:?} vs coefficient tensor {:?}", coefficients.shape())));
        }
        Ok(Self { modes, coefficients })
    }

    /// Compresses `f` on the eigenvalue sums of `modes` at tolerance `eps`.
    pub fn build(modes: Vec<Mode>, f: SpectralFunction, eps: f64, cap: usize) -> Result<Self> {
        let grid = CoefficientGrid::new(modes.iter().map(|m| m.eigenvalues.clone()).collect(), f)?;
        let coefficients = compress_coefficient_tensor(&grid, eps, cap)?;
        Self::new(modes, coefficients)
    }

    /// Operator with the all-ones coefficient tensor, the identity.
    pub fn identity(modes: Vec<Mode>) -> Result<Self> {
        let shape: Vec<usize> = modes.iter().map(|m| m.len()).collect();
        let coefficients = CanonicalTensor::ones(&shape)?;
        Self::new(modes, coefficients)
    }

    pub fn shape(&self) -> Vec<usize> {
        self.modes.iter().map(|m| m.len()).collect()
    }

    pub fn modes(&self) -> &[Mode] {
        &self.modes
    }

    pub fn coefficients(&self) -> &CanonicalTensor {
        &self.coefficients
    }

    pub fn rank(&self) -> usize {
        self.coefficients.rank()
    }

    /// Stored reals: the coefficient tensor plus the dense bases.
    pub fn storage(&self) -> usize {
        let bases: usize = self
            .modes
            .iter()
            .map(|m| match m.basis {
                ModeBasis::Dense(_) => m.len() * m.len(),
                ModeBasis::Sine(_) => 0,
            })
            .sum();
        self.coefficients.storage() + bases + self.modes.iter().map(|m| m.len()).sum::<usize>()
    }

    /// Factored matrix-vector product; the result has rank `R * S`, term
    /// `(k, j)` at position `k * S + j`.
    pub fn apply(&self, x: &CanonicalTensor) -> Result<CanonicalTensor> {
        if x.shape() != self.shape().as_slice() {
            return Err(Error::Shape(format!("operator {:?} applied to {:?}", self.shape(), x.shape())));
        }
        let (r, s) = (self.coefficients.rank(), x.rank());
        if r == 0 || s == 0 {
            return CanonicalTensor::zeros(x.shape());
        }
        let mut factors = Vec::with_capacity(self.modes.len());
        for (l, mode) in self.modes.iter().enumerate() {
            let xh = mode.forward(x.factor(l).to_owned());
            let u = self.coefficients.factor(l);
            let prod = Mat::from_fn(mode.len(), r * s, |i, c| u[(i, c / s)] * xh[(i, c % s)]);
            factors.push(mode.backward(prod));
        }
        let (wu, wx) = (self.coefficients.weights(), x.weights());
        let weights = (0..r * s).map(|c| wu[c / s] * wx[c % s]).collect();
        CanonicalTensor::new(x.shape(), weights, factors)
    }

    /// Explicit `N x N` matrix, `N = prod n_l`, row-major multi-index order.
    pub fn to_dense_matrix(&self) -> Result<Mat<f64>> {
        let shape = self.shape();
        let total: usize = shape.iter().product();
        if total > 20_000 {
            return Err(Error::DenseGuard { shape });
        }
        let b = kron_bases(&self.modes);
        let diag = self.coefficients.to_dense()?.into_vec();
        let scaled = Mat::from_fn(total, total, |i, k| b[(i, k)] * diag[k]);
        Ok(mul(scaled.as_ref(), b.transpose()))
    }
}

/// `B_1 ⊗ ... ⊗ B_d` as a dense matrix.
pub fn kron_bases(modes: &[Mode]) -> Mat<f64> {
    let mut out = Mat::from_fn(1, 1, |_, _| 1.0);
    for m in modes {
        let b = m.basis_matrix();
        let (p, n) = (out.nrows(), b.nrows());
        out = Mat::from_fn(p * n, p * n, |i, k| out[(i / n, k / n)] * b[(i % n, k % n)]);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor_formats::random_canonical;
    use rand::rngs::StdRng;
    use rand::SeedableRng;

    fn sl_modes(d: usize, n: usize) -> Vec<Mode> {
        let coefs = [Coefficient1D::A1, Coefficient1D::A2Modified, Coefficient1D::A3];
        (0..d).map(|l| Mode::sturm_liouville(&coefs[l], n, Boundary::DoubledEdge).unwrap()).collect()
    }

    #[test]
    fn ones_coefficient_is_identity() {
        let mut rng = StdRng::seed_from_u64(31);
        for modes in [sl_modes(3, 9), vec![Mode::laplace(9, 1.0).unwrap(); 3]] {
            let op = FactoredOperator::identity(modes).unwrap();
            let x = random_canonical(&mut rng, &[9, 9, 9], 2);
            let y = op.apply(&x).unwrap();
            assert!(y.to_dense().unwrap().max_abs_diff(&x.to_dense().unwrap()) < 1e-13);
        }
    }

    #[test]
    fn apply_matches_dense_kronecker() {
        let mut rng = StdRng::seed_from_u64(32);
        let modes = sl_modes(2, 16);
        let op =
            FactoredOperator::build(modes, SpectralFunction::lagrange(1.0, 1.0, 1.0).unwrap(), 1e-13, 100).unwrap();
        let dense = op.to_dense_matrix().unwrap();
        let x = random_canonical(&mut rng, &[16, 16], 2);
        let xv = x.to_dense().unwrap().into_vec();
        let yv = op.apply(&x).unwrap().to_dense().unwrap().into_vec();
        let expect: Vec<f64> = (0..256).map(|i| (0..256).map(|k| dense[(i, k)] * xv[k]).sum()).collect();
        let nrm = crate::linalg::norm2(&expect);
        let err: Vec<f64> = yv.iter().zip(&expect).map(|(a, b)| a - b).collect();
        assert!(crate::linalg::norm2(&err) < 1e-10 * nrm);
    }

    #[test]
    fn apply_is_symmetric() {
        let mut rng = StdRng::seed_from_u64(33);
        let op =
            FactoredOperator::build(sl_modes(3, 31), SpectralFunction::lagrange(0.5, 1.0, 1.0).unwrap(), 1e-6, 100)
                .unwrap();
        let x = random_canonical(&mut rng, &[31, 31, 31], 2);
        let y = random_canonical(&mut rng, &[31, 31, 31], 2);
        let a = op.apply(&x).unwrap().inner(&y).unwrap();
        let b = x.inner(&op.apply(&y).unwrap()).unwrap();
        assert!((a - b).abs() <= 1e-10 * a.abs().max(b.abs()));
    }

    #[test]
    fn sine_basis_diagonalizes_laplacian() {
        let n = 7;
        let m = Mode::laplace(n, 1.0).unwrap();
        let b = m.basis_matrix();
        let sl = SturmLiouville1D::assemble(&Coefficient1D::Unit, n, Boundary::DoubledEdge).unwrap();
        let a = sl.to_dense();
        let t = mul(mul(b.transpose(), a.as_ref()).as_ref(), b.as_ref());
        for i in 0..n {
            for j in 0..n {
                let e = if i == j { m.eigenvalues[i] } else { 0.0 };
                assert!((t[(i, j)] - e).abs() < 1e-9 * m.eigenvalues[n - 1]);
            }
        }
    }
}
