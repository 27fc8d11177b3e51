use faer::Mat;

use super::spectral::{sorted_sum, SpectralFunction};
use crate::linalg::{eps_rank, tail_ratio, thin_svd};
use crate::tensor_formats::{multigrid_tucker, tucker_to_canonical, CanonicalTensor, GridFunction};
use crate::{Error, Result};

/// Default largest rank of a compressed coefficient tensor.
pub const DEFAULT_RANK_CAP: usize = 100;

/// The tensor `d(i_1, ..., i_d) = f(lambda_{i_1} + ... + lambda_{i_d})`,
/// available entry by entry.
#[derive(Clone, Debug)]
pub struct CoefficientGrid {
    lambdas: Vec<Vec<f64>>,
    f: SpectralFunction,
}

impl CoefficientGrid {
    pub fn new(lambdas: Vec<Vec<f64>>, f: SpectralFunction) -> Result<Self> {
        if lambdas.is_empty() || lambdas.len() > 3 {
            return Err(Error::InvalidInput(format!("{} modes, expected 1 to 3", lambdas.len())));
        }
        for (l, v) in lambdas.iter().enumerate() {
            if v.is_empty() {
                return Err(Error::InvalidInput(format!("mode {l} has no eigenvalues")));
            }
            if let Some(x) = v.iter().find(|x| !(x.is_finite() && **x > 0.0)) {
                return Err(Error::InvalidInput(format!("mode {l} eigenvalue {x} is not positive")));
            }
        }
        Ok(Self { lambdas, f })
    }

    pub fn function(&self) -> SpectralFunction {
        self.f
    }

    pub fn lambdas(&self) -> &[Vec<f64>] {
        &self.lambdas
    }

    pub fn eigenvalue_sum(&self, idx: &[usize]) -> f64 {
        let mut v = [0.0; 3];
        let d = self.lambdas.len();
        for l in 0..d {
            v[l] = self.lambdas[l][idx[l]];
        }
        sorted_sum(&mut v[..d])
    }

    pub fn entry(&self, idx: &[usize]) -> f64 {
        self.f.eval(self.eigenvalue_sum(idx))
    }

    /// Smallest and largest eigenvalue sum.
    pub fn sum_range(&self) -> (f64, f64) {
        let lo = self.lambdas.iter().map(|v| v.iter().copied().fold(f64::INFINITY, f64::min)).sum();
        let hi = self.lambdas.iter().map(|v| v.iter().copied().fold(f64::NEG_INFINITY, f64::max)).sum();
        (lo, hi)
    }

    fn matrix_2d(&self) -> Mat<f64> {
        Mat::from_fn(self.lambdas[0].len(), self.lambdas[1].len(), |i, j| self.entry(&[i, j]))
    }
}

impl GridFunction for CoefficientGrid {
    fn shape(&self) -> Vec<usize> {
        self.lambdas.iter().map(|v| v.len()).collect()
    }

    fn eval(&self, idx: &[usize]) -> f64 {
        self.entry(idx)
    }
}

/// Singular values of the 2D coefficient matrix `[f(lambda_i + mu_j)]`.
pub fn coefficient_singular_values(grid: &CoefficientGrid) -> Result<Vec<f64>> {
    if grid.lambdas.len() != 2 {
        return Err(Error::InvalidInput("singular values need a 2D coefficient grid".into()));
    }
    Ok(thin_svd(grid.matrix_2d().as_ref())?.s)
}

/// Low-rank canonical approximation of the coefficient tensor.
///
/// 2D: truncated SVD of the coefficient matrix. 3D: multigrid Tucker followed
/// by Tucker-to-canonical. `eps` is relative to the Frobenius norm. Fails with
/// [`Error::RankCap`] when more than `cap` terms would be needed.
pub fn compress_coefficient_tensor(grid: &CoefficientGrid, eps: f64, cap: usize) -> Result<CanonicalTensor> {
    let (t, needed, achieved) = compress_inner(grid, eps, cap)?;
    if needed > cap {
        return Err(Error::RankCap { rank: needed, cap, achieved });
    }
    Ok(t)
}

/// Like [`compress_coefficient_tensor`] but returns the best `cap`-term
/// approximation instead of failing. The flag reports whether the cap bit.
pub fn compress_coefficient_tensor_capped(
    grid: &CoefficientGrid,
    eps: f64,
    cap: usize,
) -> Result<(CanonicalTensor, bool)> {
    let (t, needed, _) = compress_inner(grid, eps, cap)?;
    Ok((t, needed > cap))
}

/// Returns the (possibly capped) tensor, the rank the tolerance asks for and
/// the relative error estimate of the capped tensor.
fn compress_inner(grid: &CoefficientGrid, eps: f64, cap: usize) -> Result<(CanonicalTensor, usize, f64)> {
    if !(eps > 0.0) {
        return Err(Error::InvalidInput(format!("tolerance {eps} must be positive")));
    }
    if cap == 0 {
        return Err(Error::InvalidInput("rank cap must be at least 1".into()));
    }
    let shape = GridFunction::shape(grid);
    match shape.len() {
        1 => {
            let v: Vec<f64> = (0..shape[0]).map(|i| grid.entry(&[i])).collect();
            Ok((CanonicalTensor::rank_one(1.0, &[v])?, 1, 0.0))
        }
        2 => {
            let svd = thin_svd(grid.matrix_2d().as_ref())?;
            let needed = eps_rank(&svd.s, eps);
            let r = needed.min(cap);
            let achieved = tail_ratio(&svd.s, r);
            let t = CanonicalTensor::new(
                &shape,
                svd.s[..r].to_vec(),
                vec![svd.u.subcols(0, r).to_owned(), svd.v.subcols(0, r).to_owned()],
            )?;
            Ok((t, needed, achieved))
        }
        _ if grid.f == (SpectralFunction::Power { alpha: 1.0 }) => {
            // the eigenvalue sum itself has the exact rank-d form
            let d = shape.len();
            let mut t = CanonicalTensor::zeros(&shape)?;
            for l in 0..d {
                let vs: Vec<Vec<f64>> =
                    (0..d).map(|k| if k == l { grid.lambdas[l].clone() } else { vec![1.0; shape[k]] }).collect();
                t = t.add(&CanonicalTensor::rank_one(1.0, &vs)?)?;
            }
            Ok((t, d, 0.0))
        }
        _ => {
            let tucker = multigrid_tucker(grid, eps)?;
            let full = tucker_to_canonical(&tucker, eps)?;
            let needed = full.rank();
            if needed <= cap {
                return Ok((full, needed, eps));
            }
            let capped = full.select_terms(&(0..cap).collect::<Vec<_>>());
            let achieved = capped.axpy(-1.0, &full)?.norm() / full.norm();
            Ok((capped, needed, achieved))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discretization::laplace_eigenvalues;

    fn unit_grid(d: usize, n: usize, f: SpectralFunction) -> CoefficientGrid {
        CoefficientGrid::new(vec![laplace_eigenvalues(n); d], f).unwrap()
    }

    #[test]
    fn entry_is_function_of_sum() {
        let g = unit_grid(3, 3, SpectralFunction::lagrange(1.0, 1.0, 1.0).unwrap());
        assert!((g.entry(&[0, 0, 0]) - 28.153_318).abs() < 1e-5);
        let one = CoefficientGrid::new(vec![vec![0.5], vec![0.5]], SpectralFunction::lagrange(0.3, 1.0, 1.0).unwrap())
            .unwrap();
        assert!((one.entry(&[0, 0]) - 2.0).abs() < 1e-15);
    }

    #[test]
    fn linear_function_has_rank_d() {
        let f = SpectralFunction::power(1.0).unwrap();
        let t2 = compress_coefficient_tensor(&unit_grid(2, 20, f), 1e-10, 100).unwrap();
        assert_eq!(t2.rank(), 2);
        let t3 = compress_coefficient_tensor(&unit_grid(3, 15, f), 1e-10, 100).unwrap();
        assert_eq!(t3.rank(), 3);
    }

    #[test]
    fn rank_monotone_in_tolerance_and_cap_error() {
        let g = unit_grid(2, 63, SpectralFunction::lagrange(0.5, 1.0, 1.0).unwrap());
        let loose = compress_coefficient_tensor(&g, 1e-3, 100).unwrap().rank();
        let tight = compress_coefficient_tensor(&g, 1e-6, 100).unwrap().rank();
        assert!(loose <= tight);
        assert!(matches!(compress_coefficient_tensor(&g, 1e-12, 2), Err(Error::RankCap { cap: 2, .. })));
        let (t, capped) = compress_coefficient_tensor_capped(&g, 1e-12, 2).unwrap();
        assert_eq!(t.rank(), 2);
        assert!(capped);
    }
}
