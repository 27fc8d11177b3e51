use faer::Mat;

use super::dense::{check_dense_shape, DenseTensor};
use super::tucker::{full_to_tucker, recompress_tucker, TuckerTensor};
use crate::linalg::{eps_rank, left_singular, mul_into, orthonormalize, row_major, row_major_mut};
use crate::{Error, Result};

/// Grid sizes at or below this are handled by a plain HOSVD.
pub const COARSEST_MAX: usize = 32;

/// Sweeps of subspace refinement per level.
pub const MAX_SWEEPS: usize = 5;

/// Extra columns carried through the refinement.
const PAD: usize = 3;

/// A tensor known only through its entries.
pub trait GridFunction {
    fn shape(&self) -> Vec<usize>;

    fn eval(&self, idx: &[usize]) -> f64;

    /// Row-major `rows x cols` block of the 3-way slice with first index `i0`.
    fn slice(&self, i0: usize, rows: &[usize], cols: &[usize], out: &mut [f64]) {
        for (a, &j) in rows.iter().enumerate() {
            for (b, &k) in cols.iter().enumerate() {
                out[a * cols.len() + b] = self.eval(&[i0, j, k]);
            }
        }
    }
}

/// Adapter turning a closure into a [`GridFunction`].
pub struct FnGrid<F> {
    shape: Vec<usize>,
    f: F,
}

impl<F: Fn(&[usize]) -> f64> FnGrid<F> {
    pub fn new(shape: &[usize], f: F) -> Self {
        Self { shape: shape.to_vec(), f }
    }
}

impl<F: Fn(&[usize]) -> f64> GridFunction for FnGrid<F> {
    fn shape(&self) -> Vec<usize> {
        self.shape.clone()
    }

    fn eval(&self, idx: &[usize]) -> f64 {
        (self.f)(idx)
    }
}

/// Grid sizes from coarse to fine, `n_{k-1} = (n_k - 1) / 2`, stopping at the
/// first size `<= COARSEST_MAX`. `None` when some mode has no such chain of
/// odd sizes, or when the levels of the modes disagree in number.
pub fn grid_hierarchy(shape: &[usize]) -> Option<Vec<Vec<usize>>> {
    let mut levels = vec![shape.to_vec()];
    loop {
        let cur = levels.last().unwrap();
        let done: Vec<bool> = cur.iter().map(|&n| n <= COARSEST_MAX).collect();
        if done.iter().all(|&b| b) {
            break;
        }
        if done.iter().any(|&b| b) || cur.iter().any(|&n| n % 2 == 0) {
            return None;
        }
        let next = cur.iter().map(|&n| (n - 1) / 2).collect();
        levels.push(next);
    }
    levels.reverse();
    Some(levels)
}

/// Fine-grid indices of the points of a level `k` halvings below the finest.
fn level_indices(n: usize, k: u32) -> Vec<usize> {
    (0..n).map(|i| ((i + 1) << k) - 1).collect()
}

/// Linear interpolation with zero boundary values onto `2n + 1` points.
fn prolongate(v: &Mat<f64>) -> Mat<f64> {
    let n = v.nrows();
    let coarse = |i: isize, c: usize| -> f64 {
        if i < 0 || i as usize >= n {
            0.0
        } else {
            v[(i as usize, c)]
        }
    };
    Mat::from_fn(2 * n + 1, v.ncols(), |j, c| {
        if j % 2 == 1 {
            v[((j - 1) / 2, c)]
        } else {
            let i = (j / 2) as isize;
            0.5 * (coarse(i - 1, c) + coarse(i, c))
        }
    })
}

fn sample_dense(f: &dyn GridFunction, idx: &[Vec<usize>]) -> Result<DenseTensor> {
    let shape: Vec<usize> = idx.iter().map(|v| v.len()).collect();
    let mut fine = vec![0usize; shape.len()];
    DenseTensor::from_fn(&shape, |i| {
        for (l, &il) in i.iter().enumerate() {
            fine[l] = idx[l][il];
        }
        f.eval(&fine)
    })
}

/// Multigrid Tucker approximation of a 3-way grid function.
///
/// HOSVD runs only on the coarsest grid. Each finer level starts from the
/// interpolated coarse factors and refines them by at most [`MAX_SWEEPS`]
/// simultaneous subspace updates that stream the tensor one mode-1 slice at a
/// time. Grids without a hierarchy fall back to a direct HOSVD.
pub fn multigrid_tucker(f: &dyn GridFunction, eps: f64) -> Result<TuckerTensor> {
    if !(eps > 0.0) {
        return Err(Error::InvalidInput(format!("tolerance {eps} must be positive")));
    }
    let shape = f.shape();
    let levels = match grid_hierarchy(&shape) {
        Some(l) if shape.len() == 3 && l.len() > 1 => l,
        _ => {
            check_dense_shape(&shape)?;
            let idx: Vec<Vec<usize>> = shape.iter().map(|&n| (0..n).collect()).collect();
            return full_to_tucker(&sample_dense(f, &idx)?, eps);
        }
    };
    let depth = (levels.len() - 1) as u32;
    let mode_tol = eps / 3f64.sqrt();

    let coarse_idx: Vec<Vec<usize>> = levels[0].iter().map(|&n| level_indices(n, depth)).collect();
    let coarse = sample_dense(f, &coarse_idx)?;
    if coarse.data().iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("grid function on coarse grid".into()));
    }
    let mut factors = Vec::with_capacity(3);
    for l in 0..3 {
        let (u, s) = left_singular(coarse.unfold(l).as_ref())?;
        let r = (eps_rank(&s, mode_tol).max(1) + PAD).min(u.ncols());
        factors.push(u.subcols(0, r).to_owned());
    }

    for (lev, sizes) in levels.iter().enumerate().skip(1) {
        let k = depth - lev as u32;
        let idx: Vec<Vec<usize>> = sizes.iter().map(|&n| level_indices(n, k)).collect();
        factors = factors
            .iter()
            .map(|v| {
                let p = prolongate(v);
                orthonormalize(p.as_ref())
            })
            .collect();
        let mut captured = 0.0;
        for _ in 0..MAX_SWEEPS {
            let w = side_products(f, &idx, &factors)?;
            let mut next = Vec::with_capacity(3);
            let mut energy = 0.0;
            for (l, wl) in w.iter().enumerate() {
                let (u, s) = left_singular(wl.as_ref())?;
                let r = (eps_rank(&s, mode_tol).max(1) + PAD).min(u.ncols()).min(sizes[l]);
                if l == 0 {
                    energy = s[..r].iter().map(|x| x * x).sum::<f64>();
                }
                next.push(u.subcols(0, r).to_owned());
            }
            factors = next;
            let change = (energy - captured).abs() / energy.max(f64::MIN_POSITIVE);
            captured = energy;
            if change <= 1e-2 * eps * eps {
                break;
            }
        }
    }

    let fine_idx: Vec<Vec<usize>> = shape.iter().map(|&n| (0..n).collect()).collect();
    let core = project_streaming(f, &fine_idx, &factors)?;
    let t = TuckerTensor::new(core, factors)?;
    recompress_tucker(&t, eps)
}

/// `W_l = A_(l) (⊗_{m != l} V_m)` for all three modes in one pass.
fn side_products(f: &dyn GridFunction, idx: &[Vec<usize>], v: &[Mat<f64>]) -> Result<Vec<Mat<f64>>> {
    let (n1, n2, n3) = (idx[0].len(), idx[1].len(), idx[2].len());
    let (p1, p2, p3) = (v[0].ncols(), v[1].ncols(), v[2].ncols());
    let mut w1 = Mat::<f64>::zeros(n1, p2 * p3);
    let mut w2 = vec![0.0; n2 * p1 * p3];
    let mut w3 = vec![0.0; n3 * p1 * p2];
    let mut slice = vec![0.0; n2 * n3];
    let mut sv3 = vec![0.0; n2 * p3];
    let mut stv2 = vec![0.0; n3 * p2];
    let mut t = vec![0.0; p2 * p3];
    for i in 0..n1 {
        f.slice(idx[0][i], &idx[1], &idx[2], &mut slice);
        if slice.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite(format!("grid function slice {i}")));
        }
        let s = row_major(&slice, n2, n3);
        mul_into(row_major_mut(&mut sv3, n2, p3), s, v[2].as_ref(), false);
        mul_into(row_major_mut(&mut stv2, n3, p2), s.transpose(), v[1].as_ref(), false);
        mul_into(row_major_mut(&mut t, p2, p3), v[1].transpose(), row_major(&sv3, n2, p3), false);
        for (c, x) in t.iter().enumerate() {
            w1[(i, c)] = *x;
        }
        for a in 0..p1 {
            let va = v[0][(i, a)];
            for j in 0..n2 {
                let dst = &mut w2[j * p1 * p3 + a * p3..j * p1 * p3 + (a + 1) * p3];
                for (d, s) in dst.iter_mut().zip(&sv3[j * p3..(j + 1) * p3]) {
                    *d += va * s;
                }
            }
            for k in 0..n3 {
                let dst = &mut w3[k * p1 * p2 + a * p2..k * p1 * p2 + (a + 1) * p2];
                for (d, s) in dst.iter_mut().zip(&stv2[k * p2..(k + 1) * p2]) {
                    *d += va * s;
                }
            }
        }
    }
    let w2 = row_major(&w2, n2, p1 * p3).to_owned();
    let w3 = row_major(&w3, n3, p1 * p2).to_owned();
    Ok(vec![w1, w2, w3])
}

/// Core `A x_1 V1^T x_2 V2^T x_3 V3^T`, streamed over mode-1 slices.
fn project_streaming(f: &dyn GridFunction, idx: &[Vec<usize>], v: &[Mat<f64>]) -> Result<DenseTensor> {
    let (n1, n2, n3) = (idx[0].len(), idx[1].len(), idx[2].len());
    let (p1, p2, p3) = (v[0].ncols(), v[1].ncols(), v[2].ncols());
    let mut core = DenseTensor::zeros(&[p1, p2, p3])?;
    let mut slice = vec![0.0; n2 * n3];
    let mut sv3 = vec![0.0; n2 * p3];
    let mut t = vec![0.0; p2 * p3];
    for i in 0..n1 {
        f.slice(idx[0][i], &idx[1], &idx[2], &mut slice);
        if slice.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite(format!("grid function slice {i}")));
        }
        let s = row_major(&slice, n2, n3);
        mul_into(row_major_mut(&mut sv3, n2, p3), s, v[2].as_ref(), false);
        mul_into(row_major_mut(&mut t, p2, p3), v[1].transpose(), row_major(&sv3, n2, p3), false);
        let data = core.data_mut();
        for a in 0..p1 {
            let va = v[0][(i, a)];
            for (d, x) in data[a * p2 * p3..(a + 1) * p2 * p3].iter_mut().zip(&t) {
                *d += va * x;
            }
        }
    }
    Ok(core)
}
