//! Thin helpers over `faer` for the dense kernels the tensor code needs:
//! SVD with an ε-rank cut, orthonormalization and row-major views.

use faer::linalg::matmul::matmul;
use faer::{Accum, Mat, MatMut, MatRef, Par};

use crate::{Error, Result};

/// Smallest rank `r` such that the discarded tail satisfies
/// `sqrt(sum_{k>=r} s_k^2) <= tol * sqrt(sum_k s_k^2)`.
///
/// `sigma` must be sorted in non-increasing order. Singular values equal to
/// the last kept one are kept as well.
pub fn eps_rank(sigma: &[f64], tol: f64) -> usize {
    let total: f64 = sigma.iter().map(|s| s * s).sum();
    if total == 0.0 {
        return 0;
    }
    let budget = tol * tol * total;
    let mut tail = 0.0;
    let mut r = sigma.len();
    // walk from the back while the accumulated tail stays inside the budget
    while r > 0 {
        let next = tail + sigma[r - 1] * sigma[r - 1];
        if next > budget {
            break;
        }
        tail = next;
        r -= 1;
    }
    while r > 0 && r < sigma.len() && sigma[r] == sigma[r - 1] {
        r += 1;
    }
    r
}

/// Relative tail `sqrt(sum_{k>=r} s_k^2) / sqrt(sum s_k^2)`.
pub fn tail_ratio(sigma: &[f64], r: usize) -> f64 {
    let total: f64 = sigma.iter().map(|s| s * s).sum();
    if total == 0.0 {
        return 0.0;
    }
    let tail: f64 = sigma[r.min(sigma.len())..].iter().map(|s| s * s).sum();
    (tail / total).sqrt()
}

/// Thin SVD `m = U diag(s) V^T` with `s` non-increasing.
pub struct ThinSvd {
    pub u: Mat<f64>,
    pub s: Vec<f64>,
    pub v: Mat<f64>,
}

pub fn thin_svd(m: MatRef<'_, f64>) -> Result<ThinSvd> {
    let k = m.nrows().min(m.ncols());
    if k == 0 {
        return Ok(ThinSvd { u: Mat::zeros(m.nrows(), 0), s: Vec::new(), v: Mat::zeros(m.ncols(), 0) });
    }
    if m.nrows() < m.ncols() {
        // faer is happiest with tall inputs
        let t = thin_svd(m.transpose())?;
        return Ok(ThinSvd { u: t.v, s: t.s, v: t.u });
    }
    let svd = m.thin_svd().map_err(|e| Error::Linalg(format!("svd: {e:?}")))?;
    let s = svd.S().column_vector().iter().copied().collect();
    Ok(ThinSvd { u: svd.U().to_owned(), s, v: svd.V().to_owned() })
}

/// Leading left singular vectors and all singular values.
pub fn left_singular(m: MatRef<'_, f64>) -> Result<(Mat<f64>, Vec<f64>)> {
    let svd = thin_svd(m)?;
    Ok((svd.u, svd.s))
}

/// `a * b` as a fresh matrix.
pub fn mul(a: MatRef<'_, f64>, b: MatRef<'_, f64>) -> Mat<f64> {
    let mut out = Mat::zeros(a.nrows(), b.ncols());
    matmul(out.as_mut(), Accum::Replace, a, b, 1.0, Par::Seq);
    out
}

/// `dst = a * b` (or `dst += a * b` with `accumulate`).
pub fn mul_into(dst: MatMut<'_, f64>, a: MatRef<'_, f64>, b: MatRef<'_, f64>, accumulate: bool) {
    let accum = if accumulate { Accum::Add } else { Accum::Replace };
    matmul(dst, accum, a, b, 1.0, Par::Seq);
}

/// Orthonormal basis of the column space (thin QR), same column count.
pub fn orthonormalize(m: MatRef<'_, f64>) -> Mat<f64> {
    if m.ncols() == 0 {
        return Mat::zeros(m.nrows(), 0);
    }
    m.qr().compute_thin_Q()
}

/// Symmetric eigen-decomposition, eigenvalues ascending.
pub fn sym_eigen(m: MatRef<'_, f64>) -> Result<(Vec<f64>, Mat<f64>)> {
    let evd = m.self_adjoint_eigen(faer::Side::Lower).map_err(|e| Error::Linalg(format!("eigen: {e:?}")))?;
    let vals = evd.S().column_vector().iter().copied().collect();
    Ok((vals, evd.U().to_owned()))
}

pub fn sym_eigenvalues(m: MatRef<'_, f64>) -> Result<Vec<f64>> {
    m.self_adjoint_eigenvalues(faer::Side::Lower).map_err(|e| Error::Linalg(format!("eigen: {e:?}")))
}

/// Max-norm of `q^T q - I`.
pub fn orthogonality_defect(q: MatRef<'_, f64>) -> f64 {
    let g = mul(q.transpose(), q);
    let mut worst = 0.0f64;
    for j in 0..g.ncols() {
        for i in 0..g.nrows() {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((g[(i, j)] - target).abs());
        }
    }
    worst
}

pub fn row_major(data: &[f64], nrows: usize, ncols: usize) -> MatRef<'_, f64> {
    MatRef::from_row_major_slice(data, nrows, ncols)
}

pub fn row_major_mut(data: &mut [f64], nrows: usize, ncols: usize) -> MatMut<'_, f64> {
    MatMut::from_row_major_slice_mut(data, nrows, ncols)
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
