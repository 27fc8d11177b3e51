use faer::Mat;

use super::coefficient::{midpoint_samples, Coefficient1D};
use crate::{Error, Result};

/// Treatment of the first and last diagonal entries.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Boundary {
    /// `2 a_{3/2}` and `2 a_{n-1/2}`.
    #[default]
    DoubledEdge,
    /// `a_{1/2} + a_{3/2}` and `a_{n-1/2} + a_{n+1/2}`.
    Standard,
}

impl std::str::FromStr for Boundary {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper" | "doubled" => Ok(Self::DoubledEdge),
            "standard" => Ok(Self::Standard),
            _ => Err(Error::InvalidInput(format!("unknown boundary rule `{s}`"))),
        }
    }
}

/// Finite-difference discretization of `-(a u')'` on `n` interior points of
/// `(0, 1)` with homogeneous Dirichlet values, as a symmetric tridiagonal
/// matrix `(1/h^2) tridiag(-a_{i-1/2}, d_i, -a_{i+1/2})`.
#[derive(Clone, Debug)]
pub struct SturmLiouville1D {
    pub n: usize,
    pub h: f64,
    /// Diagonal, length `n`.
    pub diag: Vec<f64>,
    /// Sub/super diagonal, length `n - 1`.
    pub off: Vec<f64>,
    /// Coefficient at the `n + 1` midpoints.
    pub midpoints: Vec<f64>,
}

/// Eigen-decomposition `A = G diag(values) G^T`, values ascending, column `i`
/// of `vectors` the eigenvector of `values[i]`.
#[derive(Clone, Debug)]
pub struct Eigen1D {
    pub values: Vec<f64>,
    pub vectors: Mat<f64>,
}

impl SturmLiouville1D {
    pub fn assemble(coef: &Coefficient1D, n: usize, boundary: Boundary) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidInput(format!("need at least 2 grid points, got {n}")));
        }
        let h = 1.0 / (n as f64 + 1.0);
        let m = midpoint_samples(coef, n);
        if let Some(i) = m.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("coefficient at midpoint {}", i as f64 + 0.5)));
        }
        let s = 1.0 / (h * h);
        // m[i] = a_{i+1/2} in 0-based point numbering, so row i couples m[i] and m[i+1]
        let mut diag: Vec<f64> = (0..n).map(|i| s * (m[i] + m[i + 1])).collect();
        if boundary == Boundary::DoubledEdge {
            diag[0] = s * 2.0 * m[1];
            diag[n - 1] = s * 2.0 * m[n - 1];
        }
        let off = (0..n - 1).map(|i| -s * m[i + 1]).collect();
        Ok(Self { n, h, diag, off, midpoints: m })
    }

    pub fn to_dense(&self) -> Mat<f64> {
        Mat::from_fn(self.n, self.n, |i, j| {
            if i == j {
                self.diag[i]
            } else if i + 1 == j {
                self.off[i]
            } else if j + 1 == i {
                self.off[j]
            } else {
                0.0
            }
        })
    }

    pub fn coefficient_range(&self) -> (f64, f64) {
        let lo = self.midpoints.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = self.midpoints.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (lo, hi)
    }

    pub fn eigen(&self) -> Result<Eigen1D> {
        eig_sym_tridiag(&self.diag, &self.off)
    }
}

/// Implicit-shift QL iteration for a symmetric tridiagonal matrix with
/// accumulation of the eigenvectors. At most `30 n` sweeps in total.
pub fn eig_sym_tridiag(diag: &[f64], off: &[f64]) -> Result<Eigen1D> {
    let n = diag.len();
    if off.len() + 1 != n && !(n == 0 && off.is_empty()) {
        return Err(Error::Shape(format!("tridiagonal with {n} diagonal and {} off entries", off.len())));
    }
    if diag.iter().chain(off).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("tridiagonal matrix".into()));
    }
    let mut d = diag.to_vec();
    let mut e = off.to_vec();
    e.push(0.0);
    // row i of zt is the i-th eigenvector, so a rotation touches two
    // contiguous rows
    let mut zt = vec![0.0; n * n];
    for i in 0..n {
        zt[i * n + i] = 1.0;
    }
    let cap = 30 * n.max(1);
    let mut sweeps = 0usize;
    for l in 0..n {
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            sweeps += 1;
            if sweeps > cap {
                return Err(Error::NoConvergence { what: "tridiagonal QL", index: l });
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let (mut s, mut c, mut p) = (1.0, 1.0, 0.0);
            let mut underflow = false;
            let mut i = m;
            while i > l {
                i -= 1;
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    underflow = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                let (lo, hi) = zt.split_at_mut((i + 1) * n);
                let zi = &mut lo[i * n..];
                let zi1 = &mut hi[..n];
                for (a, b) in zi.iter_mut().zip(zi1.iter_mut()) {
                    let f = *b;
                    *b = s * *a + c * f;
                    *a = c * *a - s * f;
                }
            }
            if underflow {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| d[a].total_cmp(&d[b]).then(a.cmp(&b)));
    let values = order.iter().map(|&k| d[k]).collect();
    let mut vectors = Mat::from_fn(n, n, |i, c| zt[order[c] * n + i]);
    // fix the sign so the largest component of each vector is positive
    for c in 0..n {
        let col = vectors.col_as_slice_mut(c);
        let big = col.iter().copied().fold(0.0f64, |m, v| if v.abs() > m.abs() { v } else { m });
        if big < 0.0 {
            col.iter_mut().for_each(|v| *v = -*v);
        }
    }
    Ok(Eigen1D { values, vectors })
}

/// Eigenvalues of the unit-coefficient operator, `(4/h^2) sin^2(pi k h / 2)`,
/// `k = 1..=n`, ascending.
pub fn laplace_eigenvalues(n: usize) -> Vec<f64> {
    let h = 1.0 / (n as f64 + 1.0);
    (1..=n)
        .map(|k| {
            let s = (std::f64::consts::PI * k as f64 * h / 2.0).sin();
            4.0 / (h * h) * s * s
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{mul, orthogonality_defect, sym_eigenvalues};

    #[test]
    fn unit_coefficient_is_laplacian() {
        let sl = SturmLiouville1D::assemble(&Coefficient1D::Unit, 3, Boundary::DoubledEdge).unwrap();
        assert_eq!(sl.diag, vec![32.0; 3]);
        assert_eq!(sl.off, vec![-16.0; 2]);
        let eig = sl.eigen().unwrap();
        let expect = [9.372583002030478, 32.0, 54.62741699796952];
        for (a, b) in eig.values.iter().zip(expect) {
            assert!((a - b).abs() < 1e-12);
        }
        let lap = laplace_eigenvalues(3);
        for (a, b) in eig.values.iter().zip(&lap) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn a3_off_diagonal_entry() {
        let sl = SturmLiouville1D::assemble(&Coefficient1D::A3, 4, Boundary::DoubledEdge).unwrap();
        let h: f64 = 0.2;
        let expect = -((5.0 * std::f64::consts::PI * 1.5 * h).cos() + 2.0) / (h * h);
        assert!((sl.off[0] - expect).abs() < 1e-12);
        let st = SturmLiouville1D::assemble(&Coefficient1D::A3, 4, Boundary::Standard).unwrap();
        assert!((st.diag[0] - (st.midpoints[0] + st.midpoints[1]) / (h * h)).abs() < 1e-10);
        assert!((sl.diag[0] - 2.0 * sl.midpoints[1] / (h * h)).abs() < 1e-10);
    }

    #[test]
    fn constant_scales_spectrum() {
        let a = SturmLiouville1D::assemble(&Coefficient1D::Constant(2.5), 10, Boundary::DoubledEdge).unwrap();
        let ev = a.eigen().unwrap().values;
        for (x, y) in ev.iter().zip(laplace_eigenvalues(10)) {
            assert!((x - 2.5 * y).abs() < 1e-9 * x);
        }
    }

    #[test]
    fn eigen_matches_dense_solver_and_reconstructs() {
        for coef in [Coefficient1D::A1, Coefficient1D::A2, Coefficient1D::A3] {
            let sl = SturmLiouville1D::assemble(&coef, 63, Boundary::DoubledEdge).unwrap();
            let eig = sl.eigen().unwrap();
            assert!(orthogonality_defect(eig.vectors.as_ref()) < 1e-10);
            let dense = sl.to_dense();
            let oracle = sym_eigenvalues(dense.as_ref()).unwrap();
            let top = eig.values[62];
            for (a, b) in eig.values.iter().zip(&oracle) {
                assert!((a - b).abs() < 1e-10 * top);
            }
            assert!(eig.values[0] > 0.0);
            let g = &eig.vectors;
            let scaled = Mat::from_fn(63, 63, |i, j| g[(i, j)] * eig.values[j]);
            let rec = mul(scaled.as_ref(), g.transpose());
            let mut worst = 0.0f64;
            for i in 0..63 {
                for j in 0..63 {
                    worst = worst.max((rec[(i, j)] - dense[(i, j)]).abs());
                }
            }
            assert!(worst <= 1e-8 * top);
        }
    }

    #[test]
    fn rejects_tiny_grids() {
        assert!(SturmLiouville1D::assemble(&Coefficient1D::Unit, 1, Boundary::DoubledEdge).is_err());
    }
}
