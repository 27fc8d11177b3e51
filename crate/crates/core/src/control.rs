//! The discrete tracking-type control problem
//! `min 1/2 |y - y_Omega|^2 + gamma/2 |u|^2` subject to `A^alpha y = beta u`,
//! reduced to the Lagrange equation
//! `(beta A^-alpha + gamma/beta A^alpha) u = y_Omega` and solved in low-rank
//! format, plus a dense spectral oracle for small grids.

use std::str::FromStr;
use std::time::Instant;

use faer::Mat;

use crate::discretization::{Boundary, Coefficient1D, SturmLiouville1D};
use crate::linalg::{mul, sym_eigen};
use crate::operator_algebra::{compress_coefficient_tensor, CoefficientGrid, FactoredOperator, Mode, SpectralFunction};
use crate::pcg::{pcg_solve, PcgConfig, SolveReport};
use crate::preconditioner::{
    build_aniso_laplace_preconditioner, build_direct_inverse_preconditioner, AnisotropyCoefficients,
    DEFAULT_PRECOND_EPS, DEFAULT_PRECOND_RANK,
};
use crate::tensor_formats::{truncate, CanonicalTensor, DenseTensor};
use crate::{Error, Result};

/// Rank cap of the forward and state operators' coefficient tensors.
pub const OPERATOR_RANK_CAP: usize = 400;
/// Largest problem the dense oracle accepts.
pub const ORACLE_LIMIT: usize = 200_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DesignKind {
    Box,
    H,
}

impl FromStr for DesignKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "box" => Ok(Self::Box),
            "h" | "H" | "h_type" => Ok(Self::H),
            _ => Err(Error::InvalidInput(format!("unknown design '{s}' (expected box or h)"))),
        }
    }
}

/// Interval bounds of the built-in designs.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DesignGeometry {
    pub box_interval: (f64, f64),
    /// The two vertical bars of the H in `x1`.
    pub h_left: (f64, f64),
    pub h_right: (f64, f64),
    /// Extent of the bars in `x2`.
    pub h_height: (f64, f64),
    /// Extent of the crossbar in `x2`; in `x1` it fills the gap between bars.
    pub h_cross: (f64, f64),
    /// Extent in `x3` of both designs in 3D.
    pub extrude: (f64, f64),
}

impl Default for DesignGeometry {
    fn default() -> Self {
        Self {
            box_interval: (0.25, 0.75),
            h_left: (0.2, 0.35),
            h_right: (0.65, 0.8),
            h_height: (0.2, 0.8),
            h_cross: (0.425, 0.575),
            extrude: (0.25, 0.75),
        }
    }
}

fn grid_point(i: usize, n: usize) -> f64 {
    (i as f64 + 1.0) / (n as f64 + 1.0)
}

fn indicator(n: usize, inside: impl Fn(f64) -> bool) -> Vec<f64> {
    (0..n).map(|i| if inside(grid_point(i, n)) { 1.0 } else { 0.0 }).collect()
}

fn closed(iv: (f64, f64)) -> impl Fn(f64) -> bool {
    move |x| x >= iv.0 && x <= iv.1
}

/// Design function on the interior grid. Box: rank 1. H: rank 2 with
/// disjoint supports, so all entries are 0 or 1.
pub fn make_design(kind: DesignKind, shape: &[usize], geom: &DesignGeometry) -> Result<CanonicalTensor> {
    if !(2..=3).contains(&shape.len()) {
        return Err(Error::InvalidInput(format!("designs are 2D or 3D, got shape {shape:?}")));
    }
    if shape.iter().any(|&n| n == 0) {
        return Err(Error::InvalidInput(format!("empty grid {shape:?}")));
    }
    let extruded = |mut vs: Vec<Vec<f64>>| {
        if shape.len() == 3 {
            vs.push(indicator(shape[2], closed(geom.extrude)));
        }
        vs
    };
    match kind {
        DesignKind::Box => {
            let vs: Vec<Vec<f64>> = shape[..2].iter().map(|&n| indicator(n, closed(geom.box_interval))).collect();
            CanonicalTensor::rank_one(1.0, &extruded(vs))
        }
        DesignKind::H => {
            let (l, r) = (closed(geom.h_left), closed(geom.h_right));
            let bars = indicator(shape[0], |x| l(x) || r(x));
            let gap = indicator(shape[0], |x| x > geom.h_left.1 && x < geom.h_right.0);
            let first =
                CanonicalTensor::rank_one(1.0, &extruded(vec![bars, indicator(shape[1], closed(geom.h_height))]))?;
            let second =
                CanonicalTensor::rank_one(1.0, &extruded(vec![gap, indicator(shape[1], closed(geom.h_cross))]))?;
            first.add(&second)
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PrecondKind {
    /// Case (A) with `b0 = 1`, the isotropic Laplacian.
    Laplace,
    /// Case (A) with `b0 = (max a + min a) / 2` per mode.
    Aniso,
    /// Case (B), the direct low-rank inverse.
    Direct,
}

impl PrecondKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Laplace => "laplace",
            Self::Aniso => "aniso",
            Self::Direct => "direct",
        }
    }
}

impl FromStr for PrecondKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "laplace" => Ok(Self::Laplace),
            "aniso" => Ok(Self::Aniso),
            "direct" => Ok(Self::Direct),
            _ => Err(Error::InvalidInput(format!("unknown preconditioner '{s}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PrecondSpec {
    pub kind: PrecondKind,
    pub rank: usize,
    pub eps: f64,
}

impl PrecondSpec {
    pub fn new(kind: PrecondKind) -> Self {
        Self { kind, rank: DEFAULT_PRECOND_RANK, eps: DEFAULT_PRECOND_EPS }
    }
}

/// Default operator compression tolerance: the forward operator must be
/// accurate well below the solver tolerance in every spectral component.
pub fn default_op_eps(d: usize) -> f64 {
    if d == 2 {
        1e-12
    } else {
        1e-8
    }
}

#[derive(Clone, Debug)]
pub struct ControlProblem {
    pub n: Vec<usize>,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub coefficients: Vec<Coefficient1D>,
    pub boundary: Boundary,
    pub design: CanonicalTensor,
    pub precond: PrecondSpec,
    /// Compression tolerance of the forward and state operators.
    pub op_eps: f64,
    pub pcg: PcgConfig,
}

impl ControlProblem {
    /// The reference setting: `a1, a2(, a3)`, `beta = gamma = 1`, direct
    /// preconditioner in 2D and the isotropic Laplacian in 3D.
    pub fn reference(d: usize, n: usize, alpha: f64, design: DesignKind) -> Result<Self> {
        if !(2..=3).contains(&d) {
            return Err(Error::InvalidInput(format!("dimension {d} not in {{2, 3}}")));
        }
        let coefficients = [Coefficient1D::A1, Coefficient1D::A2, Coefficient1D::A3][..d].to_vec();
        let shape = vec![n; d];
        Ok(Self {
            design: make_design(design, &shape, &DesignGeometry::default())?,
            n: shape,
            alpha,
            beta: 1.0,
            gamma: 1.0,
            coefficients,
            boundary: Boundary::DoubledEdge,
            precond: PrecondSpec::new(if d == 2 { PrecondKind::Direct } else { PrecondKind::Laplace }),
            op_eps: default_op_eps(d),
            pcg: PcgConfig::default(),
        })
    }

    pub fn dim(&self) -> usize {
        self.n.len()
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dim();
        if !(2..=3).contains(&d) {
            return Err(Error::InvalidInput(format!("dimension {d} not in {{2, 3}}")));
        }
        if let Some(n) = self.n.iter().find(|&&n| n < 2) {
            return Err(Error::InvalidInput(format!("grid size {n} must be at least 2")));
        }
        if self.coefficients.len() != d {
            return Err(Error::InvalidInput(format!("{} coefficients for {d} modes", self.coefficients.len())));
        }
        if self.design.shape() != self.n.as_slice() {
            return Err(Error::Shape(format!("design {:?} vs grid {:?}", self.design.shape(), self.n)));
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::InvalidInput(format!("alpha = {} outside (0, 1]", self.alpha)));
        }
        for (name, v) in [("beta", self.beta), ("gamma", self.gamma), ("operator tolerance", self.op_eps)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidInput(format!("{name} = {v} must be positive")));
            }
        }
        if self.precond.rank == 0 || !(self.precond.eps > 0.0) {
            return Err(Error::InvalidInput("preconditioner rank and tolerance must be positive".into()));
        }
        self.pcg.validate()
    }

    /// Builds every operator of the solve.
    pub fn assemble(&self) -> Result<Assembly> {
        self.validate()?;
        let start = Instant::now();
        let ops = self
            .n
            .iter()
            .zip(&self.coefficients)
            .map(|(&n, c)| SturmLiouville1D::assemble(c, n, self.boundary))
            .collect::<Result<Vec<_>>>()?;
        let modes = self
            .n
            .iter()
            .zip(&self.coefficients)
            .map(|(&n, c)| Mode::sturm_liouville(c, n, self.boundary))
            .collect::<Result<Vec<_>>>()?;
        let fitted = AnisotropyCoefficients::from_operators(&ops)?;
        let f2 = SpectralFunction::lagrange(self.alpha, self.beta, self.gamma)?;
        let forward = FactoredOperator::build(modes.clone(), f2, self.op_eps, OPERATOR_RANK_CAP)?;
        let (a, b, g, pe, pr) = (self.alpha, self.beta, self.gamma, self.precond.eps, self.precond.rank);
        let (precond, aniso) = match self.precond.kind {
            PrecondKind::Laplace => {
                let c = AnisotropyCoefficients::with_constants(vec![1.0; self.dim()], &ops)?;
                (build_aniso_laplace_preconditioner(&self.n, &c, a, b, g, pe, pr)?, c)
            }
            PrecondKind::Aniso => (build_aniso_laplace_preconditioner(&self.n, &fitted, a, b, g, pe, pr)?, fitted),
            PrecondKind::Direct => (build_direct_inverse_preconditioner(modes.clone(), a, b, g, pe, pr)?, fitted),
        };
        Ok(Assembly {
            modes,
            aniso,
            forward,
            precond: precond.operator,
            precond_capped: precond.capped,
            seconds: start.elapsed().as_secs_f64(),
        })
    }
}

/// Operators of one problem, reusable for the state solve.
#[derive(Clone, Debug)]
pub struct Assembly {
    pub modes: Vec<Mode>,
    /// Scaling constants and `q` of the preconditioner's Laplacian against the
    /// actual coefficients (fitted constants for the direct preconditioner).
    pub aniso: AnisotropyCoefficients,
    pub forward: FactoredOperator,
    pub precond: FactoredOperator,
    pub precond_capped: bool,
    pub seconds: f64,
}

impl Assembly {
    /// `y = beta A^-alpha u`, truncated at `eps`.
    pub fn state(&self, p: &ControlProblem, u: &CanonicalTensor) -> Result<CanonicalTensor> {
        if u.shape() != p.n.as_slice() {
            return Err(Error::Shape(format!("control {:?} vs grid {:?}", u.shape(), p.n)));
        }
        let f = SpectralFunction::inverse_power(p.alpha, p.beta)?;
        let grid = CoefficientGrid::new(self.modes.iter().map(|m| m.eigenvalues.clone()).collect(), f)?;
        let coefficients = compress_coefficient_tensor(&grid, p.op_eps, OPERATOR_RANK_CAP)?;
        let op = FactoredOperator::new(self.modes.clone(), coefficients)?;
        let y = op.apply(u)?;
        if p.pcg.eps > 0.0 {
            truncate(&y, p.pcg.eps)
        } else {
            Ok(y)
        }
    }
}

#[derive(Clone, Debug)]
pub struct ControlSolution {
    pub assembly: Assembly,
    pub report: SolveReport,
    pub solve_seconds: f64,
}

impl ControlSolution {
    pub fn control(&self) -> &CanonicalTensor {
        &self.report.solution
    }
}

/// Solves the Lagrange equation for the control.
pub fn solve_control(p: &ControlProblem) -> Result<ControlSolution> {
    let assembly = p.assemble()?;
    let start = Instant::now();
    let x0 = CanonicalTensor::zeros(&p.n)?;
    let report = pcg_solve(&assembly.forward, &assembly.precond, &p.design, &x0, &p.pcg)?;
    Ok(ControlSolution { assembly, report, solve_seconds: start.elapsed().as_secs_f64() })
}

/// The state for a given control, `y = beta A^-alpha u`.
pub fn solve_state(p: &ControlProblem, u: &CanonicalTensor) -> Result<CanonicalTensor> {
    let modes =
        p.n.iter()
            .zip(&p.coefficients)
            .map(|(&n, c)| Mode::sturm_liouville(c, n, p.boundary))
            .collect::<Result<Vec<_>>>()?;
    let f = SpectralFunction::inverse_power(p.alpha, p.beta)?;
    let grid = CoefficientGrid::new(modes.iter().map(|m| m.eigenvalues.clone()).collect(), f)?;
    let op = FactoredOperator::new(modes, compress_coefficient_tensor(&grid, p.op_eps, OPERATOR_RANK_CAP)?)?;
    let y = op.apply(u)?;
    if p.pcg.eps > 0.0 {
        truncate(&y, p.pcg.eps)
    } else {
        Ok(y)
    }
}

/// Dense control, state and adjoint of the oracle.
#[derive(Clone, Debug)]
pub struct DenseSolution {
    pub u: DenseTensor,
    pub y: DenseTensor,
    pub p: DenseTensor,
}

/// Exact discrete solution through the per-mode eigendecompositions:
/// `u = G diag(1 / f2) G^T y_Omega` with `G` the Kronecker product of the
/// eigenbases, then `y = beta A^-alpha u` and `p = gamma u / beta`.
pub fn dense_oracle_solve(p: &ControlProblem) -> Result<DenseSolution> {
    p.validate()?;
    let total: usize = p.n.iter().product();
    if total > ORACLE_LIMIT {
        return Err(Error::DenseGuard { shape: p.n.clone() });
    }
    let eig =
        p.n.iter()
            .zip(&p.coefficients)
            .map(|(&n, c)| SturmLiouville1D::assemble(c, n, p.boundary)?.eigen())
            .collect::<Result<Vec<_>>>()?;
    let lambdas: Vec<Vec<f64>> = eig.iter().map(|e| e.values.clone()).collect();
    let lagrange = CoefficientGrid::new(lambdas.clone(), SpectralFunction::lagrange(p.alpha, p.beta, p.gamma)?)?;
    let inverse = CoefficientGrid::new(lambdas, SpectralFunction::inverse_power(p.alpha, p.beta)?)?;
    let design = p.design.to_dense()?;
    let mut yh = design;
    for (l, e) in eig.iter().enumerate() {
        yh = yh.mode_product(l, e.vectors.transpose())?;
    }
    let shape = p.n.clone();
    let uh = DenseTensor::from_fn(&shape, |idx| yh.get(idx) / lagrange.entry(idx))?;
    let sh = DenseTensor::from_fn(&shape, |idx| uh.get(idx) * inverse.entry(idx))?;
    let (mut u, mut y) = (uh, sh);
    for (l, e) in eig.iter().enumerate() {
        u = u.mode_product(l, e.vectors.as_ref())?;
        y = y.mode_product(l, e.vectors.as_ref())?;
    }
    let scale = p.gamma / p.beta;
    let adj = DenseTensor::from_vec(&shape, u.data().iter().map(|v| scale * v).collect())?;
    Ok(DenseSolution { u, y, p: adj })
}

/// Dense `A^alpha` of the full operator, assembled as the Kronecker sum of
/// the tridiagonal matrices and raised to the power by a dense symmetric
/// eigensolve (independent of the tridiagonal solver).
pub fn dense_fractional_operator(p: &ControlProblem, power: f64) -> Result<Mat<f64>> {
    let total: usize = p.n.iter().product();
    if total > 5_000 {
        return Err(Error::DenseGuard { shape: p.n.clone() });
    }
    let ops =
        p.n.iter()
            .zip(&p.coefficients)
            .map(|(&n, c)| SturmLiouville1D::assemble(c, n, p.boundary))
            .collect::<Result<Vec<_>>>()?;
    let mut a = Mat::<f64>::zeros(total, total);
    for (l, op) in ops.iter().enumerate() {
        let m = op.to_dense();
        let before: usize = p.n[..l].iter().product();
        let after: usize = p.n[l + 1..].iter().product();
        let n = p.n[l];
        for i in 0..total {
            let (hi, rest) = (i / (n * after), i % (n * after));
            let (ii, lo) = (rest / after, rest % after);
            debug_assert!(hi < before);
            for jj in 0..n {
                let v = m[(ii, jj)];
                if v != 0.0 {
                    a[(i, hi * n * after + jj * after + lo)] += v;
                }
            }
        }
    }
    let (vals, vecs) = sym_eigen(a.as_ref())?;
    if vals[0] <= 0.0 {
        return Err(Error::Indefinite(format!("smallest eigenvalue {:.3e}", vals[0])));
    }
    let scaled = Mat::from_fn(total, total, |i, k| vecs[(i, k)] * vals[k].powf(power));
    Ok(mul(scaled.as_ref(), vecs.transpose()))
}

/// Relative residuals of the three optimality equations
/// `y + A^alpha p = y_Omega`, `gamma u - beta p = 0`, `A^alpha y - beta u = 0`,
/// each scaled by the norm of its largest term.
pub fn kkt_residuals(prob: &ControlProblem, y: &DenseTensor, u: &DenseTensor, p: &DenseTensor) -> Result<[f64; 3]> {
    let a = dense_fractional_operator(prob, prob.alpha)?;
    let yo = prob.design.to_dense()?;
    let matvec =
        |v: &[f64]| -> Vec<f64> { (0..v.len()).map(|i| (0..v.len()).map(|k| a[(i, k)] * v[k]).sum()).collect() };
    let ap = matvec(p.data());
    let ay = matvec(y.data());
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let r1: Vec<f64> = (0..ap.len()).map(|i| y.data()[i] + ap[i] - yo.data()[i]).collect();
    let r2: Vec<f64> = (0..ap.len()).map(|i| prob.gamma * u.data()[i] - prob.beta * p.data()[i]).collect();
    let r3: Vec<f64> = (0..ap.len()).map(|i| ay[i] - prob.beta * u.data()[i]).collect();
    let s1 = norm(y.data()).max(norm(&ap)).max(norm(yo.data()));
    let s2 = (prob.gamma * norm(u.data())).max(prob.beta * norm(p.data()));
    let s3 = norm(&ay).max(prob.beta * norm(u.data()));
    let rel = |r: &[f64], s: f64| if s > 0.0 { norm(r) / s } else { norm(r) };
    Ok([rel(&r1, s1), rel(&r2, s2), rel(&r3, s3)])
}

/// `J(y, u) = 1/2 |y - y_Omega|^2 + gamma/2 |u|^2` in canonical format.
pub fn cost_functional(y: &CanonicalTensor, u: &CanonicalTensor, design: &CanonicalTensor, gamma: f64) -> Result<f64> {
    let misfit = y.axpy(-1.0, design)?;
    let m2 = y.inner(y)? - 2.0 * y.inner(design)? + design.inner(design)?;
    let m2 = if m2 > 0.0 { m2 } else { misfit.norm().powi(2) };
    Ok(0.5 * m2 + 0.5 * gamma * u.inner(u)?)
}

/// The cost functional of dense vectors.
pub fn cost_functional_dense(y: &DenseTensor, u: &DenseTensor, design: &DenseTensor, gamma: f64) -> f64 {
    let misfit: f64 = y.data().iter().zip(design.data()).map(|(a, b)| (a - b) * (a - b)).sum();
    let u2: f64 = u.data().iter().map(|v| v * v).sum();
    0.5 * misfit + 0.5 * gamma * u2
}
