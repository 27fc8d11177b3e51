//! Preconditioned conjugate gradients with every iterate kept in canonical
//! format and recompressed after each rank-increasing step.

use std::io::Write;
use std::time::Instant;

use crate::operator_algebra::FactoredOperator;
use crate::tensor_formats::{truncate_capped, CanonicalTensor};
use crate::{Error, Result};

/// Symmetric linear map on canonical tensors.
pub trait LinearOperator {
    fn apply(&self, x: &CanonicalTensor) -> Result<CanonicalTensor>;
}

impl LinearOperator for FactoredOperator {
    fn apply(&self, x: &CanonicalTensor) -> Result<CanonicalTensor> {
        FactoredOperator::apply(self, x)
    }
}

/// The identity map.
#[derive(Clone, Copy, Debug, Default)]
pub struct Identity;

impl LinearOperator for Identity {
    fn apply(&self, x: &CanonicalTensor) -> Result<CanonicalTensor> {
        Ok(x.clone())
    }
}

impl<F: Fn(&CanonicalTensor) -> Result<CanonicalTensor>> LinearOperator for F {
    fn apply(&self, x: &CanonicalTensor) -> Result<CanonicalTensor> {
        self(x)
    }
}

/// Which iterates are recompressed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TruncationPoints {
    pub s: bool,
    pub x: bool,
    pub r: bool,
    pub z: bool,
    pub p: bool,
}

impl TruncationPoints {
    pub const ALL: Self = Self { s: true, x: true, r: true, z: true, p: true };
    pub const NONE: Self = Self { s: false, x: false, r: false, z: false, p: false };
}

impl Default for TruncationPoints {
    fn default() -> Self {
        Self::ALL
    }
}

/// What the stopping tolerance is compared against.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum StopRule {
    /// `|R| / |B|`.
    #[default]
    RelativeNorm,
    /// `|integral of R|` over the unit cube with grid step `1 / (n + 1)`,
    /// a much weaker test dominated by the smoothest residual component.
    Integral,
}

impl StopRule {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::RelativeNorm => "relative",
            Self::Integral => "integral",
        }
    }
}

impl std::str::FromStr for StopRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "relative" => Ok(Self::RelativeNorm),
            "integral" => Ok(Self::Integral),
            other => Err(Error::InvalidInput(format!("unknown stopping rule '{other}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PcgConfig {
    /// Relative truncation tolerance. Zero disables truncation.
    pub eps: f64,
    /// Stop when the quantity chosen by `stop_rule` drops to this value.
    pub stop_tol: f64,
    pub stop_rule: StopRule,
    pub max_iter: usize,
    /// Largest rank any truncated iterate may keep.
    pub rank_cap: usize,
    pub truncation: TruncationPoints,
    /// Recorded only; every code path is already single-threaded and
    /// reproducible.
    pub deterministic: bool,
}

impl Default for PcgConfig {
    fn default() -> Self {
        Self {
            eps: 1e-6,
            stop_tol: 1e-5,
            stop_rule: StopRule::RelativeNorm,
            max_iter: 50,
            rank_cap: 120,
            truncation: TruncationPoints::ALL,
            deterministic: false,
        }
    }
}

impl PcgConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eps >= 0.0 && self.eps.is_finite()) {
            return Err(Error::InvalidInput(format!("truncation tolerance {} must be >= 0", self.eps)));
        }
        if !(self.stop_tol > 0.0 && self.stop_tol.is_finite()) {
            return Err(Error::InvalidInput(format!("stopping tolerance {} must be positive", self.stop_tol)));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidInput("max_iter must be at least 1".into()));
        }
        if self.rank_cap == 0 {
            return Err(Error::InvalidInput("rank cap must be at least 1".into()));
        }
        Ok(())
    }
}

/// State after one pass of the loop.
#[derive(Clone, Debug, PartialEq)]
pub struct IterationRecord {
    pub iter: usize,
    pub abs_residual: f64,
    pub rel_residual: f64,
    pub rank_x: usize,
    pub rank_r: usize,
    pub rank_z: usize,
    pub rank_p: usize,
    pub rank_s: usize,
    /// Wall time of this iteration.
    pub seconds: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Termination {
    Converged,
    MaxIterations,
    /// Zero right-hand side; the zero tensor is exact.
    ZeroRhs,
}

impl Termination {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Converged => "converged",
            Self::MaxIterations => "max_iterations",
            Self::ZeroRhs => "zero_rhs",
        }
    }
}

#[derive(Clone, Debug)]
pub struct SolveReport {
    pub solution: CanonicalTensor,
    pub iterations: usize,
    pub history: Vec<IterationRecord>,
    pub converged: bool,
    pub termination: Termination,
    /// True when some truncation was decided by the rank cap.
    pub rank_capped: bool,
    /// True when the initial residual exceeded the cap and was truncated.
    pub initial_residual_truncated: bool,
}

impl SolveReport {
    pub fn final_rel_residual(&self) -> f64 {
        self.history.last().map_or(0.0, |r| r.rel_residual)
    }

    pub fn max_rank(&self) -> usize {
        self.history
            .iter()
            .map(|r| r.rank_x.max(r.rank_r).max(r.rank_z).max(r.rank_p).max(r.rank_s))
            .max()
            .unwrap_or(self.solution.rank())
    }

    /// Convergence history as CSV, one row per iteration.
    pub fn write_history<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "iter,abs_residual,rel_residual,rank_X,rank_R,rank_Z,rank_P,rank_S,seconds")?;
        for r in &self.history {
            writeln!(
                out,
                "{},{:.6e},{:.6e},{},{},{},{},{},{:.6e}",
                r.iter, r.abs_residual, r.rel_residual, r.rank_x, r.rank_r, r.rank_z, r.rank_p, r.rank_s, r.seconds
            )?;
        }
        Ok(())
    }
}

struct Truncator<'a> {
    cfg: &'a PcgConfig,
    capped: bool,
}

impl Truncator<'_> {
    fn apply(&mut self, on: bool, t: CanonicalTensor) -> Result<CanonicalTensor> {
        if !on || self.cfg.eps == 0.0 {
            return Ok(t);
        }
        let out = truncate_capped(&t, self.cfg.eps, self.cfg.rank_cap)?;
        self.capped |= out.capped;
        Ok(out.tensor)
    }
}

fn finite(t: &CanonicalTensor, iteration: usize) -> Result<()> {
    if t.is_finite() {
        Ok(())
    } else {
        Err(Error::NotANumber { iteration })
    }
}

/// Solves `fun(X) = B` by preconditioned CG in canonical format.
pub fn pcg_solve(
    fun: &dyn LinearOperator,
    precond: &dyn LinearOperator,
    b: &CanonicalTensor,
    x0: &CanonicalTensor,
    cfg: &PcgConfig,
) -> Result<SolveReport> {
    cfg.validate()?;
    if b.shape() != x0.shape() {
        return Err(Error::Shape(format!("rhs {:?} vs initial guess {:?}", b.shape(), x0.shape())));
    }
    if !b.is_finite() || !x0.is_finite() {
        return Err(Error::NonFinite("pcg input".into()));
    }
    let b_norm = b.norm();
    if b_norm == 0.0 {
        return Ok(SolveReport {
            solution: CanonicalTensor::zeros(b.shape())?,
            iterations: 0,
            history: Vec::new(),
            converged: true,
            termination: Termination::ZeroRhs,
            rank_capped: false,
            initial_residual_truncated: false,
        });
    }
    let ones = CanonicalTensor::ones(b.shape())?;
    let cell: f64 = b.shape().iter().map(|&n| 1.0 / (n as f64 + 1.0)).product();
    let mut tr = Truncator { cfg, capped: false };
    let mut x = x0.clone();
    let mut r = if x0.rank() == 0 { b.clone() } else { b.axpy(-1.0, &fun.apply(x0)?)? };
    let mut initial_residual_truncated = false;
    if cfg.eps > 0.0 && r.rank() > cfg.rank_cap {
        r = tr.apply(true, r)?;
        initial_residual_truncated = true;
    }
    let mut z = tr.apply(cfg.truncation.z, precond.apply(&r)?)?;
    let mut p = z.clone();
    let mut history = Vec::new();
    let mut termination = Termination::MaxIterations;
    for k in 0..cfg.max_iter {
        let start = Instant::now();
        let s = tr.apply(cfg.truncation.s, fun.apply(&p)?)?;
        finite(&s, k)?;
        let ps = p.inner(&s)?;
        if ps.is_nan() {
            return Err(Error::NotANumber { iteration: k });
        }
        if ps <= 0.0 {
            return Err(Error::Breakdown { iteration: k, curvature: ps });
        }
        let rz = r.inner(&z)?;
        // the denominator of beta, in the order <Z, R> of the old iterates
        let zr = z.inner(&r)?;
        let a = rz / ps;
        x = tr.apply(cfg.truncation.x, x.axpy(a, &p)?)?;
        r = tr.apply(cfg.truncation.r, r.axpy(-a, &s)?)?;
        finite(&r, k)?;
        let res = r.norm();
        let rel = res / b_norm;
        let mut record = IterationRecord {
            iter: k + 1,
            abs_residual: res,
            rel_residual: rel,
            rank_x: x.rank(),
            rank_r: r.rank(),
            rank_z: z.rank(),
            rank_p: p.rank(),
            rank_s: s.rank(),
            seconds: 0.0,
        };
        if rel.is_nan() {
            return Err(Error::NotANumber { iteration: k });
        }
        let measure = match cfg.stop_rule {
            StopRule::RelativeNorm => rel,
            StopRule::Integral => (cell * r.inner(&ones)?).abs(),
        };
        if measure <= cfg.stop_tol {
            record.seconds = start.elapsed().as_secs_f64();
            history.push(record);
            termination = Termination::Converged;
            break;
        }
        let z_new = tr.apply(cfg.truncation.z, precond.apply(&r)?)?;
        finite(&z_new, k)?;
        let beta = r.inner(&z_new)? / zr;
        p = tr.apply(cfg.truncation.p, z_new.axpy(beta, &p)?)?;
        z = z_new;
        record.rank_z = z.rank();
        record.rank_p = p.rank();
        record.seconds = start.elapsed().as_secs_f64();
        history.push(record);
    }
    Ok(SolveReport {
        solution: x,
        iterations: history.len(),
        converged: termination == Termination::Converged,
        termination,
        history,
        rank_capped: tr.capped,
        initial_residual_truncated,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor_formats::random_canonical;
    use rand::rngs::StdRng;
    use rand::SeedableRng;

    #[test]
    fn identity_converges_in_one_step() {
        let mut rng = StdRng::seed_from_u64(41);
        let b = random_canonical(&mut rng, &[9, 11, 7], 3);
        let rep =
            pcg_solve(&Identity, &Identity, &b, &CanonicalTensor::zeros(b.shape()).unwrap(), &PcgConfig::default())
                .unwrap();
        assert_eq!(rep.iterations, 1);
        assert!(rep.converged);
        let diff = rep.solution.axpy(-1.0, &b).unwrap().norm();
        assert!(diff <= 1e-6 * b.norm());
    }

    #[test]
    fn zero_rhs_returns_zero() {
        let b = CanonicalTensor::zeros(&[5, 5]).unwrap();
        let rep = pcg_solve(&Identity, &Identity, &b, &b, &PcgConfig::default()).unwrap();
        assert_eq!(rep.termination, Termination::ZeroRhs);
        assert_eq!(rep.solution.rank(), 0);
    }

    #[test]
    fn negative_operator_breaks_down() {
        let b = CanonicalTensor::ones(&[4, 4]).unwrap();
        let neg = |x: &CanonicalTensor| Ok(x.scaled(-1.0));
        let err = pcg_solve(&neg, &Identity, &b, &CanonicalTensor::zeros(&[4, 4]).unwrap(), &PcgConfig::default());
        assert!(matches!(err, Err(Error::Breakdown { iteration: 0, .. })));
    }

    #[test]
    fn history_csv_has_header_and_rows() {
        let b = CanonicalTensor::ones(&[4, 4]).unwrap();
        let rep = pcg_solve(&Identity, &Identity, &b, &CanonicalTensor::zeros(&[4, 4]).unwrap(), &PcgConfig::default())
            .unwrap();
        let mut buf = Vec::new();
        rep.write_history(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "iter,abs_residual,rel_residual,rank_X,rank_R,rank_Z,rank_P,rank_S,seconds");
        assert_eq!(lines.len(), 2);
    }

    #[test]
    fn config_validation() {
        let mut c = PcgConfig::default();
        c.max_iter = 0;
        assert!(c.validate().is_err());
        let mut c = PcgConfig::default();
        c.stop_tol = -1.0;
        assert!(c.validate().is_err());
    }
}
