use std::f64::consts::PI;
use std::path::Path;

use crate::{Error, Result};

/// Diffusion coefficient of one mode, `a(x)` on `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub enum Coefficient1D {
    /// `sin(100 pi x) + 1.1`
    A1,
    /// `sin(x) cos(x)`
    A2,
    /// `sin(x) cos(x) + 0.1`
    A2Modified,
    /// `cos(5 pi x) + 2`
    A3,
    Unit,
    Constant(f64),
    /// Piecewise-linear interpolant of `(x, a)` samples, sorted by `x`.
    Sampled {
        x: Vec<f64>,
        a: Vec<f64>,
    },
}

impl Coefficient1D {
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Self::A1 => (100.0 * PI * x).sin() + 1.1,
            Self::A2 => x.sin() * x.cos(),
            Self::A2Modified => x.sin() * x.cos() + 0.1,
            Self::A3 => (5.0 * PI * x).cos() + 2.0,
            Self::Unit => 1.0,
            Self::Constant(c) => *c,
            Self::Sampled { x: xs, a } => interpolate(xs, a, x),
        }
    }

    /// Short identifier used in reports.
    pub fn name(&self) -> String {
        match self {
            Self::A1 => "a1".into(),
            Self::A2 => "a2".into(),
            Self::A2Modified => "a2_modified".into(),
            Self::A3 => "a3".into(),
            Self::Unit => "unit".into(),
            Self::Constant(c) => format!("const:{c}"),
            Self::Sampled { x, .. } => format!("sampled[{}]", x.len()),
        }
    }

    /// Built-in name (`a1`, `a2`, `a2_modified`, `a3`, `unit`) or a path to a
    /// two-column CSV file of `(x, a(x))` samples.
    pub fn parse(spec: &str, allow_degenerate: bool) -> Result<Self> {
        match spec {
            "a1" => Ok(Self::A1),
            "a2" => Ok(Self::A2),
            "a2_modified" | "a2m" => Ok(Self::A2Modified),
            "a3" => Ok(Self::A3),
            "unit" | "1" => Ok(Self::Unit),
            path => Self::from_csv_file(path, allow_degenerate),
        }
    }

    pub fn from_csv_file(path: impl AsRef<Path>, allow_degenerate: bool) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_csv(&text, allow_degenerate)
    }

    /// Parses `x,a` rows; a non-numeric first row is treated as a header.
    pub fn from_csv(text: &str, allow_degenerate: bool) -> Result<Self> {
        let mut pts = Vec::new();
        for (ln, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let cols: Vec<&str> = line.split([',', ' ', '\t', ';']).filter(|s| !s.is_empty()).collect();
            let parsed: std::result::Result<Vec<f64>, _> = cols.iter().map(|s| s.parse::<f64>()).collect();
            match parsed {
                Ok(v) if v.len() == 2 => pts.push((v[0], v[1])),
                Err(_) if pts.is_empty() && ln == 0 => continue,
                _ => return Err(Error::Parse { line: ln + 1, msg: "expected two numeric columns x,a".into() }),
            }
        }
        if pts.is_empty() {
            return Err(Error::InvalidInput("coefficient file has no samples".into()));
        }
        pts.sort_by(|p, q| p.0.total_cmp(&q.0));
        for &(x, a) in &pts {
            if !x.is_finite() || !a.is_finite() {
                return Err(Error::NonFinite(format!("coefficient sample at x={x}")));
            }
            if !allow_degenerate && a <= 0.0 {
                return Err(Error::InvalidInput(format!(
                    "coefficient {a} at x={x} is not strictly positive (use --allow-degenerate)"
                )));
            }
            if a < 0.0 {
                return Err(Error::InvalidInput(format!("negative coefficient {a} at x={x}")));
            }
        }
        let (x, a) = pts.into_iter().unzip();
        Ok(Self::Sampled { x, a })
    }
}

fn interpolate(xs: &[f64], a: &[f64], x: f64) -> f64 {
    if xs.len() == 1 || x <= xs[0] {
        return a[0];
    }
    let last = xs.len() - 1;
    if x >= xs[last] {
        return a[last];
    }
    let k = xs.partition_point(|&v| v <= x);
    let (x0, x1) = (xs[k - 1], xs[k]);
    let t = (x - x0) / (x1 - x0);
    a[k - 1] * (1.0 - t) + a[k] * t
}

/// Midpoint samples `a((i + 1/2) h)` for `i = 0..=n`, `h = 1/(n+1)`.
pub fn midpoint_samples(coef: &Coefficient1D, n: usize) -> Vec<f64> {
    let h = 1.0 / (n as f64 + 1.0);
    (0..=n).map(|i| coef.eval((i as f64 + 0.5) * h)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtins_are_positive_on_midpoints() {
        for c in [Coefficient1D::A1, Coefficient1D::A2, Coefficient1D::A2Modified, Coefficient1D::A3] {
            assert!(midpoint_samples(&c, 127).iter().all(|&a| a > 0.0), "{}", c.name());
        }
        assert!((Coefficient1D::A2Modified.eval(0.3) - Coefficient1D::A2.eval(0.3) - 0.1).abs() < 1e-15);
    }

    #[test]
    fn csv_samples_interpolate() {
        let c = Coefficient1D::from_csv("x,a\n0.0,1.0\n1.0,3.0\n", false).unwrap();
        assert_eq!(c.eval(0.25), 1.5);
        assert_eq!(c.eval(-1.0), 1.0);
        assert!(Coefficient1D::from_csv("0,1\n1,0\n", false).is_err());
        assert!(Coefficient1D::from_csv("0,1\n1,0\n", true).is_ok());
        assert!(Coefficient1D::from_csv("0,1\n1,nan\n", true).is_err());
        assert!(matches!(Coefficient1D::from_csv("0,1\n1\n", true), Err(Error::Parse { line: 2, .. })));
    }
}
