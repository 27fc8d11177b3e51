use crate::{Error, Result};

/// Scalar function applied to the spectrum of the elliptic operator.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SpectralFunction {
    /// `lambda^alpha`
    Power { alpha: f64 },
    /// `scale * lambda^(-alpha)`
    InversePower { alpha: f64, scale: f64 },
    /// `beta lambda^(-alpha) + (gamma/beta) lambda^alpha`
    Lagrange { alpha: f64, beta: f64, gamma: f64 },
    /// `1 / (beta lambda^(-alpha) + (gamma/beta) lambda^alpha)`
    LagrangeInverse { alpha: f64, beta: f64, gamma: f64 },
}

impl SpectralFunction {
    pub fn power(alpha: f64) -> Result<Self> {
        check_alpha(alpha)?;
        Ok(Self::Power { alpha })
    }

    pub fn inverse_power(alpha: f64, scale: f64) -> Result<Self> {
        check_alpha(alpha)?;
        check_positive("scale", scale)?;
        Ok(Self::InversePower { alpha, scale })
    }

    pub fn lagrange(alpha: f64, beta: f64, gamma: f64) -> Result<Self> {
        check_alpha(alpha)?;
        check_positive("beta", beta)?;
        check_positive("gamma", gamma)?;
        Ok(Self::Lagrange { alpha, beta, gamma })
    }

    pub fn lagrange_inverse(alpha: f64, beta: f64, gamma: f64) -> Result<Self> {
        check_alpha(alpha)?;
        check_positive("beta", beta)?;
        check_positive("gamma", gamma)?;
        Ok(Self::LagrangeInverse { alpha, beta, gamma })
    }

    pub fn eval(&self, lambda: f64) -> f64 {
        match *self {
            Self::Power { alpha } => lambda.powf(alpha),
            Self::InversePower { alpha, scale } => scale * lambda.powf(-alpha),
            Self::Lagrange { alpha, beta, gamma } => lagrange(lambda, alpha, beta, gamma),
            Self::LagrangeInverse { alpha, beta, gamma } => 1.0 / lagrange(lambda, alpha, beta, gamma),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Power { .. } => "f1",
            Self::InversePower { .. } => "inverse-power",
            Self::Lagrange { .. } => "f2",
            Self::LagrangeInverse { .. } => "f3",
        }
    }
}

fn lagrange(lambda: f64, alpha: f64, beta: f64, gamma: f64) -> f64 {
    let p = lambda.powf(alpha);
    beta / p + gamma / beta * p
}

pub(crate) fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::InvalidInput(format!("alpha = {alpha} outside (0, 1]")));
    }
    Ok(())
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if !(v > 0.0 && v.is_finite()) {
        return Err(Error::InvalidInput(format!("{name} = {v} must be positive")));
    }
    Ok(())
}

/// Sum of the per-mode eigenvalues, accumulated smallest first.
pub(crate) fn sorted_sum(vals: &mut [f64]) -> f64 {
    vals.sort_by(f64::total_cmp);
    vals.iter().sum()
}

const LANCZOS_G: f64 = 7.0;
const LANCZOS_COEF: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// Gamma function by the Lanczos approximation (g = 7, 9 terms), with the
/// reflection formula below 1/2.
pub fn gamma(x: f64) -> f64 {
    if x < 0.5 {
        let pi = std::f64::consts::PI;
        return pi / ((pi * x).sin() * gamma(1.0 - x));
    }
    let x = x - 1.0;
    let mut a = LANCZOS_COEF[0];
    let t = x + LANCZOS_G + 0.5;
    for (i, c) in LANCZOS_COEF.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    (2.0 * std::f64::consts::PI).sqrt() * t.powf(x + 0.5) * (-t).exp() * a
}
