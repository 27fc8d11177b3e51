use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

/// Orthonormal DST-I of length `n`,
/// `(F v)_k = sqrt(2/(n+1)) sum_j sin(pi j k / (n+1)) v_j`, through a complex
/// FFT of the odd extension (length `2(n+1)`). `F` is symmetric and its own
/// inverse.
#[derive(Clone)]
pub struct SineTransform {
    n: usize,
    fft: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for SineTransform {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SineTransform").field("n", &self.n).finish()
    }
}

impl SineTransform {
    pub fn new(n: usize) -> Self {
        let fft = FftPlanner::new().plan_fft_forward(2 * (n + 1));
        Self { n, fft }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Transforms `v` in place using `buf` (resized as needed) as workspace.
    pub fn apply_with(&self, v: &mut [f64], buf: &mut Vec<Complex<f64>>) {
        let n = self.n;
        assert_eq!(v.len(), n, "sine transform length");
        let m = 2 * (n + 1);
        buf.clear();
        buf.resize(m, Complex::new(0.0, 0.0));
        for j in 0..n {
            buf[j + 1].re = v[j];
            buf[m - 1 - j].re = -v[j];
        }
        self.fft.process(buf);
        let scale = (2.0 / (n as f64 + 1.0)).sqrt() * 0.5;
        for k in 0..n {
            v[k] = -buf[k + 1].im * scale;
        }
    }

    pub fn apply(&self, v: &mut [f64]) {
        let mut buf = Vec::new();
        self.apply_with(v, &mut buf);
    }
}

/// One-shot orthonormal DST-I.
pub fn sine_transform(v: &[f64]) -> Vec<f64> {
    let mut out = v.to_vec();
    SineTransform::new(v.len()).apply(&mut out);
    out
}

/// Direct `O(n^2)` summation, used as a reference.
pub fn sine_transform_direct(v: &[f64]) -> Vec<f64> {
    let n = v.len();
    let scale = (2.0 / (n as f64 + 1.0)).sqrt();
    (1..=n)
        .map(|k| {
            scale
                * v.iter()
                    .enumerate()
                    .map(|(j, x)| (PI * ((j + 1) * k) as f64 / (n as f64 + 1.0)).sin() * x)
                    .sum::<f64>()
        })
        .collect()
}
