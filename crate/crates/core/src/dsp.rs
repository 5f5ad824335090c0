//! Small shared signal-processing helpers.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

/// Symmetric Hamming window of length `n`.
pub fn hamming(n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![1.0];
    }
    let denom = (n - 1) as f64;
    (0..n)
        .map(|i| 0.54 - 0.46 * (2.0 * PI * i as f64 / denom).cos())
        .collect()
}

/// Zeroth-order modified Bessel function of the first kind (power series).
pub fn bessel_i0(x: f64) -> f64 {
    let half = x / 2.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..64 {
        term *= (half / k as f64) * (half / k as f64);
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

/// Kaiser window evaluated at `t` in [-1, 1].
pub fn kaiser(t: f64, beta: f64) -> f64 {
    if t.abs() > 1.0 {
        return 0.0;
    }
    bessel_i0(beta * (1.0 - t * t).sqrt()) / bessel_i0(beta)
}

pub fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

/// Forward real-input FFT helper with a cached plan.
pub struct RealFft {
    size: usize,
    plan: Arc<dyn Fft<f64>>,
    scratch: Vec<Complex64>,
    buf: Vec<Complex64>,
}

impl RealFft {
    pub fn new(size: usize) -> Self {
        let plan = FftPlanner::new().plan_fft_forward(size);
        let scratch = vec![Complex64::default(); plan.get_inplace_scratch_len()];
        Self {
            size,
            plan,
            scratch,
            buf: vec![Complex64::default(); size],
        }
    }

    pub fn size(&self) -> usize {
        self.size
    }

    /// Full complex spectrum of `input`, zero-padded or truncated to the FFT size.
    pub fn spectrum(&mut self, input: &[f64]) -> &[Complex64] {
        for (i, slot) in self.buf.iter_mut().enumerate() {
            *slot = Complex64::new(input.get(i).copied().unwrap_or(0.0), 0.0);
        }
        self.plan
            .process_with_scratch(&mut self.buf, &mut self.scratch);
        &self.buf
    }

    /// One-sided power spectrum (`size / 2 + 1` bins).
    pub fn power(&mut self, input: &[f64]) -> Vec<f64> {
        let half = self.size / 2 + 1;
        self.spectrum(input)[..half]
            .iter()
            .map(|c| c.norm_sqr())
            .collect()
    }
}

/// Full linear cross-correlation `c[k] = sum_t a[t] * b[t - k]` for lags in
/// `-(b.len()-1) ..= a.len()-1`, returned with the zero lag at index `b.len() - 1`.
pub fn cross_correlation(a: &[f64], b: &[f64]) -> Vec<f64> {
    let n = a.len() + b.len() - 1;
    let size = n.next_power_of_two();
    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft_forward(size);
    let inv = planner.plan_fft_inverse(size);
    let mut fa: Vec<Complex64> = (0..size)
        .map(|i| Complex64::new(a.get(i).copied().unwrap_or(0.0), 0.0))
        .collect();
    let mut fb: Vec<Complex64> = (0..size)
        .map(|i| Complex64::new(b.get(i).copied().unwrap_or(0.0), 0.0))
        .collect();
    fwd.process(&mut fa);
    fwd.process(&mut fb);
    for (x, y) in fa.iter_mut().zip(&fb) {
        *x *= y.conj();
    }
    inv.process(&mut fa);
    let scale = 1.0 / size as f64;
    // Negative lags wrap to the end of the circular buffer.
    let mut out = Vec::with_capacity(n);
    for k in (1..b.len()).rev() {
        out.push(fa[size - k].re * scale);
    }
    for k in 0..a.len() {
        out.push(fa[k].re * scale);
    }
    out
}
