//! Fourier differentiation on the periodic unit square.

use std::cell::RefCell;
use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

struct Plan {
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

thread_local! {
    static PLANS: RefCell<HashMap<usize, Arc<Plan>>> = RefCell::new(HashMap::new());
}

fn plan(n: usize) -> Arc<Plan> {
    PLANS.with(|cell| {
        cell.borrow_mut()
            .entry(n)
            .or_insert_with(|| {
                let mut planner = FftPlanner::new();
                Arc::new(Plan { fwd: planner.plan_fft_forward(n), inv: planner.plan_fft_inverse(n) })
            })
            .clone()
    })
}

/// Angular wavenumber of FFT bin `j` on `[0,1)` with `n` nodes.
fn wavenumber(j: usize, n: usize) -> f64 {
    let m = if j <= n / 2 { j as f64 } else { j as f64 - n as f64 };
    2.0 * PI * m
}

fn transform(buf: &mut [Complex64], n: usize, forward: bool) {
    let p = plan(n);
    let fft = if forward { &p.fwd } else { &p.inv };
    let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    // rows
    fft.process_with_scratch(buf, &mut scratch);
    // columns via transpose
    let mut t = vec![Complex64::new(0.0, 0.0); n * n];
    transpose::transpose(buf, &mut t, n, n);
    fft.process_with_scratch(&mut t, &mut scratch);
    transpose::transpose(&t, buf, n, n);
}

/// Spectral coefficients of a real `n × n` field (row index along `y1`).
pub struct Spectrum {
    n: usize,
    coeffs: Vec<Complex64>,
}

impl Spectrum {
    pub fn new(values: &[f64], n: usize) -> Self {
        assert_eq!(values.len(), n * n);
        let mut coeffs: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        transform(&mut coeffs, n, true);
        Spectrum { n, coeffs }
    }

    fn multiplier(&self, i: usize, j: usize, p: usize, q: usize) -> Complex64 {
        let n = self.n;
        let nyq = n % 2 == 0;
        let axis = |idx: usize, order: usize| -> Complex64 {
            if order == 0 {
                return Complex64::new(1.0, 0.0);
            }
            if nyq && idx == n / 2 && order % 2 == 1 {
                return Complex64::new(0.0, 0.0);
            }
            let k = wavenumber(idx, n);
            Complex64::new(0.0, k).powu(order as u32)
        };
        axis(i, p) * axis(j, q)
    }

    /// `∂_1^p ∂_2^q` of the represented field.
    pub fn derivative(&self, p: usize, q: usize) -> Vec<f64> {
        let n = self.n;
        let mut buf: Vec<Complex64> = self
            .coeffs
            .iter()
            .enumerate()
            .map(|(idx, c)| c * self.multiplier(idx / n, idx % n, p, q))
            .collect();
        transform(&mut buf, n, false);
        let norm = 1.0 / (n * n) as f64;
        buf.iter().map(|c| c.re * norm).collect()
    }

    /// Euclidean Laplacian `∂_1² + ∂_2²`.
    pub fn laplacian(&self) -> Vec<f64> {
        self.symbol_apply(|k1, k2| -(k1 * k1 + k2 * k2))
    }

    /// Apply a real Fourier symbol `m(k1, k2)`.
    pub fn symbol_apply(&self, symbol: impl Fn(f64, f64) -> f64) -> Vec<f64> {
        let n = self.n;
        let mut buf: Vec<Complex64> = self
            .coeffs
            .iter()
            .enumerate()
            .map(|(idx, c)| c * symbol(wavenumber(idx / n, n), wavenumber(idx % n, n)))
            .collect();
        transform(&mut buf, n, false);
        let norm = 1.0 / (n * n) as f64;
        buf.iter().map(|c| c.re * norm).collect()
    }

    /// Solve `(∂_1² + ∂_2²) u = f` with zero-mean `u`; the mean of `f` is ignored.
    pub fn inverse_laplacian(&self) -> Vec<f64> {
        self.symbol_apply(|k1, k2| {
            let k2s = k1 * k1 + k2 * k2;
            if k2s == 0.0 {
                0.0
            } else {
                -1.0 / k2s
            }
        })
    }
}
