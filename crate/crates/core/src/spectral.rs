//! Two-dimensional real-to-complex transforms on an `n x n` periodic grid.
//!
//! Rows (the second index, `y`) are transformed real-to-complex, columns (the
//! first index, `x`) complex-to-complex, so a spectrum is stored as `n` rows of
//! `n/2 + 1` coefficients. Forward transforms are unnormalized; the inverse
//! divides by `n^2`.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use realfft::{ComplexToReal, RealFftPlanner, RealToComplex};
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

pub struct Plan {
    n: usize,
    r2c: Arc<dyn RealToComplex<f64>>,
    c2r: Arc<dyn ComplexToReal<f64>>,
    col_fwd: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
}

/// Plans are immutable once built and shared between threads.
pub fn plan(n: usize) -> Arc<Plan> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<Plan>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache.lock().unwrap_or_else(|e| e.into_inner());
    guard
        .entry(n)
        .or_insert_with(|| Arc::new(Plan::new(n)))
        .clone()
}

impl Plan {
    fn new(n: usize) -> Self {
        let mut real = RealFftPlanner::<f64>::new();
        let mut cplx = FftPlanner::<f64>::new();
        Plan {
            n,
            r2c: real.plan_fft_forward(n),
            c2r: real.plan_fft_inverse(n),
            col_fwd: cplx.plan_fft_forward(n),
            col_inv: cplx.plan_fft_inverse(n),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of stored coefficients per row.
    pub fn half(&self) -> usize {
        self.n / 2 + 1
    }

    pub fn forward(&self, values: &[f64]) -> Vec<Complex64> {
        let n = self.n;
        let m = self.half();
        debug_assert_eq!(values.len(), n * n);
        let mut out = vec![Complex64::new(0.0, 0.0); n * m];
        let mut row = vec![0.0; n];
        let mut scratch = self.r2c.make_scratch_vec();
        for i in 0..n {
            row.copy_from_slice(&values[i * n..(i + 1) * n]);
            self.r2c
                .process_with_scratch(&mut row, &mut out[i * m..(i + 1) * m], &mut scratch)
                .expect("buffer sizes are fixed by the plan");
        }
        self.columns(&mut out, &self.col_fwd);
        out
    }

    pub fn inverse(&self, mut spectrum: Vec<Complex64>) -> Vec<f64> {
        let n = self.n;
        let m = self.half();
        debug_assert_eq!(spectrum.len(), n * m);
        self.columns(&mut spectrum, &self.col_inv);
        let mut out = vec![0.0; n * n];
        let mut scratch = self.c2r.make_scratch_vec();
        let scale = 1.0 / (n * n) as f64;
        for i in 0..n {
            let row = &mut spectrum[i * m..(i + 1) * m];
            // Hermitian symmetry leaves only roundoff here.
            row[0].im = 0.0;
            row[m - 1].im = 0.0;
            self.c2r
                .process_with_scratch(row, &mut out[i * n..(i + 1) * n], &mut scratch)
                .expect("buffer sizes are fixed by the plan");
        }
        out.iter_mut().for_each(|v| *v *= scale);
        out
    }

    fn columns(&self, data: &mut [Complex64], fft: &Arc<dyn Fft<f64>>) {
        let n = self.n;
        let m = self.half();
        let mut col = vec![Complex64::new(0.0, 0.0); n];
        let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
        for q in 0..m {
            for i in 0..n {
                col[i] = data[i * m + q];
            }
            fft.process_with_scratch(&mut col, &mut scratch);
            for i in 0..n {
                data[i * m + q] = col[i];
            }
        }
    }

    /// Signed mode number of full-axis index `i`, in `-n/2+1 ..= n/2`.
    pub fn mode(&self, i: usize) -> i64 {
        let n = self.n as i64;
        let i = i as i64;
        if i <= n / 2 {
            i
        } else {
            i - n
        }
    }

    /// Multiplicity of half-axis index `q` in a full Parseval sum.
    pub fn half_weight(&self, q: usize) -> f64 {
        if q == 0 || q == self.n / 2 {
            1.0
        } else {
            2.0
        }
    }
}
