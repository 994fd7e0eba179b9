//! Two-dimensional FFTs on row-major grids and wavenumber tables.

use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

/// Planned forward/inverse transforms for an `nx` x `ny` periodic grid.
pub struct Fft2 {
    nx: usize,
    ny: usize,
    row_fwd: Arc<dyn Fft<f64>>,
    row_inv: Arc<dyn Fft<f64>>,
    col_fwd: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
}

impl Fft2 {
    pub fn new(nx: usize, ny: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            nx,
            ny,
            row_fwd: planner.plan_fft_forward(nx),
            row_inv: planner.plan_fft_inverse(nx),
            col_fwd: planner.plan_fft_forward(ny),
            col_inv: planner.plan_fft_inverse(ny),
        }
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn columns(&self, data: &mut [Complex64], plan: &Arc<dyn Fft<f64>>) {
        let mut col = vec![Complex64::default(); self.ny];
        for i in 0..self.nx {
            for (j, c) in col.iter_mut().enumerate() {
                *c = data[j * self.nx + i];
            }
            plan.process(&mut col);
            for (j, c) in col.iter().enumerate() {
                data[j * self.nx + i] = *c;
            }
        }
    }

    /// Unnormalized forward transform, in place.
    pub fn forward(&self, data: &mut [Complex64]) {
        assert_eq!(data.len(), self.len());
        self.row_fwd.process(data);
        self.columns(data, &self.col_fwd);
    }

    /// Inverse transform including the `1/(nx*ny)` factor, in place.
    pub fn inverse(&self, data: &mut [Complex64]) {
        assert_eq!(data.len(), self.len());
        self.row_inv.process(data);
        self.columns(data, &self.col_inv);
        let scale = 1.0 / self.len() as f64;
        data.iter_mut().for_each(|c| *c *= scale);
    }

    pub fn forward_real(&self, values: &[f64]) -> Vec<Complex64> {
        let mut data: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.forward(&mut data);
        data
    }
}

/// Signed integer frequency of FFT bin `i` on an axis of length `n`.
pub fn signed_freq(i: usize, n: usize) -> i64 {
    if i < n.div_ceil(2) {
        i as i64
    } else {
        i as i64 - n as i64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_identity() {
        let (nx, ny) = (12, 7);
        let fft = Fft2::new(nx, ny);
        let values: Vec<f64> = (0..nx * ny).map(|i| ((i * 37) % 11) as f64 - 5.0).collect();
        let mut spec = fft.forward_real(&values);
        fft.inverse(&mut spec);
        for (a, b) in values.iter().zip(&spec) {
            assert!((a - b.re).abs() < 1e-12 && b.im.abs() < 1e-12);
        }
    }

    #[test]
    fn frequencies() {
        let f: Vec<i64> = (0..6).map(|i| signed_freq(i, 6)).collect();
        assert_eq!(f, vec![0, 1, 2, -3, -2, -1]);
        let g: Vec<i64> = (0..5).map(|i| signed_freq(i, 5)).collect();
        assert_eq!(g, vec![0, 1, 2, -2, -1]);
    }
}
