use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::field::Grid;

/// N-dimensional complex FFT on an isotropic grid, built from 1-D plans.
#[derive(Clone)]
pub(crate) struct Fourier {
    grid: Grid,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Fourier {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Fourier").field("grid", &self.grid).finish()
    }
}

impl Fourier {
    pub fn new(grid: Grid) -> Self {
        let mut planner = FftPlanner::new();
        let n = grid.resolution();
        Self { grid, forward: planner.plan_fft_forward(n), inverse: planner.plan_fft_inverse(n) }
    }

    pub fn forward_real(&self, values: &[f64]) -> Vec<Complex64> {
        let mut data: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.apply(&mut data, &self.forward);
        data
    }

    /// Inverse transform, normalised, returning the real part.
    pub fn inverse_real(&self, mut data: Vec<Complex64>) -> Vec<f64> {
        self.apply(&mut data, &self.inverse);
        let scale = 1.0 / data.len() as f64;
        data.into_iter().map(|c| c.re * scale).collect()
    }

    fn apply(&self, data: &mut [Complex64], fft: &Arc<dyn Fft<f64>>) {
        let n = self.grid.resolution();
        let dim = self.grid.dim();
        let mut scratch = vec![Complex64::default(); fft.get_inplace_scratch_len()];
        let mut lane = vec![Complex64::default(); n];
        for axis in 0..dim {
            let stride = n.pow((dim - 1 - axis) as u32);
            if stride == 1 {
                fft.process_with_scratch(data, &mut scratch);
                continue;
            }
            let block = n * stride;
            for base in (0..data.len()).step_by(block) {
                for s in 0..stride {
                    for (k, slot) in lane.iter_mut().enumerate() {
                        *slot = data[base + s + k * stride];
                    }
                    fft.process_with_scratch(&mut lane, &mut scratch);
                    for (k, v) in lane.iter().enumerate() {
                        data[base + s + k * stride] = *v;
                    }
                }
            }
        }
    }
}

/// Signed integer frequency of FFT bin `i` on an `n`-point axis; the Nyquist
/// bin maps to `-n/2`.
pub(crate) fn signed_frequency(i: usize, n: usize) -> i64 {
    if i < n / 2 {
        i as i64
    } else {
        i as i64 - n as i64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_2d() {
        let g = Grid::new(2, 1.0, 8).unwrap();
        let f = Fourier::new(g);
        let vals: Vec<f64> = (0..64).map(|i| ((i * 37) % 11) as f64 - 5.0).collect();
        let back = f.inverse_real(f.forward_real(&vals));
        for (a, b) in vals.iter().zip(&back) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn separable_mode_lands_in_one_bin() {
        let g = Grid::new(2, 1.0, 8).unwrap();
        let f = Fourier::new(g);
        // e^{2πi(1·i0 + 2·i1)/8}: row-major, axis 0 slowest
        let vals: Vec<f64> = (0..64)
            .map(|flat| {
                let (i0, i1) = (flat / 8, flat % 8);
                (2.0 * std::f64::consts::PI * (i0 as f64 + 2.0 * i1 as f64) / 8.0).cos()
            })
            .collect();
        let spec = f.forward_real(&vals);
        let peak = spec[g.ravel(&[1, 2])].norm();
        assert!((peak - 32.0).abs() < 1e-9);
        assert!((spec[g.ravel(&[7, 6])].norm() - 32.0).abs() < 1e-9);
    }
}
