use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

/// Planned multi-dimensional FFT over a row-major box of shape `dims`.
#[derive(Clone)]
pub(crate) struct FftNd {
    dims: Vec<usize>,
    forward: Vec<Arc<dyn Fft<f64>>>,
    inverse: Vec<Arc<dyn Fft<f64>>>,
}

impl std::fmt::Debug for FftNd {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FftNd").field("dims", &self.dims).finish()
    }
}

impl FftNd {
    pub fn new(dims: &[usize]) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            dims: dims.to_vec(),
            forward: dims.iter().map(|&n| planner.plan_fft_forward(n)).collect(),
            inverse: dims.iter().map(|&n| planner.plan_fft_inverse(n)).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    /// Unnormalized forward transform in place.
    pub fn forward(&self, data: &mut [Complex64]) {
        self.run(data, &self.forward);
    }

    /// Inverse transform in place, including the `1/len` normalization.
    pub fn inverse(&self, data: &mut [Complex64]) {
        self.run(data, &self.inverse);
        let s = 1.0 / self.len() as f64;
        data.iter_mut().for_each(|z| *z *= s);
    }

    fn run(&self, data: &mut [Complex64], plans: &[Arc<dyn Fft<f64>>]) {
        debug_assert_eq!(data.len(), self.len());
        let total = self.len();
        for (axis, plan) in plans.iter().enumerate() {
            let n = self.dims[axis];
            let stride: usize = self.dims[axis + 1..].iter().product();
            if stride == 1 {
                plan.process(data);
                continue;
            }
            let mut line = vec![Complex64::default(); n];
            let block = n * stride;
            for outer in (0..total).step_by(block) {
                for inner in 0..stride {
                    let base = outer + inner;
                    for (k, z) in line.iter_mut().enumerate() {
                        *z = data[base + k * stride];
                    }
                    plan.process(&mut line);
                    for (k, z) in line.iter().enumerate() {
                        data[base + k * stride] = *z;
                    }
                }
            }
        }
    }

    pub fn forward_real(&self, values: &[f64]) -> Vec<Complex64> {
        let mut data: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.forward(&mut data);
        data
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_naive_dft_2d() {
        let dims = [3, 4];
        let fft = FftNd::new(&dims);
        let x: Vec<f64> = (0..12).map(|i| ((i * 7 % 5) as f64) - 1.3).collect();
        let got = fft.forward_real(&x);
        for k0 in 0..3 {
            for k1 in 0..4 {
                let mut s = Complex64::default();
                for j0 in 0..3 {
                    for j1 in 0..4 {
                        let ph = -2.0 * std::f64::consts::PI
                            * ((k0 * j0) as f64 / 3.0 + (k1 * j1) as f64 / 4.0);
                        s += x[j0 * 4 + j1] * Complex64::from_polar(1.0, ph);
                    }
                }
                assert!((got[k0 * 4 + k1] - s).norm() < 1e-12);
            }
        }
        let mut back = got.clone();
        fft.inverse(&mut back);
        for (a, b) in back.iter().zip(&x) {
            assert!((a.re - b).abs() < 1e-12 && a.im.abs() < 1e-12);
        }
    }
}
