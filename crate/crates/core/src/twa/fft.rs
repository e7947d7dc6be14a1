//! Unitary 3D discrete Fourier transform built from 1D passes.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

pub(crate) struct Fft3 {
    dims: (usize, usize, usize),
    forward: [Arc<dyn Fft<f64>>; 3],
    inverse: [Arc<dyn Fft<f64>>; 3],
    line: Vec<Complex64>,
    scratch: Vec<Complex64>,
    scale: f64,
}

impl Fft3 {
    pub(crate) fn new(nx: usize, ny: usize, nz: usize) -> Self {
        let mut planner = FftPlanner::new();
        let forward = [
            planner.plan_fft_forward(nx),
            planner.plan_fft_forward(ny),
            planner.plan_fft_forward(nz),
        ];
        let inverse = [
            planner.plan_fft_inverse(nx),
            planner.plan_fft_inverse(ny),
            planner.plan_fft_inverse(nz),
        ];
        let scratch_len = forward
            .iter()
            .chain(&inverse)
            .map(|f| f.get_inplace_scratch_len())
            .max()
            .unwrap_or(0);
        Self {
            dims: (nx, ny, nz),
            forward,
            inverse,
            line: vec![Complex64::default(); nx.max(ny).max(nz)],
            scratch: vec![Complex64::default(); scratch_len],
            scale: 1.0 / ((nx * ny * nz) as f64).sqrt(),
        }
    }

    /// `a_k = V^{-1/2} sum_r a_r e^{-i k.r}`.
    pub(crate) fn forward(&mut self, data: &mut [Complex64]) {
        self.transform(data, false);
    }

    /// `a_r = V^{-1/2} sum_k a_k e^{i k.r}`.
    pub(crate) fn inverse(&mut self, data: &mut [Complex64]) {
        self.transform(data, true);
    }

    fn transform(&mut self, data: &mut [Complex64], inverse: bool) {
        let (nx, ny, nz) = self.dims;
        debug_assert_eq!(data.len(), nx * ny * nz);
        let plans = if inverse {
            &self.inverse
        } else {
            &self.forward
        };
        // z is contiguous: rustfft transforms every consecutive chunk.
        if nz > 1 {
            plans[2].process_with_scratch(data, &mut self.scratch);
        }
        if ny > 1 {
            for ix in 0..nx {
                for iz in 0..nz {
                    let base = ix * ny * nz + iz;
                    strided_pass(
                        data,
                        base,
                        nz,
                        ny,
                        &plans[1],
                        &mut self.line,
                        &mut self.scratch,
                    );
                }
            }
        }
        if nx > 1 {
            for off in 0..ny * nz {
                strided_pass(
                    data,
                    off,
                    ny * nz,
                    nx,
                    &plans[0],
                    &mut self.line,
                    &mut self.scratch,
                );
            }
        }
        let s = self.scale;
        data.iter_mut().for_each(|v| *v *= s);
    }
}

fn strided_pass(
    data: &mut [Complex64],
    base: usize,
    stride: usize,
    n: usize,
    plan: &Arc<dyn Fft<f64>>,
    line: &mut [Complex64],
    scratch: &mut [Complex64],
) {
    let line = &mut line[..n];
    for (i, v) in line.iter_mut().enumerate() {
        *v = data[base + i * stride];
    }
    plan.process_with_scratch(line, scratch);
    for (i, v) in line.iter().enumerate() {
        data[base + i * stride] = *v;
    }
}
