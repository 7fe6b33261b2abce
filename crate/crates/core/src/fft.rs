//! 2-D complex FFTs over row-major `n x m` planes.
//!
//! Forward transforms are unnormalized; inverse transforms scale by `1/(m n)`.

use std::cell::RefCell;
use std::sync::Arc;

use rustfft::num_complex::Complex32;
use rustfft::{Fft, FftPlanner};

thread_local! {
    static PLANNER: RefCell<FftPlanner<f32>> = RefCell::new(FftPlanner::new());
}

pub(crate) struct Fft2 {
    m: usize,
    n: usize,
    row: Arc<dyn Fft<f32>>,
    col: Arc<dyn Fft<f32>>,
    inverse: bool,
}

impl Fft2 {
    pub(crate) fn forward(m: usize, n: usize) -> Self {
        Self::plan(m, n, false)
    }

    pub(crate) fn inverse(m: usize, n: usize) -> Self {
        Self::plan(m, n, true)
    }

    fn plan(m: usize, n: usize, inverse: bool) -> Self {
        PLANNER.with(|p| {
            let mut p = p.borrow_mut();
            let (row, col) = if inverse {
                (p.plan_fft_inverse(m), p.plan_fft_inverse(n))
            } else {
                (p.plan_fft_forward(m), p.plan_fft_forward(n))
            };
            Fft2 {
                m,
                n,
                row,
                col,
                inverse,
            }
        })
    }

    /// Transform one plane in place.
    pub(crate) fn process(&self, plane: &mut [Complex32]) {
        debug_assert_eq!(plane.len(), self.m * self.n);
        self.row.process(plane);
        let mut column = vec![Complex32::new(0.0, 0.0); self.n];
        for c in 0..self.m {
            for (r, v) in column.iter_mut().enumerate() {
                *v = plane[r * self.m + c];
            }
            self.col.process(&mut column);
            for (r, v) in column.iter().enumerate() {
                plane[r * self.m + c] = *v;
            }
        }
        if self.inverse {
            let scale = 1.0 / (self.m * self.n) as f32;
            plane.iter_mut().for_each(|v| *v *= scale);
        }
    }

    pub(crate) fn real_forward(&self, plane: &[f32]) -> Vec<Complex32> {
        let mut buf: Vec<Complex32> = plane.iter().map(|&v| Complex32::new(v, 0.0)).collect();
        self.process(&mut buf);
        buf
    }
}
