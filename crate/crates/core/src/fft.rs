//! Two-dimensional FFT on row-major grids.

use std::fmt;
use std::sync::Arc;

use ndarray::Array2;
use num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::scalar::Scalar;

const COLUMN_BLOCK: usize = 16;

/// Planned forward and inverse 2-D transforms for one grid size.
///
/// Both directions are unnormalized; `inverse(forward(x)) == h * w * x`.
#[derive(Clone)]
pub struct Fft2d<T: Scalar> {
    height: usize,
    width: usize,
    row_fwd: Arc<dyn Fft<T>>,
    row_inv: Arc<dyn Fft<T>>,
    col_fwd: Arc<dyn Fft<T>>,
    col_inv: Arc<dyn Fft<T>>,
}

impl<T: Scalar> fmt::Debug for Fft2d<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Fft2d")
            .field("height", &self.height)
            .field("width", &self.width)
            .finish()
    }
}

impl<T: Scalar> Fft2d<T> {
    pub fn new(height: usize, width: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            height,
            width,
            row_fwd: planner.plan_fft_forward(width),
            row_inv: planner.plan_fft_inverse(width),
            col_fwd: planner.plan_fft_forward(height),
            col_inv: planner.plan_fft_inverse(height),
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn forward(&self, data: &mut Array2<Complex<T>>) {
        self.run(data, &self.row_fwd, &self.col_fwd);
    }

    pub fn inverse(&self, data: &mut Array2<Complex<T>>) {
        self.run(data, &self.row_inv, &self.col_inv);
    }

    /// Forward transform of a real grid.
    pub fn forward_real(&self, data: &Array2<T>) -> Array2<Complex<T>> {
        let mut out = data.mapv(|v| Complex::new(v, T::zero()));
        self.forward(&mut out);
        out
    }

    fn run(&self, data: &mut Array2<Complex<T>>, rows: &Arc<dyn Fft<T>>, cols: &Arc<dyn Fft<T>>) {
        assert_eq!(data.dim(), (self.height, self.width), "grid size does not match plan");
        if !data.is_standard_layout() {
            *data = data.as_standard_layout().into_owned();
        }
        let (h, w) = (self.height, self.width);
        let buf = data.as_slice_mut().expect("standard layout");
        rows.process(buf);
        // Columns go through a small strip buffer so the working set stays in cache.
        let mut strip = vec![Complex::new(T::zero(), T::zero()); COLUMN_BLOCK.min(w) * h];
        for cb in (0..w).step_by(COLUMN_BLOCK) {
            let bw = COLUMN_BLOCK.min(w - cb);
            for r in 0..h {
                for (c, v) in buf[r * w + cb..r * w + cb + bw].iter().enumerate() {
                    strip[c * h + r] = *v;
                }
            }
            cols.process(&mut strip[..bw * h]);
            for r in 0..h {
                for (c, v) in buf[r * w + cb..r * w + cb + bw].iter_mut().enumerate() {
                    *v = strip[c * h + r];
                }
            }
        }
    }
}

/// Signed integer frequency of DFT bin `i` for a transform of length `n`.
///
/// Bins at or above `n/2` map to negative frequencies, so the Nyquist bin of
/// an even-length transform is `-n/2`.
pub fn signed_frequency(i: usize, n: usize) -> isize {
    if i < n / 2 {
        i as isize
    } else {
        i as isize - n as isize
    }
}
