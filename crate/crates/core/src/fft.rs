//! Thin wrappers over `rustfft` with a per-thread plan cache.

use std::cell::RefCell;

use num_complex::Complex64;
use rustfft::FftPlanner;

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

/// In-place forward transform, `X_k = (1/m) Σ_j x_j e^{-2πijk/m}` (normalized).
pub fn forward(buf: &mut [Complex64]) {
    let m = buf.len();
    PLANNER.with(|p| p.borrow_mut().plan_fft_forward(m).process(buf));
    let s = 1.0 / m as f64;
    for v in buf.iter_mut() {
        *v *= s;
    }
}

/// In-place inverse transform, `x_j = Σ_k X_k e^{2πijk/m}` (unnormalized).
pub fn inverse(buf: &mut [Complex64]) {
    let m = buf.len();
    PLANNER.with(|p| p.borrow_mut().plan_fft_inverse(m).process(buf));
}

/// Smallest power of two that is `>= n` (and at least 8).
pub fn grid_size(n: usize) -> usize {
    n.max(8).next_power_of_two()
}
