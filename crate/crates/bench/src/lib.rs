//! Inputs shared by the benchmarks.

use num_complex::Complex64;
use phasefront_core::grid::{GridSpec1D, SampledField};

/// Square grid with `n` points.
pub fn grid(n: usize) -> GridSpec1D {
    GridSpec1D::square(n).expect("power-of-two grid")
}

/// Modulated Gaussian packet centred at `x0` with frequency `eta`.
pub fn packet(grid: GridSpec1D, x0: f64, eta: f64) -> SampledField {
    SampledField::from_fn(grid, move |x| Complex64::from_polar((-(x - x0).powi(2) / 2.0).exp(), eta * x))
}
