//! Littlewood–Paley partitions in frequency and in phase space, Kohn–Nirenberg
//! quantization of grid symbols, and the weighted Sobolev scale
//! `Q^s = H^s ∩ ℱH^s`.
//!
//! The base bump is
//!
//! ```text
//! ψ₀(ξ) = g(2 - |ξ|),   g(t) = B(t) / (B(t) + B(1 - t)),   B(t) = e^{-1/t} (t > 0), 0 else
//! ```
//!
//! so `ψ₀ = 1` on `|ξ| ≤ 1` and `ψ₀ = 0` on `|ξ| ≥ 2`. Dyadic pieces are
//! `ψ_k(ξ) = ψ₀(2^{-k}ξ) - ψ₀(2^{1-k}ξ)`, supported in
//! `2^{k-1} ≤ |ξ| ≤ 2^{k+1}`. The phase-space partition uses the same profile
//! in `|(x, ξ)|`.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::bargmann::{Axis, PhaseGrid, PhaseMap};
use crate::error::{Error, Result};
use crate::fit::{log_log_fit, LineFit};
use crate::grid::{forward_in_place, fourier_multiplier, inverse_in_place, Domain, GridSpec1D, SampledField};

fn smooth_step_base(t: f64) -> f64 {
    if t > 0.0 {
        (-1.0 / t).exp()
    } else {
        0.0
    }
}

/// `g(t)`: 0 for `t ≤ 0`, 1 for `t ≥ 1`, smooth in between.
pub fn smooth_step(t: f64) -> f64 {
    let a = smooth_step_base(t);
    let b = smooth_step_base(1.0 - t);
    a / (a + b)
}

/// `ψ₀(ξ)` evaluated at `|ξ| = r`.
pub fn bump(r: f64) -> f64 {
    smooth_step(2.0 - r.abs())
}

/// Frequency-side partition `ψ_0, …, ψ_K`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DyadicPartition {
    levels: usize,
}

impl DyadicPartition {
    pub fn new(levels: usize) -> Self {
        Self { levels }
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    /// `Ψ_k(ξ) = ψ₀(2^{-k}ξ)`.
    pub fn cumulative(&self, k: usize, xi: f64) -> f64 {
        bump(scale_down(xi, k))
    }

    pub fn psi(&self, k: usize, xi: f64) -> f64 {
        if k == 0 {
            bump(xi)
        } else {
            bump(scale_down(xi, k)) - bump(scale_down(xi, k - 1))
        }
    }

    /// Highest level whose outer radius `2^k` lies inside `[0, π/h]`.
    pub fn band_limit(grid: &GridSpec1D) -> usize {
        grid.nyquist().log2().floor().max(0.0) as usize
    }
}

/// Phase-space partition `φ_0, …, φ_K`, radial in `|(x, ξ)|`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PhasePartition {
    levels: usize,
}

impl PhasePartition {
    pub fn new(levels: usize) -> Self {
        Self { levels }
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    /// `Φ_k(x, ξ) = φ₀(2^{-k}x, 2^{-k}ξ)`.
    pub fn cumulative(&self, k: usize, x: f64, xi: f64) -> f64 {
        bump(scale_down(x.hypot(xi), k))
    }

    pub fn phi(&self, k: usize, x: f64, xi: f64) -> f64 {
        let r = x.hypot(xi);
        if k == 0 {
            bump(r)
        } else {
            bump(scale_down(r, k)) - bump(scale_down(r, k - 1))
        }
    }

    /// Highest level with `2^k ≤ min(L, π/h)/2`, the part of phase space the
    /// grid resolves with room for the bump's outer half.
    pub fn resolvable_levels(grid: &GridSpec1D) -> Option<usize> {
        let reach = grid.half_width().min(grid.nyquist()) / 2.0;
        if reach < 1.0 {
            None
        } else {
            Some(reach.log2().floor() as usize)
        }
    }

    pub fn level_symbol(&self, k: usize) -> FnSymbol<impl Fn(f64, f64) -> Complex64 + Sync + '_> {
        FnSymbol(move |x, xi| Complex64::new(self.phi(k, x, xi), 0.0))
    }

    pub fn cumulative_symbol(&self, k: usize) -> FnSymbol<impl Fn(f64, f64) -> Complex64 + Sync + '_> {
        FnSymbol(move |x, xi| Complex64::new(self.cumulative(k, x, xi), 0.0))
    }
}

fn scale_down(v: f64, k: usize) -> f64 {
    v * 2f64.powi(-(k as i32))
}

/// A symbol that can produce its values on one grid row `x = x_j` at a time.
///
/// Rows are generated on demand so that `N × N` symbols never have to be
/// stored.
pub trait RowSymbol: Sync {
    /// Writes `p(x_j, ξ_m)` for every frequency index `m`.
    fn fill_row(&self, grid: &GridSpec1D, j: usize, row: &mut [Complex64]);

    /// Grid the symbol was sampled on, if it is tied to one.
    fn sampled_on(&self) -> Option<&GridSpec1D> {
        None
    }
}

/// Closure symbol `p(x, ξ)`.
pub struct FnSymbol<F>(pub F);

impl<F> RowSymbol for FnSymbol<F>
where
    F: Fn(f64, f64) -> Complex64 + Sync,
{
    fn fill_row(&self, grid: &GridSpec1D, j: usize, row: &mut [Complex64]) {
        let x = grid.point(j);
        for (m, v) in row.iter_mut().enumerate() {
            *v = (self.0)(x, grid.frequency(m));
        }
    }
}

/// Symbol values stored on the space × frequency grid of a field.
#[derive(Clone, Debug, PartialEq)]
pub struct GridSymbol {
    grid: GridSpec1D,
    values: Vec<Complex64>,
    label: String,
}

impl GridSymbol {
    pub fn new(grid: GridSpec1D, values: Vec<Complex64>, label: impl Into<String>) -> Result<Self> {
        let n = grid.len();
        if values.len() != n * n {
            return Err(Error::DimensionMismatch(format!(
                "{} symbol values for a {n}x{n} grid",
                values.len()
            )));
        }
        if values.iter().any(|v| !(v.re.is_finite() && v.im.is_finite())) {
            return Err(Error::InvalidParameter("symbol has non-finite values".into()));
        }
        Ok(Self {
            grid,
            values,
            label: label.into(),
        })
    }

    pub fn from_fn(grid: GridSpec1D, label: impl Into<String>, p: impl Fn(f64, f64) -> Complex64 + Sync) -> Self {
        Self::from_rows(grid, label, &FnSymbol(p))
    }

    /// Materializes any row symbol.
    pub fn from_rows(grid: GridSpec1D, label: impl Into<String>, p: &dyn RowSymbol) -> Self {
        let n = grid.len();
        let mut values = vec![Complex64::new(0.0, 0.0); n * n];
        values
            .par_chunks_mut(n)
            .enumerate()
            .for_each(|(j, row)| p.fill_row(&grid, j, row));
        Self {
            grid,
            values,
            label: label.into(),
        }
    }

    pub fn grid(&self) -> &GridSpec1D {
        &self.grid
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    /// `p(x_j, ξ_m)`.
    pub fn get(&self, j: usize, m: usize) -> Complex64 {
        self.values[j * self.grid.len() + m]
    }

    /// Same values laid out as a [`PhaseMap`], for the map serializers.
    pub fn to_phase_map(&self) -> Result<PhaseMap> {
        let g = &self.grid;
        let n = g.len();
        let pg = PhaseGrid::new(
            Axis::new(g.point(0), g.point(n - 1), n)?,
            Axis::new(g.frequency(0), g.frequency(n - 1), n)?,
        )?;
        PhaseMap::new(pg, self.values.clone(), self.label.clone())
    }
}

impl RowSymbol for GridSymbol {
    fn fill_row(&self, grid: &GridSpec1D, j: usize, row: &mut [Complex64]) {
        let n = grid.len();
        row.copy_from_slice(&self.values[j * n..(j + 1) * n]);
    }

    fn sampled_on(&self) -> Option<&GridSpec1D> {
        Some(&self.grid)
    }
}

fn roots_of_unity(n: usize) -> Vec<Complex64> {
    (0..n)
        .map(|k| Complex64::from_polar(1.0, 2.0 * PI * k as f64 / n as f64))
        .collect()
}

/// Kohn–Nirenberg quantization
/// `p(x, D)f(x_j) = (2π)^{-1} (π/L) Σ_m e^{i x_j ξ_m} p(x_j, ξ_m) f̂(ξ_m)`.
///
/// One row of the symbol per output point, `O(N²)` in total; zero symbol
/// entries are skipped.
pub fn kn_quantize(p: &dyn RowSymbol, f: &SampledField) -> Result<SampledField> {
    f.expect_domain(Domain::Space)?;
    let grid = *f.grid();
    if let Some(g) = p.sampled_on() {
        if *g != grid {
            return Err(Error::DimensionMismatch(format!(
                "symbol sampled on {g}, field on {grid}"
            )));
        }
    }
    let n = grid.len();
    let mut spectrum = f.values().to_vec();
    forward_in_place(&grid, &mut spectrum);
    // e^{i x_j ξ_m} = (-1)^{j+m} ω^{jm} with ω = e^{2πi/N}
    let scale = grid.freq_spacing() / (2.0 * PI);
    for (m, v) in spectrum.iter_mut().enumerate() {
        *v *= if m % 2 == 0 { scale } else { -scale };
    }
    let roots = roots_of_unity(n);
    let zero = Complex64::new(0.0, 0.0);

    let values: Vec<Complex64> = (0..n)
        .into_par_iter()
        .map_init(
            || vec![zero; n],
            |row, j| {
                p.fill_row(&grid, j, row);
                let mut acc = zero;
                let mut idx = 0usize;
                for (pm, gm) in row.iter().zip(&spectrum) {
                    if *pm != zero {
                        acc += pm * gm * roots[idx];
                    }
                    idx += j;
                    if idx >= n {
                        idx -= n;
                    }
                }
                if j % 2 == 1 {
                    -acc
                } else {
                    acc
                }
            },
        )
        .collect();
    Ok(f.with_values(values))
}

fn check_level(grid: &GridSpec1D, part: &DyadicPartition, k: usize) -> Result<()> {
    let band = DyadicPartition::band_limit(grid);
    let max = part.levels().min(band);
    if k > max {
        return Err(Error::LevelOutOfBand { level: k, max });
    }
    Ok(())
}

/// `ψ_k(D)f`.
pub fn lp_project(f: &SampledField, part: &DyadicPartition, k: usize) -> Result<SampledField> {
    check_level(f.grid(), part, k)?;
    fourier_multiplier(f, |xi| Complex64::new(part.psi(k, xi), 0.0))
}

/// `Ψ_K(D)f`.
pub fn lp_lowpass(f: &SampledField, part: &DyadicPartition, k: usize) -> Result<SampledField> {
    check_level(f.grid(), part, k)?;
    fourier_multiplier(f, |xi| Complex64::new(part.cumulative(k, xi), 0.0))
}

fn japanese(v: f64) -> f64 {
    (1.0 + v * v).sqrt()
}

/// `‖⟨x⟩^s f‖_{L²}`.
pub fn weighted_space_norm(f: &SampledField, s: f64) -> f64 {
    let g = f.grid();
    let sum: f64 = f
        .values()
        .iter()
        .enumerate()
        .map(|(j, v)| japanese(g.point(j)).powf(2.0 * s) * v.norm_sqr())
        .sum();
    (g.spacing() * sum).sqrt()
}

/// `‖⟨D⟩^s f‖_{L²}`.
pub fn sobolev_norm(f: &SampledField, s: f64) -> f64 {
    let g = *f.grid();
    let mut spectrum = f.values().to_vec();
    forward_in_place(&g, &mut spectrum);
    let sum: f64 = spectrum
        .iter()
        .enumerate()
        .map(|(m, v)| japanese(g.frequency(m)).powf(2.0 * s) * v.norm_sqr())
        .sum();
    (g.freq_spacing() / (2.0 * PI) * sum).sqrt()
}

/// `‖f‖_{Q^s} = max(‖⟨D⟩^s f‖, ‖⟨x⟩^s f‖)`; at `s = 0` both branches are the
/// L² norm.
pub fn qs_norm(f: &SampledField, s: f64) -> f64 {
    sobolev_norm(f, s).max(weighted_space_norm(f, s))
}

/// `sup_j 2^{rj} ‖ψ_j(D)f‖_{L^∞}` over the levels the grid resolves.
pub fn zygmund_norm(f: &SampledField, r: f64, part: &DyadicPartition) -> Result<f64> {
    f.expect_domain(Domain::Space)?;
    if !(r > 0.0) {
        return Err(Error::InvalidParameter(format!("Zygmund order must be positive, got {r}")));
    }
    let grid = *f.grid();
    let top = part.levels().min(DyadicPartition::band_limit(&grid));
    let mut spectrum = f.values().to_vec();
    forward_in_place(&grid, &mut spectrum);
    let norm = (0..=top)
        .into_par_iter()
        .map(|j| {
            let mut piece: Vec<Complex64> = spectrum
                .iter()
                .enumerate()
                .map(|(m, v)| v * part.psi(j, grid.frequency(m)))
                .collect();
            inverse_in_place(&grid, &mut piece);
            let sup = piece.iter().map(|v| v.norm()).fold(0.0, f64::max);
            2f64.powf(r * j as f64) * sup
        })
        .reduce(|| 0.0, f64::max);
    Ok(norm)
}

/// Per-level norms `‖φ_j(x, D)f‖_{L²}` of the phase-space decomposition.
#[derive(Clone, Debug, PartialEq)]
pub struct SquareFunction {
    pub norms: Vec<f64>,
    /// Partition levels beyond the resolvable part of phase space.
    pub excluded: Vec<usize>,
}

impl SquareFunction {
    /// `Σ_j 2^{2js} ‖φ_j(x, D)f‖²`.
    pub fn weighted_sum(&self, s: f64) -> f64 {
        self.norms
            .iter()
            .enumerate()
            .map(|(j, n)| 2f64.powf(2.0 * s * j as f64) * n * n)
            .sum()
    }
}

pub fn square_function(f: &SampledField, part: &PhasePartition) -> Result<SquareFunction> {
    let cap = PhasePartition::resolvable_levels(f.grid()).ok_or_else(|| {
        Error::InvalidParameter(format!("grid {} resolves no phase-space level", f.grid()))
    })?;
    let top = part.levels().min(cap);
    let norms = (0..=top)
        .map(|j| kn_quantize(&part.level_symbol(j), f).map(|v| v.norm_l2()))
        .collect::<Result<Vec<_>>>()?;
    Ok(SquareFunction {
        norms,
        excluded: (top + 1..=part.levels()).collect(),
    })
}

/// `Σ_j 2^{2js} ‖φ_j(x, D)f‖² / ‖f‖²_{Q^s}`.
pub fn lp_sum_ratio(f: &SampledField, s: f64, part: &PhasePartition) -> Result<f64> {
    let sq = square_function(f, part)?;
    let q = qs_norm(f, s);
    Ok(sq.weighted_sum(s) / (q * q))
}

/// `‖ψ₀(εD)f‖_{L^∞} / ‖f‖_{L^∞}`.
pub fn lowpass_sup_ratio(f: &SampledField, eps: f64) -> Result<f64> {
    let low = fourier_multiplier(f, |xi| Complex64::new(bump(eps * xi), 0.0))?;
    Ok(low.norm_sup() / f.norm_sup())
}

/// `‖(I - ψ₀(εD))f‖_{L^∞}`.
pub fn highpass_sup(f: &SampledField, eps: f64) -> Result<f64> {
    let high = fourier_multiplier(f, |xi| Complex64::new(1.0 - bump(eps * xi), 0.0))?;
    Ok(high.norm_sup())
}

/// Slope of `ln ‖(I - ψ₀(εD))f‖_{L^∞}` against `ln ε`.
pub fn highpass_decay_fit(f: &SampledField, epsilons: &[f64]) -> Result<LineFit> {
    let sups = epsilons
        .iter()
        .map(|&e| highpass_sup(f, e))
        .collect::<Result<Vec<_>>>()?;
    Ok(log_log_fit(epsilons, &sups))
}

/// `‖φ₀(εx, εD)u‖_{L^∞} / ‖u‖_{L^∞}`.
pub fn phase_localization_sup_ratio(u: &SampledField, eps: f64) -> Result<f64> {
    let p = FnSymbol(|x: f64, xi: f64| Complex64::new(bump(eps * x.hypot(xi)), 0.0));
    Ok(kn_quantize(&p, u)?.norm_sup() / u.norm_sup())
}
