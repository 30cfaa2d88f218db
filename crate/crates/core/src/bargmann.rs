//! Bargmann transform
//!
//! ```text
//! Tu(x, ξ) = 2^{-1/2} π^{-3/4} ∫ e^{-iyξ} e^{-(x-y)²/2} u(y) dy
//! ```
//!
//! evaluated by the trapezoid rule on the field's grid. The Gaussian window is
//! truncated at [`WINDOW_HALF_WIDTH`] standard deviations. Whole phase-space
//! maps are computed one `x`-row at a time: the windowed samples go through a
//! chirp-z transform that lands directly on the requested `ξ` axis.
//! [`bargmann_point`] is an independent direct quadrature used to cross-check
//! the fast path.

use std::f64::consts::PI;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{ChirpZ, Domain, GridSpec1D, SampledField, SignalSpec};

/// Window truncation in units of the Gaussian's standard deviation.
pub const WINDOW_HALF_WIDTH: f64 = 8.0;

fn prefactor() -> f64 {
    2f64.powf(-0.5) * PI.powf(-0.75)
}

/// Uniformly spaced axis `min, …, max` with `count` nodes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Axis {
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

impl Axis {
    pub fn new(min: f64, max: f64, count: usize) -> Result<Self> {
        let axis = Self { min, max, count };
        axis.validate()?;
        Ok(axis)
    }

    /// `count` nodes spanning `[-radius, radius]`.
    pub fn symmetric(radius: f64, count: usize) -> Result<Self> {
        Self::new(-radius, radius, count)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.min.is_finite() && self.max.is_finite()) || self.min >= self.max {
            return Err(Error::InvalidParameter(format!(
                "axis range [{}, {}] must be finite and increasing",
                self.min, self.max
            )));
        }
        if self.count < 16 {
            return Err(Error::InvalidParameter(format!(
                "axis needs at least 16 nodes, got {}",
                self.count
            )));
        }
        Ok(())
    }

    pub fn step(&self) -> f64 {
        (self.max - self.min) / (self.count - 1) as f64
    }

    pub fn value(&self, i: usize) -> f64 {
        // symmetric evaluation keeps ±r nodes exact mirror images
        let t = i as f64 / (self.count - 1) as f64;
        self.min * (1.0 - t) + self.max * t
    }

    pub fn values(&self) -> Vec<f64> {
        (0..self.count).map(|i| self.value(i)).collect()
    }
}

/// Rectangular grid of phase-space points `z = (x, ξ)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhaseGrid {
    pub x: Axis,
    pub xi: Axis,
}

impl PhaseGrid {
    pub fn new(x: Axis, xi: Axis) -> Result<Self> {
        x.validate()?;
        xi.validate()?;
        Ok(Self { x, xi })
    }

    /// Square grid `[-radius, radius]²` with `count` nodes per axis.
    pub fn square(radius: f64, count: usize) -> Result<Self> {
        Self::new(Axis::symmetric(radius, count)?, Axis::symmetric(radius, count)?)
    }

    pub fn len(&self) -> usize {
        self.x.count * self.xi.count
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Values of `Tu` (or of a symbol) on a [`PhaseGrid`], stored row-major with
/// `x` as the outer index.
#[derive(Clone, Debug, PartialEq)]
pub struct PhaseMap {
    grid: PhaseGrid,
    values: Vec<Complex64>,
    provenance: String,
}

impl PhaseMap {
    pub fn new(grid: PhaseGrid, values: Vec<Complex64>, provenance: impl Into<String>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} values for a {}x{} phase grid",
                values.len(),
                grid.x.count,
                grid.xi.count
            )));
        }
        Ok(Self {
            grid,
            values,
            provenance: provenance.into(),
        })
    }

    pub fn grid(&self) -> &PhaseGrid {
        &self.grid
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn provenance(&self) -> &str {
        &self.provenance
    }

    pub fn get(&self, i: usize, k: usize) -> Complex64 {
        self.values[i * self.grid.xi.count + k]
    }

    pub fn node(&self, i: usize, k: usize) -> (f64, f64) {
        (self.grid.x.value(i), self.grid.xi.value(k))
    }

    pub fn magnitudes(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.norm()).collect()
    }

    pub fn max_magnitude(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// Discrete `∫∫ |Tu|² dx dξ` (trapezoid weights).
    pub fn mass(&self) -> f64 {
        let (nx, nk) = (self.grid.x.count, self.grid.xi.count);
        let weight = |i: usize, n: usize| if i == 0 || i + 1 == n { 0.5 } else { 1.0 };
        let mut total = 0.0;
        for i in 0..nx {
            for k in 0..nk {
                total += weight(i, nx) * weight(k, nk) * self.get(i, k).norm_sqr();
            }
        }
        total * self.grid.x.step() * self.grid.xi.step()
    }

    /// CSV with columns `x, xi, abs, arg`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("x,xi,abs,arg\n");
        for i in 0..self.grid.x.count {
            for k in 0..self.grid.xi.count {
                let (x, xi) = self.node(i, k);
                let v = self.get(i, k);
                out.push_str(&format!("{x:e},{xi:e},{:e},{:e}\n", v.norm(), v.arg()));
            }
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv())?;
        Ok(())
    }

    /// Little-endian binary block: six `f64` header words
    /// `[x_count, xi_count, x_min, x_max, xi_min, xi_max]` followed by the
    /// row-major values as `(re, im)` pairs of `f64`.
    pub fn to_binary(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(48 + 16 * self.values.len());
        let g = &self.grid;
        for word in [
            g.x.count as f64,
            g.xi.count as f64,
            g.x.min,
            g.x.max,
            g.xi.min,
            g.xi.max,
        ] {
            out.extend_from_slice(&word.to_le_bytes());
        }
        for v in &self.values {
            out.extend_from_slice(&v.re.to_le_bytes());
            out.extend_from_slice(&v.im.to_le_bytes());
        }
        out
    }

    pub fn from_binary(bytes: &[u8], provenance: impl Into<String>) -> Result<Self> {
        let mut reader = bytes;
        let mut word = || -> Result<f64> {
            let mut buf = [0u8; 8];
            reader
                .read_exact(&mut buf)
                .map_err(|_| Error::FileFormat("truncated phase map block".into()))?;
            Ok(f64::from_le_bytes(buf))
        };
        let count = |v: f64| -> Result<usize> {
            if v.fract() != 0.0 || v < 0.0 || v > u32::MAX as f64 {
                return Err(Error::FileFormat(format!("bad axis count {v}")));
            }
            Ok(v as usize)
        };
        let nx = count(word()?)?;
        let nk = count(word()?)?;
        let (x_min, x_max, xi_min, xi_max) = (word()?, word()?, word()?, word()?);
        let grid = PhaseGrid::new(Axis::new(x_min, x_max, nx)?, Axis::new(xi_min, xi_max, nk)?)
            .map_err(|e| Error::FileFormat(e.to_string()))?;
        let mut values = Vec::with_capacity(grid.len());
        for _ in 0..grid.len() {
            let re = word()?;
            let im = word()?;
            values.push(Complex64::new(re, im));
        }
        if !reader.is_empty() {
            return Err(Error::FileFormat("trailing bytes after phase map".into()));
        }
        Self::new(grid, values, provenance)
    }

    pub fn write_binary(&self, path: &Path) -> Result<()> {
        fs::File::create(path)?.write_all(&self.to_binary())?;
        Ok(())
    }
}

fn check_coverage(grid: &GridSpec1D, x_min: f64, x_max: f64, xi_abs_max: f64) -> Result<()> {
    let l = grid.half_width();
    if x_min - WINDOW_HALF_WIDTH < -l || x_max + WINDOW_HALF_WIDTH > l {
        return Err(Error::WindowOverrun(format!(
            "x range [{x_min}, {x_max}] plus window {WINDOW_HALF_WIDTH} leaves [-{l}, {l}]"
        )));
    }
    if xi_abs_max > grid.nyquist() {
        return Err(Error::NyquistViolation(format!(
            "|ξ| up to {xi_abs_max} exceeds π/h = {}",
            grid.nyquist()
        )));
    }
    Ok(())
}

/// `Tu` on every node of `pg`.
pub fn bargmann_transform(u: &SampledField, pg: &PhaseGrid) -> Result<PhaseMap> {
    u.expect_domain(Domain::Space)?;
    let grid = *u.grid();
    check_coverage(&grid, pg.x.min, pg.x.max, pg.xi.min.abs().max(pg.xi.max.abs()))?;

    let h = grid.spacing();
    let n = grid.len() as isize;
    let half = (WINDOW_HALF_WIDTH / h).ceil() as isize;
    let window_len = (2 * half + 1) as usize;
    let (xi0, dxi) = (pg.xi.min, pg.xi.step());
    let czt = ChirpZ::new(window_len, pg.xi.count, h, dxi);
    let scale = prefactor() * h;
    let samples = u.values();

    let rows: Vec<Vec<Complex64>> = (0..pg.x.count)
        .into_par_iter()
        .map(|i| {
            let x = pg.x.value(i);
            let start = ((x + grid.half_width()) / h).round() as isize - half;
            let windowed: Vec<Complex64> = (0..window_len as isize)
                .map(|offset| {
                    let j = start + offset;
                    if j < 0 || j >= n {
                        return Complex64::new(0.0, 0.0);
                    }
                    let y = grid.point(j as usize);
                    let d = x - y;
                    samples[j as usize] * (scale * (-0.5 * d * d).exp())
                })
                .collect();
            let y0 = -grid.half_width() + start as f64 * h;
            czt.apply(&windowed, y0, h, xi0, dxi)
        })
        .collect();

    PhaseMap::new(
        *pg,
        rows.into_iter().flatten().collect(),
        format!("bargmann transform of a field on {grid}, window {WINDOW_HALF_WIDTH}"),
    )
}

/// `Tu(x, ξ)` by direct quadrature over the window nodes.
pub fn bargmann_point(u: &SampledField, z: (f64, f64)) -> Result<Complex64> {
    u.expect_domain(Domain::Space)?;
    let grid = *u.grid();
    let (x, xi) = z;
    check_coverage(&grid, x, x, xi.abs())?;
    let h = grid.spacing();
    let lo = ((x - WINDOW_HALF_WIDTH + grid.half_width()) / h).ceil().max(0.0) as usize;
    let hi = (((x + WINDOW_HALF_WIDTH + grid.half_width()) / h).floor() as usize).min(grid.len() - 1);
    let sum: Complex64 = (lo..=hi)
        .map(|j| {
            let y = grid.point(j);
            let d = x - y;
            u.values()[j] * Complex64::from_polar((-0.5 * d * d).exp(), -y * xi)
        })
        .sum();
    Ok(sum * (prefactor() * h))
}

fn log_factorial(n: usize) -> f64 {
    (1..=n).map(|k| (k as f64).ln()).sum()
}

/// Closed-form `|Tu(z)|` for the signals whose transform is a Gaussian
/// integral.
///
/// `DeltaApprox` accepts `sigma = 0`, which gives the exact transform of δ.
pub fn closed_form_magnitude(kind: &SignalSpec, z: (f64, f64)) -> Result<f64> {
    let (x, xi) = z;
    let c = prefactor();
    let value = match *kind {
        SignalSpec::Constant => PI.powf(-0.25) * (-0.5 * xi * xi).exp(),
        SignalSpec::Chirp { lambda } => {
            let q = 1.0 + lambda * lambda;
            let d = xi - lambda * x;
            PI.powf(-0.25) * q.powf(-0.25) * (-d * d / (2.0 * q)).exp()
        }
        SignalSpec::Gaussian { sigma } => {
            let s2 = sigma * sigma;
            let q = 1.0 + s2;
            c * sigma * (2.0 * PI / q).sqrt() * (-(x * x + s2 * xi * xi) / (2.0 * q)).exp()
        }
        SignalSpec::DeltaApprox { sigma } => {
            if sigma < 0.0 {
                return Err(Error::InvalidParameter(format!("width {sigma}")));
            }
            let s2 = sigma * sigma;
            let q = 1.0 + s2;
            c / q.sqrt() * (-(x * x + s2 * xi * xi) / (2.0 * q)).exp()
        }
        SignalSpec::Hermite { n } => {
            // T maps h_n to (x - iξ)^n / sqrt(2^n n!) times T h_0
            let r2 = x * x + xi * xi;
            if n == 0 {
                c * PI.powf(0.25) * (-r2 / 4.0).exp()
            } else if r2 == 0.0 {
                0.0
            } else {
                let log_mag = -0.5 * (2.0 * PI).ln() - r2 / 4.0 + 0.5 * n as f64 * (r2 / 2.0).ln()
                    - 0.5 * log_factorial(n);
                log_mag.exp()
            }
        }
        SignalSpec::File { .. } => {
            return Err(Error::Unsupported(
                "no closed-form transform for file signals".into(),
            ))
        }
    };
    Ok(value)
}
