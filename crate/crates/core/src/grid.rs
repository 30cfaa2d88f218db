//! Uniform one-dimensional grids, signal synthesis and the discrete Fourier
//! transform normalized as `f̂(ξ) = ∫ e^{-ixξ} f(x) dx`.
//!
//! A grid of `N` points covers `[-L, L)` with spacing `h = 2L/N`. Its dual
//! grid carries the centered frequencies `ξ_m = -π/h + m·π/L`, so that
//! frequency index `N/2` is the zero frequency.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform grid on `[-L, L)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec1D {
    half_width: f64,
    n: usize,
}

impl GridSpec1D {
    pub fn new(half_width: f64, n: usize) -> Result<Self> {
        if !(half_width.is_finite() && half_width > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "grid half-width must be positive and finite, got {half_width}"
            )));
        }
        if n < 8 || !n.is_power_of_two() {
            return Err(Error::InvalidParameter(format!(
                "sample count must be a power of two >= 8, got {n}"
            )));
        }
        Ok(Self { half_width, n })
    }

    /// Grid whose spatial and frequency extents coincide (`L = π/h`).
    ///
    /// Phase-space rotations map such a grid's box onto itself, which is what
    /// harmonic-oscillator evolutions need.
    pub fn square(n: usize) -> Result<Self> {
        Self::new((PI * n as f64 / 2.0).sqrt(), n)
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.half_width / self.n as f64
    }

    pub fn point(&self, j: usize) -> f64 {
        -self.half_width + j as f64 * self.spacing()
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.n).map(|j| self.point(j)).collect()
    }

    /// Spacing of the dual grid, `π/L`.
    pub fn freq_spacing(&self) -> f64 {
        PI / self.half_width
    }

    /// Nyquist frequency `π/h`.
    pub fn nyquist(&self) -> f64 {
        PI / self.spacing()
    }

    pub fn frequency(&self, m: usize) -> f64 {
        -self.nyquist() + m as f64 * self.freq_spacing()
    }

    pub fn frequencies(&self) -> Vec<f64> {
        (0..self.n).map(|m| self.frequency(m)).collect()
    }

    /// Index of the grid point nearest to `x` (clamped to the grid).
    pub fn nearest_index(&self, x: f64) -> usize {
        let j = ((x + self.half_width) / self.spacing()).round();
        j.clamp(0.0, (self.n - 1) as f64) as usize
    }
}

impl fmt::Display for GridSpec1D {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "L={},N={}", self.half_width, self.n)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Domain {
    Space,
    Frequency,
}

impl Domain {
    fn name(self) -> &'static str {
        match self {
            Domain::Space => "space",
            Domain::Frequency => "frequency",
        }
    }
}

/// Complex samples of a function on a [`GridSpec1D`] (or of its transform on
/// the dual grid).
#[derive(Clone, Debug, PartialEq)]
pub struct SampledField {
    grid: GridSpec1D,
    values: Vec<Complex64>,
    domain: Domain,
}

impl SampledField {
    pub fn new(grid: GridSpec1D, values: Vec<Complex64>, domain: Domain) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} samples for a grid of {} points",
                values.len(),
                grid.len()
            )));
        }
        Ok(Self {
            grid,
            values,
            domain,
        })
    }

    pub fn from_fn(grid: GridSpec1D, f: impl Fn(f64) -> Complex64) -> Self {
        let values = grid.points().into_iter().map(f).collect();
        Self {
            grid,
            values,
            domain: Domain::Space,
        }
    }

    pub fn zeros(grid: GridSpec1D) -> Self {
        Self {
            grid,
            values: vec![Complex64::new(0.0, 0.0); grid.len()],
            domain: Domain::Space,
        }
    }

    pub fn grid(&self) -> &GridSpec1D {
        &self.grid
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Complex64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<Complex64> {
        self.values
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub(crate) fn expect_domain(&self, expected: Domain) -> Result<()> {
        if self.domain != expected {
            return Err(Error::DomainMismatch {
                expected: expected.name(),
                found: self.domain.name(),
            });
        }
        Ok(())
    }

    /// Same grid and domain, new values.
    pub fn with_values(&self, values: Vec<Complex64>) -> Self {
        debug_assert_eq!(values.len(), self.grid.len());
        Self {
            grid: self.grid,
            values,
            domain: self.domain,
        }
    }

    pub fn map(&self, f: impl Fn(Complex64) -> Complex64) -> Self {
        self.with_values(self.values.iter().map(|&v| f(v)).collect())
    }

    pub fn conj(&self) -> Self {
        self.map(|v| v.conj())
    }

    /// Pointwise product with a real profile sampled on the same grid.
    pub fn scaled_by(&self, profile: &[f64]) -> Self {
        self.with_values(
            self.values
                .iter()
                .zip(profile)
                .map(|(v, p)| v * p)
                .collect(),
        )
    }

    /// Discrete L² norm with the measure of the field's own grid (`h` in
    /// space, `π/L / 2π` in frequency).
    pub fn norm_l2(&self) -> f64 {
        let weight = match self.domain {
            Domain::Space => self.grid.spacing(),
            Domain::Frequency => self.grid.freq_spacing() / (2.0 * PI),
        };
        (weight * self.values.iter().map(|v| v.norm_sqr()).sum::<f64>()).sqrt()
    }

    pub fn norm_sup(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// L² distance to another field on the same grid.
    pub fn distance_l2(&self, other: &SampledField) -> f64 {
        let d: f64 = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum();
        (self.grid.spacing() * d).sqrt()
    }

    /// Reads the two-column `(real, imag)` CSV format. The header line must
    /// name `L` and `N` and match `grid` exactly.
    pub fn read_csv(path: &Path, grid: &GridSpec1D) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let field = Self::parse_csv(&text)?;
        if field.grid.len() != grid.len() || field.grid.half_width() != grid.half_width() {
            return Err(Error::FileFormat(format!(
                "file grid {} does not match requested grid {}",
                field.grid, grid
            )));
        }
        Ok(field)
    }

    pub fn parse_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::FileFormat("empty file".into()))?;
        let (half_width, n) = parse_header(header)?;
        let grid = GridSpec1D::new(half_width, n)
            .map_err(|e| Error::FileFormat(format!("header describes an invalid grid: {e}")))?;
        let mut values = Vec::with_capacity(n);
        for (lineno, line) in lines.enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let mut cols = line.split(',');
            let (re, im) = match (cols.next(), cols.next(), cols.next()) {
                (Some(re), Some(im), None) => (re.trim(), im.trim()),
                _ => {
                    return Err(Error::FileFormat(format!(
                        "line {}: expected two columns",
                        lineno + 2
                    )))
                }
            };
            let parse = |s: &str| {
                s.parse::<f64>().map_err(|_| {
                    Error::FileFormat(format!("line {}: bad number {s:?}", lineno + 2))
                })
            };
            values.push(Complex64::new(parse(re)?, parse(im)?));
        }
        if values.len() != n {
            return Err(Error::FileFormat(format!(
                "header announces {n} samples, found {}",
                values.len()
            )));
        }
        Ok(Self {
            grid,
            values,
            domain: Domain::Space,
        })
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("L={},N={}\n", self.grid.half_width(), self.grid.len());
        for v in &self.values {
            out.push_str(&format!("{:e},{:e}\n", v.re, v.im));
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv())?;
        Ok(())
    }
}

fn parse_header(header: &str) -> Result<(f64, usize)> {
    let mut half_width = None;
    let mut n = None;
    for part in header.trim().split(',') {
        let (key, value) = part
            .split_once('=')
            .ok_or_else(|| Error::FileFormat(format!("bad header entry {part:?}")))?;
        match key.trim() {
            "L" => {
                half_width = Some(
                    value
                        .trim()
                        .parse::<f64>()
                        .map_err(|_| Error::FileFormat(format!("bad L value {value:?}")))?,
                )
            }
            "N" => {
                n = Some(
                    value
                        .trim()
                        .parse::<usize>()
                        .map_err(|_| Error::FileFormat(format!("bad N value {value:?}")))?,
                )
            }
            other => return Err(Error::FileFormat(format!("unknown header key {other:?}"))),
        }
    }
    match (half_width, n) {
        (Some(l), Some(n)) => Ok((l, n)),
        _ => Err(Error::FileFormat("header must name both L and N".into())),
    }
}

/// Test signals.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SignalSpec {
    Constant,
    /// `e^{iλx²/2}`
    Chirp { lambda: f64 },
    /// `e^{-x²/(2σ²)}`
    Gaussian { sigma: f64 },
    /// L²-normalized Hermite function `h_n`.
    Hermite { n: usize },
    /// Unit-mass Gaussian of width σ standing in for δ.
    DeltaApprox { sigma: f64 },
    File { path: PathBuf },
}

impl SignalSpec {
    pub fn validate(&self, grid: &GridSpec1D) -> Result<()> {
        match *self {
            SignalSpec::Chirp { lambda } => {
                if !lambda.is_finite() {
                    return Err(Error::InvalidParameter(format!("chirp slope {lambda}")));
                }
                let top = lambda.abs() * grid.half_width();
                let limit = 0.8 * grid.nyquist();
                if top > limit {
                    return Err(Error::NyquistViolation(format!(
                        "chirp frequency reaches {top:.3} > 0.8·π/h = {limit:.3}"
                    )));
                }
            }
            SignalSpec::Gaussian { sigma } | SignalSpec::DeltaApprox { sigma } => {
                if !(sigma.is_finite() && sigma > 0.0) {
                    return Err(Error::InvalidParameter(format!(
                        "width must be positive, got {sigma}"
                    )));
                }
            }
            SignalSpec::Hermite { n } => {
                if n > grid.len() / 4 {
                    return Err(Error::InvalidParameter(format!(
                        "hermite index {n} exceeds N/4 = {}",
                        grid.len() / 4
                    )));
                }
            }
            SignalSpec::Constant | SignalSpec::File { .. } => {}
        }
        Ok(())
    }

    /// Exact samples of the signal on `grid`.
    pub fn synthesize(&self, grid: &GridSpec1D) -> Result<SampledField> {
        self.validate(grid)?;
        let field = match *self {
            SignalSpec::Constant => SampledField::from_fn(*grid, |_| Complex64::new(1.0, 0.0)),
            SignalSpec::Chirp { lambda } => {
                SampledField::from_fn(*grid, |x| Complex64::from_polar(1.0, 0.5 * lambda * x * x))
            }
            SignalSpec::Gaussian { sigma } => SampledField::from_fn(*grid, |x| {
                Complex64::new((-x * x / (2.0 * sigma * sigma)).exp(), 0.0)
            }),
            SignalSpec::DeltaApprox { sigma } => {
                let norm = 1.0 / (2.0 * PI * sigma * sigma).sqrt();
                SampledField::from_fn(*grid, |x| {
                    Complex64::new(norm * (-x * x / (2.0 * sigma * sigma)).exp(), 0.0)
                })
            }
            SignalSpec::Hermite { n } => {
                SampledField::from_fn(*grid, |x| Complex64::new(hermite_function(n, x), 0.0))
            }
            SignalSpec::File { ref path } => SampledField::read_csv(path, grid)?,
        };
        Ok(field)
    }
}

/// Smooth plateau `½(1 - tanh((|x| - W)/τ))`: ≈1 on `|x| < W`, ≈0 beyond.
///
/// Its spectrum decays like `e^{-πτ|ξ|/2}`, so the taper adds no visible
/// high-frequency content.
pub fn plateau_window(grid: &GridSpec1D, half_width: f64, taper: f64) -> Vec<f64> {
    grid.points()
        .into_iter()
        .map(|x| 0.5 * (1.0 - ((x.abs() - half_width) / taper).tanh()))
        .collect()
}

const HERMITE_RESCALE: f64 = 1e150;

/// Values `h_0(x), …, h_{n_max}(x)` of the L²-normalized Hermite functions.
///
/// Runs the three-term recurrence on a mantissa with a separately tracked
/// logarithmic scale, so neither the Gaussian factor nor the polynomial growth
/// under- or overflows.
pub fn hermite_functions(n_max: usize, x: f64, out: &mut Vec<f64>) {
    out.clear();
    let mut log_scale = -0.5 * x * x - 0.25 * PI.ln();
    let mut prev = 0.0_f64;
    let mut cur = 1.0_f64;
    for n in 0..=n_max {
        out.push(scaled_value(cur, log_scale));
        let nf = n as f64;
        let next = (2.0 / (nf + 1.0)).sqrt() * x * cur - (nf / (nf + 1.0)).sqrt() * prev;
        prev = cur;
        cur = next;
        if cur.abs() > HERMITE_RESCALE {
            prev /= HERMITE_RESCALE;
            cur /= HERMITE_RESCALE;
            log_scale += HERMITE_RESCALE.ln();
        }
    }
}

fn scaled_value(mantissa: f64, log_scale: f64) -> f64 {
    if mantissa == 0.0 {
        return 0.0;
    }
    let log_abs = log_scale + mantissa.abs().ln();
    if log_abs < -745.0 {
        0.0
    } else {
        mantissa.signum() * log_abs.exp()
    }
}

pub fn hermite_function(n: usize, x: f64) -> f64 {
    let mut buf = Vec::with_capacity(n + 1);
    hermite_functions(n, x, &mut buf);
    buf[n]
}

type PlanCache = Mutex<HashMap<(usize, bool), Arc<dyn Fft<f64>>>>;

/// Cached rustfft plan of the given length.
pub(crate) fn fft_plan(len: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    static CACHE: OnceLock<PlanCache> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache.lock().expect("fft plan cache poisoned");
    guard
        .entry((len, inverse))
        .or_insert_with(|| {
            let mut planner = FftPlanner::new();
            if inverse {
                planner.plan_fft_inverse(len)
            } else {
                planner.plan_fft_forward(len)
            }
        })
        .clone()
}

fn alternate_signs(values: &mut [Complex64]) {
    for v in values.iter_mut().skip(1).step_by(2) {
        *v = -*v;
    }
}

/// In-place forward transform of raw samples laid out on `grid`, producing
/// centered spectrum samples `h Σ_j e^{-i x_j ξ_m} f_j`.
pub(crate) fn forward_in_place(grid: &GridSpec1D, values: &mut [Complex64]) {
    // x_j ξ_m = -π(m - N/2) + 2π j (m - N/2)/N, and N/2 is even for N >= 8,
    // so the kernel reduces to (-1)^{j+m} times the plain DFT kernel.
    alternate_signs(values);
    fft_plan(values.len(), false).process(values);
    alternate_signs(values);
    let h = grid.spacing();
    for v in values.iter_mut() {
        *v *= h;
    }
}

/// Exact discrete inverse of [`forward_in_place`].
pub(crate) fn inverse_in_place(grid: &GridSpec1D, values: &mut [Complex64]) {
    alternate_signs(values);
    fft_plan(values.len(), true).process(values);
    alternate_signs(values);
    let scale = 1.0 / (grid.len() as f64 * grid.spacing());
    for v in values.iter_mut() {
        *v *= scale;
    }
}

/// Samples of `f̂` on the dual grid, approximating `∫ e^{-ixξ} f(x) dx`.
pub fn forward_transform(f: &SampledField) -> Result<SampledField> {
    f.expect_domain(Domain::Space)?;
    let mut values = f.values.clone();
    forward_in_place(&f.grid, &mut values);
    Ok(SampledField {
        grid: f.grid,
        values,
        domain: Domain::Frequency,
    })
}

pub fn inverse_transform(f: &SampledField) -> Result<SampledField> {
    f.expect_domain(Domain::Frequency)?;
    let mut values = f.values.clone();
    inverse_in_place(&f.grid, &mut values);
    Ok(SampledField {
        grid: f.grid,
        values,
        domain: Domain::Space,
    })
}

/// Applies the Fourier multiplier `p(D)` to a space-domain field.
pub fn fourier_multiplier(f: &SampledField, p: impl Fn(f64) -> Complex64) -> Result<SampledField> {
    f.expect_domain(Domain::Space)?;
    let mut values = f.values.clone();
    forward_in_place(&f.grid, &mut values);
    for (m, v) in values.iter_mut().enumerate() {
        *v *= p(f.grid.frequency(m));
    }
    inverse_in_place(&f.grid, &mut values);
    Ok(f.with_values(values))
}

/// Reusable chirp-z (Bluestein) evaluation of
/// `out_k = Σ_j a_j e^{-i (y0 + j h)(ω0 + k Δω)}` for `M` inputs and `K`
/// outputs with a fixed product `h·Δω`.
pub struct ChirpZ {
    inputs: usize,
    outputs: usize,
    theta: f64,
    size: usize,
    filter: Vec<Complex64>,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl ChirpZ {
    pub fn new(inputs: usize, outputs: usize, h: f64, domega: f64) -> Self {
        let theta = h * domega;
        let size = (inputs + outputs - 1).next_power_of_two();
        let mut filter = vec![Complex64::new(0.0, 0.0); size];
        // c_n = e^{iθn²/2} for n in [-(M-1), K-1], stored cyclically
        for n in 0..outputs {
            let nf = n as f64;
            filter[n] = Complex64::from_polar(1.0, 0.5 * theta * nf * nf);
        }
        for n in 1..inputs {
            let nf = n as f64;
            filter[size - n] = Complex64::from_polar(1.0, 0.5 * theta * nf * nf);
        }
        let fwd = fft_plan(size, false);
        let inv = fft_plan(size, true);
        fwd.process(&mut filter);
        Self {
            inputs,
            outputs,
            theta,
            size,
            filter,
            fwd,
            inv,
        }
    }

    pub fn inputs(&self) -> usize {
        self.inputs
    }

    pub fn outputs(&self) -> usize {
        self.outputs
    }

    /// Evaluates the transform; `h·Δω` must equal the value given to
    /// [`ChirpZ::new`].
    pub fn apply(&self, input: &[Complex64], y0: f64, h: f64, omega0: f64, domega: f64) -> Vec<Complex64> {
        assert_eq!(input.len(), self.inputs, "chirp-z input length");
        debug_assert!((h * domega - self.theta).abs() <= 1e-12 * self.theta.abs().max(1e-300));
        let mut work = vec![Complex64::new(0.0, 0.0); self.size];
        for (j, (&a, w)) in input.iter().zip(work.iter_mut()).enumerate() {
            let jf = j as f64;
            *w = a * Complex64::from_polar(1.0, -(jf * h * omega0 + 0.5 * self.theta * jf * jf));
        }
        self.fwd.process(&mut work);
        for (w, c) in work.iter_mut().zip(&self.filter) {
            *w *= c;
        }
        self.inv.process(&mut work);
        let norm = 1.0 / self.size as f64;
        (0..self.outputs)
            .map(|k| {
                let kf = k as f64;
                let phase = -(y0 * omega0 + y0 * kf * domega + 0.5 * self.theta * kf * kf);
                work[k] * norm * Complex64::from_polar(1.0, phase)
            })
            .collect()
    }
}
