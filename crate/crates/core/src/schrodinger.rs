//! Numerical evolution of `D_t u + a(x, D) u = F(u) + f(t)` in one dimension,
//! with `D_t = -i∂_t`, so the free propagator is `e^{-ita}`.
//!
//! Quadratic Hamiltonians are propagated exactly through a metaplectic shear
//! factorization of their flow matrix: every symplectic `2×2` matrix is a
//! product of chirp multiplications `e^{ipx²/2}` and Fresnel multipliers
//! `e^{-ibξ²/2}`, each of which is exact on the grid. The harmonic oscillator
//! additionally has a Hermite spectral backend. Nonlinear problems use Strang
//! splitting with a pointwise RK4 sub-step.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{forward_in_place, hermite_functions, inverse_in_place, Domain, GridSpec1D, SampledField};
use crate::hamflow::QuadraticHamiltonian;

/// Largest phase-space rotation angle (in the flow's operator norm) covered by
/// a single shear factorization.
const MAX_SHEAR_ANGLE: f64 = 0.1;

/// Quadratic part `a(x, D)` of the equation.
#[derive(Clone, Debug, PartialEq)]
pub enum LinearHamiltonian {
    /// `½(D² + x²)`.
    HarmonicOscillator,
    /// Weyl quantization of `½ zᵀ A z` for a `2×2` symmetric `A`.
    Quadratic(QuadraticHamiltonian),
    /// `½D² + V(x)` with `V` sampled on the field grid.
    Potential(Vec<f64>),
}

impl LinearHamiltonian {
    fn quadratic_matrix(&self) -> Option<[f64; 3]> {
        match self {
            LinearHamiltonian::HarmonicOscillator => Some([1.0, 0.0, 1.0]),
            LinearHamiltonian::Quadratic(q) => {
                let m = q.matrix();
                Some([m[(0, 0)], m[(0, 1)], m[(1, 1)]])
            }
            LinearHamiltonian::Potential(_) => None,
        }
    }

    fn validate(&self, grid: &GridSpec1D) -> Result<()> {
        match self {
            LinearHamiltonian::Quadratic(q) if q.dim() != 1 => Err(Error::DimensionMismatch(format!(
                "field evolution needs a 2x2 quadratic form, got dimension {}",
                q.dim()
            ))),
            LinearHamiltonian::Potential(v) if v.len() != grid.len() => Err(Error::DimensionMismatch(
                format!("potential has {} samples for a grid of {}", v.len(), grid.len()),
            )),
            LinearHamiltonian::Potential(v) if v.iter().any(|p| !p.is_finite()) => {
                Err(Error::InvalidParameter("potential has non-finite samples".into()))
            }
            _ => Ok(()),
        }
    }
}

/// Serializable description of a [`LinearHamiltonian`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum HamiltonianSpec {
    HarmonicOscillator,
    /// `½(a x² + 2b xξ + c ξ²)`.
    Quadratic { a: f64, b: f64, c: f64 },
    /// `½D² + ½ω² x²` realized as a sampled potential.
    Potential { omega: f64 },
}

impl HamiltonianSpec {
    pub fn build(&self, grid: &GridSpec1D) -> Result<LinearHamiltonian> {
        Ok(match *self {
            HamiltonianSpec::HarmonicOscillator => LinearHamiltonian::HarmonicOscillator,
            HamiltonianSpec::Quadratic { a, b, c } => {
                LinearHamiltonian::Quadratic(QuadraticHamiltonian::planar(a, b, c)?)
            }
            HamiltonianSpec::Potential { omega } => LinearHamiltonian::Potential(
                grid.points().iter().map(|x| 0.5 * omega * omega * x * x).collect(),
            ),
        })
    }
}

type ScalarMap = dyn Fn(Complex64) -> Complex64 + Send + Sync;

/// Smooth nonlinearity `F: ℂ → ℂ` with `F(0) = 0`.
#[derive(Clone)]
pub enum Nonlinearity {
    Zero,
    /// `u²`
    Square,
    /// `|u|²u`
    Gauge,
    /// `Σ c_{pq} u^p ū^q`
    PowerSeries(Vec<PowerTerm>),
    /// Arbitrary map; Wirtinger derivatives by central differences.
    Custom(Arc<ScalarMap>),
}

impl fmt::Debug for Nonlinearity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Nonlinearity::Zero => f.write_str("Zero"),
            Nonlinearity::Square => f.write_str("Square"),
            Nonlinearity::Gauge => f.write_str("Gauge"),
            Nonlinearity::PowerSeries(t) => f.debug_tuple("PowerSeries").field(t).finish(),
            Nonlinearity::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

/// One term `c u^p ū^q` of a power-series nonlinearity.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PowerTerm {
    pub p: u32,
    pub q: u32,
    pub re: f64,
    #[serde(default)]
    pub im: f64,
}

const WIRTINGER_STEP: f64 = 1e-6;

fn powi(z: Complex64, n: u32) -> Complex64 {
    z.powu(n)
}

impl Nonlinearity {
    pub fn custom(f: impl Fn(Complex64) -> Complex64 + Send + Sync + 'static) -> Self {
        Nonlinearity::Custom(Arc::new(f))
    }

    pub fn eval(&self, z: Complex64) -> Complex64 {
        match self {
            Nonlinearity::Zero => Complex64::new(0.0, 0.0),
            Nonlinearity::Square => z * z,
            Nonlinearity::Gauge => z * z.norm_sqr(),
            Nonlinearity::PowerSeries(terms) => terms
                .iter()
                .map(|t| Complex64::new(t.re, t.im) * powi(z, t.p) * powi(z.conj(), t.q))
                .sum(),
            Nonlinearity::Custom(f) => f(z),
        }
    }

    /// `∂F/∂z`.
    pub fn dz(&self, z: Complex64) -> Complex64 {
        match self {
            Nonlinearity::Zero => Complex64::new(0.0, 0.0),
            Nonlinearity::Square => 2.0 * z,
            Nonlinearity::Gauge => Complex64::new(2.0 * z.norm_sqr(), 0.0),
            Nonlinearity::PowerSeries(terms) => terms
                .iter()
                .filter(|t| t.p > 0)
                .map(|t| Complex64::new(t.re, t.im) * t.p as f64 * powi(z, t.p - 1) * powi(z.conj(), t.q))
                .sum(),
            Nonlinearity::Custom(f) => {
                let (dx, dy) = central_partials(f.as_ref(), z);
                0.5 * (dx - Complex64::i() * dy)
            }
        }
    }

    /// `∂F/∂z̄`.
    pub fn dzbar(&self, z: Complex64) -> Complex64 {
        match self {
            Nonlinearity::Zero | Nonlinearity::Square => Complex64::new(0.0, 0.0),
            Nonlinearity::Gauge => z * z,
            Nonlinearity::PowerSeries(terms) => terms
                .iter()
                .filter(|t| t.q > 0)
                .map(|t| Complex64::new(t.re, t.im) * t.q as f64 * powi(z, t.p) * powi(z.conj(), t.q - 1))
                .sum(),
            Nonlinearity::Custom(f) => {
                let (dx, dy) = central_partials(f.as_ref(), z);
                0.5 * (dx + Complex64::i() * dy)
            }
        }
    }

    pub fn apply(&self, u: &SampledField) -> SampledField {
        u.map(|z| self.eval(z))
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Nonlinearity::Zero)
    }

    /// Checks `|F(0)| < 1e-14`.
    pub fn validate(&self) -> Result<()> {
        let at_zero = self.eval(Complex64::new(0.0, 0.0)).norm();
        if !(at_zero < 1e-14) {
            return Err(Error::InvalidParameter(format!("nonlinearity has F(0) = {at_zero:e}")));
        }
        Ok(())
    }
}

fn central_partials(f: &ScalarMap, z: Complex64) -> (Complex64, Complex64) {
    let step = WIRTINGER_STEP * z.norm().max(1.0);
    let dx = (f(z + step) - f(z - step)) / (2.0 * step);
    let iy = Complex64::new(0.0, step);
    let dy = (f(z + iy) - f(z - iy)) / (2.0 * step);
    (dx, dy)
}

/// Serializable description of the built-in nonlinearities.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum NonlinearitySpec {
    Zero,
    Square,
    Gauge,
    PowerSeries { terms: Vec<PowerTerm> },
}

impl NonlinearitySpec {
    pub fn build(&self) -> Nonlinearity {
        match self {
            NonlinearitySpec::Zero => Nonlinearity::Zero,
            NonlinearitySpec::Square => Nonlinearity::Square,
            NonlinearitySpec::Gauge => Nonlinearity::Gauge,
            NonlinearitySpec::PowerSeries { terms } => Nonlinearity::PowerSeries(terms.clone()),
        }
    }
}

type ForcingFn = dyn Fn(f64, f64) -> Complex64 + Send + Sync;

/// Which exact propagator carries the linear sub-step of a harmonic
/// oscillator evolution.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LinearBackend {
    Metaplectic,
    Hermite { n_modes: usize },
}

/// Everything [`propagate_strang`] needs besides the initial datum.
#[derive(Clone)]
pub struct EvolutionConfig {
    pub hamiltonian: LinearHamiltonian,
    pub nonlinearity: Nonlinearity,
    /// Optional inhomogeneity `f(t, x)`, added in the nonlinear sub-step.
    pub forcing: Option<Arc<ForcingFn>>,
    pub t_final: f64,
    pub dt: f64,
    pub snapshot_times: Vec<f64>,
    pub backend: LinearBackend,
}

impl fmt::Debug for EvolutionConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("EvolutionConfig")
            .field("hamiltonian", &self.hamiltonian)
            .field("nonlinearity", &self.nonlinearity)
            .field("forcing", &self.forcing.as_ref().map(|_| ".."))
            .field("t_final", &self.t_final)
            .field("dt", &self.dt)
            .field("snapshot_times", &self.snapshot_times)
            .field("backend", &self.backend)
            .finish()
    }
}

impl EvolutionConfig {
    pub fn new(hamiltonian: LinearHamiltonian, nonlinearity: Nonlinearity, t_final: f64, dt: f64) -> Self {
        Self {
            hamiltonian,
            nonlinearity,
            forcing: None,
            t_final,
            dt,
            snapshot_times: vec![t_final],
            backend: LinearBackend::Metaplectic,
        }
    }

    pub fn with_snapshots(mut self, times: Vec<f64>) -> Self {
        self.snapshot_times = times;
        self
    }

    pub fn with_forcing(mut self, f: impl Fn(f64, f64) -> Complex64 + Send + Sync + 'static) -> Self {
        self.forcing = Some(Arc::new(f));
        self
    }

    pub fn with_backend(mut self, backend: LinearBackend) -> Self {
        self.backend = backend;
        self
    }

    pub fn validate(&self, grid: &GridSpec1D) -> Result<()> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::InvalidParameter(format!("time step must be positive, got {}", self.dt)));
        }
        if !(self.t_final.is_finite() && self.t_final >= 0.0) {
            return Err(Error::InvalidParameter(format!("final time {}", self.t_final)));
        }
        if let Some(t) = self
            .snapshot_times
            .iter()
            .find(|t| !(**t >= 0.0 && **t <= self.t_final))
        {
            return Err(Error::InvalidParameter(format!(
                "snapshot time {t} outside [0, {}]",
                self.t_final
            )));
        }
        if let LinearBackend::Hermite { n_modes } = self.backend {
            if self.hamiltonian != LinearHamiltonian::HarmonicOscillator {
                return Err(Error::Unsupported(
                    "the Hermite backend only propagates the harmonic oscillator".into(),
                ));
            }
            check_modes(grid, n_modes)?;
        }
        self.hamiltonian.validate(grid)?;
        self.nonlinearity.validate()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepDiagnostic {
    pub time: f64,
    pub l2_norm: f64,
    /// Conserved energy when the equation has one (no forcing, `F` zero or
    /// gauge).
    pub energy: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvolutionTrace {
    pub snapshots: Vec<(f64, SampledField)>,
    pub diagnostics: Vec<StepDiagnostic>,
}

impl EvolutionTrace {
    pub fn last(&self) -> Option<&SampledField> {
        self.snapshots.last().map(|(_, u)| u)
    }

    pub fn diagnostics_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.diagnostics)?)
    }
}

/// Elementary factor of a metaplectic operator.
#[derive(Clone, Copy, Debug, PartialEq)]
enum Shear {
    /// Multiplication by `e^{ipx²/2}`; flow matrix `[[1, 0], [p, 1]]`.
    Chirp(f64),
    /// Fourier multiplier `e^{-ibξ²/2}`; flow matrix `[[1, b], [0, 1]]`.
    Fresnel(f64),
}

fn coefficient_size(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Factors a symplectic matrix `[[a, b], [c, d]]` into shears, listed in the
/// order they act.
fn shear_factors(m: [[f64; 2]; 2]) -> Vec<Shear> {
    let [[a, b], [c, d]] = m;
    let ulu = if b != 0.0 {
        Some([(a - 1.0) / b, b, (d - 1.0) / b])
    } else {
        None
    };
    let lul = if c != 0.0 {
        Some([(d - 1.0) / c, c, (a - 1.0) / c])
    } else {
        None
    };
    let cost = |f: &Option<[f64; 3]>| f.map_or(f64::INFINITY, |v| coefficient_size(&v));
    let (cu, cl) = (cost(&ulu), cost(&lul));
    if cu.min(cl) > 4.0 || (b == 0.0 && c == 0.0) {
        if a == 1.0 && d == 1.0 && b == 0.0 && c == 0.0 {
            return Vec::new();
        }
        // near-dilation: peel off a unit Fresnel step first
        let mut out = vec![Shear::Fresnel(1.0)];
        out.extend(shear_factors([[a, b - a], [c, d - c]]));
        return out;
    }
    if cu <= cl {
        let [p1, b, p2] = ulu.unwrap();
        vec![Shear::Chirp(p1), Shear::Fresnel(b), Shear::Chirp(p2)]
    } else {
        let [b1, c, b2] = lul.unwrap();
        vec![Shear::Fresnel(b1), Shear::Chirp(c), Shear::Fresnel(b2)]
    }
}

/// Precomputed exact propagator `e^{-iτa}` for one step size.
struct LinearStep {
    /// Multiplicative profiles, applied in order; `true` marks a Fourier
    /// multiplier.
    factors: Vec<(bool, Vec<Complex64>)>,
    hermite_modes: Option<usize>,
    tau: f64,
}

impl LinearStep {
    fn new(grid: &GridSpec1D, ham: &LinearHamiltonian, backend: LinearBackend, tau: f64) -> Result<Self> {
        if let LinearBackend::Hermite { n_modes } = backend {
            return Ok(Self {
                factors: Vec::new(),
                hermite_modes: Some(n_modes),
                tau,
            });
        }
        let xs = grid.points();
        let xis = grid.frequencies();
        let chirp = |p: f64| -> Vec<Complex64> {
            xs.iter().map(|x| Complex64::from_polar(1.0, 0.5 * p * x * x)).collect()
        };
        let fresnel = |b: f64| -> Vec<Complex64> {
            xis.iter().map(|k| Complex64::from_polar(1.0, -0.5 * b * k * k)).collect()
        };
        let mut factors = Vec::new();
        match ham {
            LinearHamiltonian::Potential(v) => {
                let half: Vec<Complex64> = v.iter().map(|p| Complex64::from_polar(1.0, -0.5 * tau * p)).collect();
                factors.push((false, half.clone()));
                factors.push((true, fresnel(tau)));
                factors.push((false, half));
            }
            _ => {
                let [a11, a12, a22] = ham.quadratic_matrix().expect("quadratic Hamiltonian");
                let generator = DMatrix::from_row_slice(2, 2, &[a12, a22, -a11, -a12]);
                let size = generator.amax() * 2.0;
                let pieces = ((tau.abs() * size / MAX_SHEAR_ANGLE).ceil() as usize).max(1);
                let sub = (generator * (tau / pieces as f64)).exp();
                let shears = shear_factors([[sub[(0, 0)], sub[(0, 1)]], [sub[(1, 0)], sub[(1, 1)]]]);
                let one: Vec<(bool, Vec<Complex64>)> = shears
                    .iter()
                    .map(|s| match *s {
                        Shear::Chirp(p) => (false, chirp(p)),
                        Shear::Fresnel(b) => (true, fresnel(b)),
                    })
                    .collect();
                for _ in 0..pieces {
                    factors.extend(one.iter().cloned());
                }
                merge_adjacent(&mut factors);
            }
        }
        Ok(Self {
            factors,
            hermite_modes: None,
            tau,
        })
    }

    fn apply(&self, grid: &GridSpec1D, values: &mut Vec<Complex64>) {
        if let Some(n_modes) = self.hermite_modes {
            let (out, _) = hermite_evolve(grid, values, self.tau, n_modes);
            *values = out;
            return;
        }
        let mut in_frequency = false;
        for (fourier, profile) in &self.factors {
            if *fourier != in_frequency {
                if *fourier {
                    forward_in_place(grid, values);
                } else {
                    inverse_in_place(grid, values);
                }
                in_frequency = *fourier;
            }
            for (v, p) in values.iter_mut().zip(profile) {
                *v *= p;
            }
        }
        if in_frequency {
            inverse_in_place(grid, values);
        }
    }
}

/// Fuses consecutive multipliers acting in the same domain.
fn merge_adjacent(factors: &mut Vec<(bool, Vec<Complex64>)>) {
    let mut merged: Vec<(bool, Vec<Complex64>)> = Vec::with_capacity(factors.len());
    for (fourier, profile) in factors.drain(..) {
        match merged.last_mut() {
            Some((f, p)) if *f == fourier => {
                for (a, b) in p.iter_mut().zip(&profile) {
                    *a *= b;
                }
            }
            _ => merged.push((fourier, profile)),
        }
    }
    *factors = merged;
}

/// `e^{-ita(x,D)}u` for the given quadratic (or potential) Hamiltonian.
///
/// Quadratic Hamiltonians are propagated exactly; a sampled potential uses one
/// Strang step `e^{-itV/2} e^{-itD²/2} e^{-itV/2}`.
pub fn propagate_linear(u: &SampledField, ham: &LinearHamiltonian, t: f64) -> Result<SampledField> {
    u.expect_domain(Domain::Space)?;
    let grid = *u.grid();
    ham.validate(&grid)?;
    let step = LinearStep::new(&grid, ham, LinearBackend::Metaplectic, t)?;
    let mut values = u.values().to_vec();
    step.apply(&grid, &mut values);
    Ok(u.with_values(values))
}

fn check_modes(grid: &GridSpec1D, n_modes: usize) -> Result<()> {
    if n_modes == 0 || n_modes > grid.len() / 4 {
        return Err(Error::InvalidParameter(format!(
            "mode count {n_modes} must lie in 1..={}",
            grid.len() / 4
        )));
    }
    Ok(())
}

/// Expansion residual above which a Hermite propagation is flagged.
pub const TRUNCATION_TOLERANCE: f64 = 1e-6;

/// Result of the Hermite spectral propagator.
#[derive(Clone, Debug, PartialEq)]
pub struct HermiteEvolution {
    pub field: SampledField,
    /// `‖u₀ - Πu₀‖ / ‖u₀‖` for the projection onto the retained modes.
    pub residual: f64,
    /// Set when the residual exceeds [`TRUNCATION_TOLERANCE`]; the result is
    /// still returned.
    pub truncation_warning: bool,
}

/// Returns `(u(t), Πu₀)`.
fn hermite_evolve(grid: &GridSpec1D, values: &[Complex64], t: f64, n_modes: usize) -> (Vec<Complex64>, Vec<Complex64>) {
    let h = grid.spacing();
    let n_max = n_modes - 1;
    let zero = Complex64::new(0.0, 0.0);
    // fixed chunks summed in order keep the result independent of scheduling
    const CHUNK: usize = 256;
    let partials: Vec<Vec<Complex64>> = values
        .par_chunks(CHUNK)
        .enumerate()
        .map(|(chunk, block)| {
            let mut acc = vec![zero; n_modes];
            let mut buf = Vec::with_capacity(n_modes);
            for (offset, &u) in block.iter().enumerate() {
                hermite_functions(n_max, grid.point(chunk * CHUNK + offset), &mut buf);
                for (c, hn) in acc.iter_mut().zip(&buf) {
                    *c += u * *hn;
                }
            }
            acc
        })
        .collect();
    let mut coeffs = vec![zero; n_modes];
    for part in partials {
        for (c, p) in coeffs.iter_mut().zip(part) {
            *c += p;
        }
    }
    let coeffs: Vec<Complex64> = coeffs.into_iter().map(|c| c * h).collect();
    let evolved: Vec<Complex64> = coeffs
        .iter()
        .enumerate()
        .map(|(n, c)| c * Complex64::from_polar(1.0, -t * (n as f64 + 0.5)))
        .collect();
    (0..grid.len())
        .into_par_iter()
        .map_init(
            || Vec::with_capacity(n_modes),
            |buf, j| {
                hermite_functions(n_max, grid.point(j), buf);
                let mut out = zero;
                let mut proj = zero;
                for ((hn, c), e) in buf.iter().zip(&coeffs).zip(&evolved) {
                    out += e * *hn;
                    proj += c * *hn;
                }
                (out, proj)
            },
        )
        .unzip()
}

/// Harmonic-oscillator evolution `e^{-itH}u₀`, `H = ½(D² + x²)`, through the
/// first `n_modes` Hermite functions: coefficient `n` picks up
/// `e^{-it(n+½)}`.
pub fn propagate_linear_ho(u0: &SampledField, t: f64, n_modes: usize) -> Result<HermiteEvolution> {
    u0.expect_domain(Domain::Space)?;
    let grid = *u0.grid();
    check_modes(&grid, n_modes)?;
    let (out, proj) = hermite_evolve(&grid, u0.values(), t, n_modes);
    let residual = u0.distance_l2(&u0.with_values(proj)) / u0.norm_l2();
    Ok(HermiteEvolution {
        field: u0.with_values(out),
        residual,
        truncation_warning: residual > TRUNCATION_TOLERANCE,
    })
}

/// Relative spectral mass allowed within 5% of the band edge.
pub const NYQUIST_MASS_TOLERANCE: f64 = 1e-6;
/// Growth factor of the L² norm treated as blow-up.
pub const BLOW_UP_FACTOR: f64 = 1e3;

fn edge_mass_fraction(grid: &GridSpec1D, values: &[Complex64]) -> f64 {
    let mut spectrum = values.to_vec();
    forward_in_place(grid, &mut spectrum);
    let edge = 0.95 * grid.nyquist();
    let mut total = 0.0;
    let mut outer = 0.0;
    for (m, v) in spectrum.iter().enumerate() {
        let w = v.norm_sqr();
        total += w;
        if grid.frequency(m).abs() > edge {
            outer += w;
        }
    }
    if total == 0.0 {
        0.0
    } else {
        outer / total
    }
}

/// `u' = i(F(u) + f(t))` over one RK4 step of length `tau`, pointwise.
fn nonlinear_step(
    grid: &GridSpec1D,
    values: &mut [Complex64],
    f: &Nonlinearity,
    forcing: Option<&ForcingFn>,
    t: f64,
    tau: f64,
) {
    if f.is_zero() && forcing.is_none() {
        return;
    }
    let i = Complex64::i();
    values.par_iter_mut().enumerate().for_each(|(j, v)| {
        let x = grid.point(j);
        let rhs = |s: f64, z: Complex64| {
            let g = forcing.map_or(Complex64::new(0.0, 0.0), |ff| ff(s, x));
            i * (f.eval(z) + g)
        };
        let k1 = rhs(t, *v);
        let k2 = rhs(t + 0.5 * tau, *v + 0.5 * tau * k1);
        let k3 = rhs(t + 0.5 * tau, *v + 0.5 * tau * k2);
        let k4 = rhs(t + tau, *v + tau * k3);
        *v += tau / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    });
}

/// `⟨u, a(x, D)u⟩` for the linear part.
fn linear_energy(grid: &GridSpec1D, ham: &LinearHamiltonian, values: &[Complex64]) -> f64 {
    let h = grid.spacing();
    let mut spectrum = values.to_vec();
    forward_in_place(grid, &mut spectrum);
    let dnorm2: f64 = spectrum
        .iter()
        .enumerate()
        .map(|(m, v)| grid.frequency(m).powi(2) * v.norm_sqr())
        .sum::<f64>()
        * grid.freq_spacing()
        / (2.0 * PI);
    match ham {
        LinearHamiltonian::Potential(pot) => {
            let pe: f64 = pot.iter().zip(values).map(|(p, v)| p * v.norm_sqr()).sum::<f64>() * h;
            0.5 * dnorm2 + pe
        }
        _ => {
            let [a11, a12, a22] = ham.quadratic_matrix().expect("quadratic Hamiltonian");
            let xnorm2: f64 = values
                .iter()
                .enumerate()
                .map(|(j, v)| grid.point(j).powi(2) * v.norm_sqr())
                .sum::<f64>()
                * h;
            let cross = if a12 != 0.0 {
                // Re⟨xu, Du⟩ with Du from the spectrum
                let mut du: Vec<Complex64> = spectrum
                    .iter()
                    .enumerate()
                    .map(|(m, v)| v * grid.frequency(m))
                    .collect();
                inverse_in_place(grid, &mut du);
                values
                    .iter()
                    .zip(&du)
                    .enumerate()
                    .map(|(j, (v, d))| (v.conj() * grid.point(j) * d).re)
                    .sum::<f64>()
                    * h
            } else {
                0.0
            };
            0.5 * (a11 * xnorm2 + 2.0 * a12 * cross + a22 * dnorm2)
        }
    }
}

fn energy(cfg: &EvolutionConfig, grid: &GridSpec1D, values: &[Complex64]) -> Option<f64> {
    if cfg.forcing.is_some() {
        return None;
    }
    match cfg.nonlinearity {
        Nonlinearity::Zero => Some(linear_energy(grid, &cfg.hamiltonian, values)),
        Nonlinearity::Gauge => {
            let quartic: f64 = values.iter().map(|v| v.norm_sqr().powi(2)).sum::<f64>() * grid.spacing();
            Some(linear_energy(grid, &cfg.hamiltonian, values) - 0.5 * quartic)
        }
        _ => None,
    }
}

fn l2(grid: &GridSpec1D, values: &[Complex64]) -> f64 {
    (grid.spacing() * values.iter().map(|v| v.norm_sqr()).sum::<f64>()).sqrt()
}

/// Strang splitting: half nonlinear step, exact linear step, half nonlinear
/// step.
///
/// Steps are shortened so that every snapshot time is hit exactly. Each step
/// checks the L² norm for blow-up and the spectrum for mass near the band
/// edge.
pub fn propagate_strang(u0: &SampledField, cfg: &EvolutionConfig) -> Result<EvolutionTrace> {
    u0.expect_domain(Domain::Space)?;
    let grid = *u0.grid();
    cfg.validate(&grid)?;

    let mut stops: Vec<f64> = cfg.snapshot_times.clone();
    stops.sort_by(f64::total_cmp);
    let mut values = u0.values().to_vec();
    let initial = l2(&grid, &values);
    let mut steps: HashMap<u64, LinearStep> = HashMap::new();
    let mut trace = EvolutionTrace {
        snapshots: Vec::with_capacity(stops.len()),
        diagnostics: vec![StepDiagnostic {
            time: 0.0,
            l2_norm: initial,
            energy: energy(cfg, &grid, &values),
        }],
    };
    let mut next_stop = 0;
    while next_stop < stops.len() && stops[next_stop] <= 0.0 {
        trace.snapshots.push((stops[next_stop], u0.with_values(values.clone())));
        next_stop += 1;
    }

    let mut t = 0.0;
    let min_step = 1e-12 * cfg.t_final.max(1.0);
    while t < cfg.t_final - min_step {
        let target = stops.get(next_stop).copied().unwrap_or(cfg.t_final);
        let mut tau = cfg.dt.min(cfg.t_final - t);
        if target - t < tau + min_step {
            tau = target - t;
        }
        let linear = match steps.entry(tau.to_bits()) {
            std::collections::hash_map::Entry::Occupied(e) => e.into_mut(),
            std::collections::hash_map::Entry::Vacant(e) => {
                e.insert(LinearStep::new(&grid, &cfg.hamiltonian, cfg.backend, tau)?)
            }
        };
        let forcing = cfg.forcing.as_deref();
        nonlinear_step(&grid, &mut values, &cfg.nonlinearity, forcing, t, 0.5 * tau);
        linear.apply(&grid, &mut values);
        nonlinear_step(&grid, &mut values, &cfg.nonlinearity, forcing, t + 0.5 * tau, 0.5 * tau);
        t = if (target - (t + tau)).abs() <= min_step { target } else { t + tau };

        let norm = l2(&grid, &values);
        if !norm.is_finite() || (initial > 0.0 && norm > BLOW_UP_FACTOR * initial) {
            return Err(Error::BlowUp {
                time: t,
                norm,
                initial,
            });
        }
        let edge = edge_mass_fraction(&grid, &values);
        if edge > NYQUIST_MASS_TOLERANCE {
            return Err(Error::NyquistViolation(format!(
                "{edge:.3e} of the spectral mass sits within 5% of the band edge at t = {t}"
            )));
        }
        trace.diagnostics.push(StepDiagnostic {
            time: t,
            l2_norm: norm,
            energy: energy(cfg, &grid, &values),
        });
        while next_stop < stops.len() && stops[next_stop] <= t + min_step {
            trace.snapshots.push((stops[next_stop], u0.with_values(values.clone())));
            next_stop += 1;
        }
    }
    while next_stop < stops.len() {
        trace.snapshots.push((stops[next_stop], u0.with_values(values.clone())));
        next_stop += 1;
    }
    Ok(trace)
}

fn check_regular_time(t: f64) -> Result<()> {
    let offset = (t - PI / 2.0).rem_euclid(PI);
    if offset.min(PI - offset) < 1e-9 {
        return Err(Error::SingularTime(t));
    }
    Ok(())
}

/// `c(t)` in the solution `u(t) = c(t) e^{-i tan(t) x²/2}` of the harmonic
/// oscillator with `u(0) = 1`.
///
/// From Mehler's kernel, `c(t) = (cos t)^{-1/2}` for `|t| < π/2`, continued
/// through each focal time with an extra factor `e^{-iπ/2}`.
pub fn chirp_amplitude(t: f64) -> Result<Complex64> {
    check_regular_time(t)?;
    let k = ((t + PI / 2.0) / PI).floor();
    Ok(Complex64::from_polar(t.cos().abs().powf(-0.5), -0.5 * PI * k))
}

/// Exact solution `c(t) e^{-i tan(t) x²/2}` with `u(0) = 1`.
pub fn chirp_solution(t: f64, grid: &GridSpec1D) -> Result<SampledField> {
    let c = chirp_amplitude(t)?;
    let slope = t.tan();
    Ok(SampledField::from_fn(*grid, |x| c * Complex64::from_polar(1.0, -0.5 * slope * x * x)))
}

/// `arg c(t)` read off a numerically propagated solution at the grid point
/// nearest `x0`.
pub fn pin_chirp_phase(evolved: &SampledField, t: f64, x0: f64) -> Result<f64> {
    check_regular_time(t)?;
    let g = evolved.grid();
    let j = g.nearest_index(x0);
    let x = g.point(j);
    let v = evolved.values()[j] * Complex64::from_polar(1.0, 0.5 * t.tan() * x * x);
    Ok(v.arg())
}
