//! Hamiltonian flows `χ_t` of degree-2 homogeneous symbols on phase space.
//!
//! Coordinates are `z = (x_1..x_d, ξ_1..ξ_d)` and Hamilton's equations read
//! `ẋ = ∂a/∂ξ`, `ξ̇ = -∂a/∂x`, i.e. `ż = Ω ∇a(z)` with
//! `Ω = [[0, I], [-I, 0]]`.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Standard symplectic matrix `[[0, I], [-I, 0]]` of size `2d`.
pub fn symplectic_form(d: usize) -> DMatrix<f64> {
    let mut omega = DMatrix::zeros(2 * d, 2 * d);
    for i in 0..d {
        omega[(i, d + i)] = 1.0;
        omega[(d + i, i)] = -1.0;
    }
    omega
}

/// `a(z) = ½ zᵀ A z` with `A` symmetric.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadraticHamiltonian {
    dim: usize,
    matrix: DMatrix<f64>,
}

impl QuadraticHamiltonian {
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        if !matrix.is_square() || !matrix.nrows().is_multiple_of(2) || matrix.nrows() == 0 {
            return Err(Error::DimensionMismatch(format!(
                "quadratic form must be 2d x 2d, got {}x{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        let scale = matrix.amax().max(1.0);
        if (&matrix - matrix.transpose()).amax() > 1e-12 * scale {
            return Err(Error::InvalidParameter("quadratic form is not symmetric".into()));
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("quadratic form has non-finite entries".into()));
        }
        Ok(Self {
            dim: matrix.nrows() / 2,
            matrix,
        })
    }

    /// `½(|x|² + |ξ|²)` in dimension `d`.
    pub fn harmonic_oscillator(d: usize) -> Self {
        Self {
            dim: d,
            matrix: DMatrix::identity(2 * d, 2 * d),
        }
    }

    /// One-dimensional form `½(a x² + 2b xξ + c ξ²)`.
    pub fn planar(a: f64, b: f64, c: f64) -> Result<Self> {
        Self::new(DMatrix::from_row_slice(2, 2, &[a, b, b, c]))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn value(&self, z: &[f64]) -> f64 {
        let z = DVector::from_column_slice(z);
        0.5 * z.dot(&(&self.matrix * &z))
    }

    /// Matrix of `χ_t`, `exp(t Ω A)`.
    pub fn flow_matrix(&self, t: f64) -> DMatrix<f64> {
        (symplectic_form(self.dim) * &self.matrix * t).exp()
    }
}

/// Endpoint of a trajectory and, when available, the flow's Jacobian there.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowResult {
    pub endpoint: Vec<f64>,
    pub jacobian: Option<DMatrix<f64>>,
}

fn check_point(z0: &[f64], dim: usize) -> Result<()> {
    if z0.len() != 2 * dim {
        return Err(Error::DimensionMismatch(format!(
            "phase-space point has {} coordinates, expected {}",
            z0.len(),
            2 * dim
        )));
    }
    if z0.iter().all(|&v| v == 0.0) {
        return Err(Error::ZeroPoint);
    }
    Ok(())
}

/// Exact flow of a quadratic Hamiltonian.
pub fn flow_quadratic(q: &QuadraticHamiltonian, t: f64, z0: &[f64]) -> Result<FlowResult> {
    check_point(z0, q.dim)?;
    let jac = q.flow_matrix(t);
    let endpoint = (&jac * DVector::from_column_slice(z0)).iter().copied().collect();
    Ok(FlowResult {
        endpoint,
        jacobian: Some(jac),
    })
}

type SymbolFn = dyn Fn(f64, &[f64]) -> f64 + Send + Sync;
type GradientFn = dyn Fn(f64, &[f64]) -> Vec<f64> + Send + Sync;

/// Real principal symbol `a₂(t, x, ξ)`, positively homogeneous of degree 2 in
/// `z`, on a time interval `[0, T]`.
#[derive(Clone)]
pub struct HamiltonianField {
    dim: usize,
    horizon: f64,
    symbol: Arc<SymbolFn>,
    gradient: Option<Arc<GradientFn>>,
}

impl fmt::Debug for HamiltonianField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("HamiltonianField")
            .field("dim", &self.dim)
            .field("horizon", &self.horizon)
            .field("analytic_gradient", &self.gradient.is_some())
            .finish()
    }
}

impl HamiltonianField {
    pub fn new(
        dim: usize,
        horizon: f64,
        symbol: impl Fn(f64, &[f64]) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            dim,
            horizon,
            symbol: Arc::new(symbol),
            gradient: None,
        }
    }

    /// Supplies `∇_z a₂`; otherwise central differences are used.
    pub fn with_gradient(
        mut self,
        gradient: impl Fn(f64, &[f64]) -> Vec<f64> + Send + Sync + 'static,
    ) -> Self {
        self.gradient = Some(Arc::new(gradient));
        self
    }

    /// Time-independent field of a quadratic form, with its exact gradient.
    pub fn from_quadratic(q: &QuadraticHamiltonian, horizon: f64) -> Self {
        let a = q.matrix.clone();
        let a2 = a.clone();
        Self::new(q.dim, horizon, move |_, z| {
            let z = DVector::from_column_slice(z);
            0.5 * z.dot(&(&a * &z))
        })
        .with_gradient(move |_, z| (&a2 * DVector::from_column_slice(z)).iter().copied().collect())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn value(&self, t: f64, z: &[f64]) -> f64 {
        (self.symbol)(t, z)
    }

    pub fn gradient(&self, t: f64, z: &[f64]) -> Vec<f64> {
        if let Some(g) = &self.gradient {
            return g(t, z);
        }
        let norm = z.iter().map(|v| v * v).sum::<f64>().sqrt();
        let step = 1e-5 * norm.max(f64::MIN_POSITIVE);
        let mut probe = z.to_vec();
        (0..z.len())
            .map(|i| {
                let orig = probe[i];
                probe[i] = orig + step;
                let plus = self.value(t, &probe);
                probe[i] = orig - step;
                let minus = self.value(t, &probe);
                probe[i] = orig;
                (plus - minus) / (2.0 * step)
            })
            .collect()
    }

    /// Largest relative violation of `a₂(t, λz) = λ² a₂(t, z)` over the
    /// supplied samples and λ ∈ {2, 3}.
    pub fn homogeneity_defect(&self, samples: &[(f64, Vec<f64>)]) -> f64 {
        let mut worst: f64 = 0.0;
        for (t, z) in samples {
            let base = self.value(*t, z);
            for lambda in [2.0, 3.0] {
                let scaled: Vec<f64> = z.iter().map(|v| lambda * v).collect();
                let lhs = self.value(*t, &scaled);
                let rhs = lambda * lambda * base;
                let scale = rhs.abs().max(1e-300);
                worst = worst.max((lhs - rhs).abs() / scale);
            }
        }
        worst
    }

    fn velocity(&self, t: f64, z: &[f64]) -> Vec<f64> {
        let g = self.gradient(t, z);
        let d = self.dim;
        let mut v = vec![0.0; 2 * d];
        for i in 0..d {
            v[i] = g[d + i];
            v[d + i] = -g[i];
        }
        v
    }
}

fn axpy(z: &[f64], a: f64, k: &[f64]) -> Vec<f64> {
    z.iter().zip(k).map(|(z, k)| z + a * k).collect()
}

fn norm(z: &[f64]) -> f64 {
    z.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Classical RK4 integration of Hamilton's equations from `t0` to `t1`.
///
/// The step is shrunk so that a whole number of steps of size at most `dt`
/// covers the interval; `t1 < t0` integrates backwards.
pub fn flow_numeric(h: &HamiltonianField, t0: f64, t1: f64, z0: &[f64], dt: f64) -> Result<FlowResult> {
    check_point(z0, h.dim)?;
    let span = t1 - t0;
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::InvalidParameter(format!("time step {dt}")));
    }
    if span != 0.0 && dt > span.abs() / 16.0 * (1.0 + 1e-12) {
        return Err(Error::InvalidParameter(format!(
            "time step {dt} exceeds (t1 - t0)/16 = {}",
            span.abs() / 16.0
        )));
    }
    let steps = if span == 0.0 { 0 } else { (span.abs() / dt).ceil() as usize };
    let step = if steps == 0 { 0.0 } else { span / steps as f64 };
    let floor = 1e-8 * norm(z0);
    let mut z = z0.to_vec();
    for n in 0..steps {
        let t = t0 + n as f64 * step;
        let k1 = h.velocity(t, &z);
        let k2 = h.velocity(t + 0.5 * step, &axpy(&z, 0.5 * step, &k1));
        let k3 = h.velocity(t + 0.5 * step, &axpy(&z, 0.5 * step, &k2));
        let k4 = h.velocity(t + step, &axpy(&z, step, &k3));
        for i in 0..z.len() {
            z[i] += step / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        if norm(&z) < floor {
            return Err(Error::ZeroCrossing(t + step));
        }
    }
    Ok(FlowResult {
        endpoint: z,
        jacobian: None,
    })
}

/// Anything that can push a phase-space point along `χ_t` (from time 0).
pub trait FlowProvider {
    fn dim(&self) -> usize;
    fn transport(&self, t: f64, z0: &[f64]) -> Result<FlowResult>;
}

impl FlowProvider for QuadraticHamiltonian {
    fn dim(&self) -> usize {
        self.dim
    }

    fn transport(&self, t: f64, z0: &[f64]) -> Result<FlowResult> {
        flow_quadratic(self, t, z0)
    }
}

/// A [`HamiltonianField`] integrated numerically with a fixed maximal step.
#[derive(Clone, Debug)]
pub struct NumericFlow {
    pub field: HamiltonianField,
    pub dt: f64,
}

impl FlowProvider for NumericFlow {
    fn dim(&self) -> usize {
        self.field.dim
    }

    fn transport(&self, t: f64, z0: &[f64]) -> Result<FlowResult> {
        let dt = self.dt.min(t.abs() / 16.0);
        if t == 0.0 {
            return Ok(FlowResult {
                endpoint: z0.to_vec(),
                jacobian: None,
            });
        }
        flow_numeric(&self.field, 0.0, t, z0, dt)
    }
}

/// Angle in `[0, 2π)`.
pub fn wrap_angle(theta: f64) -> f64 {
    let w = theta.rem_euclid(2.0 * PI);
    if w >= 2.0 * PI {
        0.0
    } else {
        w
    }
}

/// Circular distance between two angles, in `[0, π]`.
pub fn angle_distance(a: f64, b: f64) -> f64 {
    let d = wrap_angle(a - b);
    d.min(2.0 * PI - d)
}

/// Action of `χ_t` on directions of the phase plane (`d = 1` only).
pub fn direction_map(flow: &dyn FlowProvider, t: f64, theta: f64) -> Result<f64> {
    if flow.dim() != 1 {
        return Err(Error::Unsupported(format!(
            "directions are angles only in the phase plane, got d = {}",
            flow.dim()
        )));
    }
    let out = flow.transport(t, &[theta.cos(), theta.sin()])?;
    Ok(wrap_angle(out.endpoint[1].atan2(out.endpoint[0])))
}

/// Max-norm defect `‖JᵀΩJ - Ω‖`.
pub fn symplectic_defect(jac: &DMatrix<f64>) -> f64 {
    let omega = symplectic_form(jac.nrows() / 2);
    (jac.transpose() * &omega * jac - omega).amax()
}
