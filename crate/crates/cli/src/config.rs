//! Run configurations.
//!
//! A config file is a JSON object `{"scenario", "grid", "seed", "params"}`;
//! every key is optional and unknown keys are rejected. `params` holds the
//! scenario's own settings, each with a default.

use std::f64::consts::PI;
use std::path::Path;

use anyhow::{bail, Context};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use phasefront_core::grid::{plateau_window, GridSpec1D, SampledField, SignalSpec};
use phasefront_core::schrodinger::{HamiltonianSpec, LinearBackend, NonlinearitySpec};
use phasefront_core::wavefront::DetectionParams;

use crate::Scenario;

/// Sampling grid `x_j = -L + jh`, `h = 2L/N`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(rename = "L")]
    pub half_width: f64,
    #[serde(rename = "N")]
    pub n: usize,
}

impl GridConfig {
    /// `L = √(πN/2)`, which makes the space and frequency extents equal.
    pub fn square(n: usize) -> Self {
        Self {
            half_width: (PI * n as f64 / 2.0).sqrt(),
            n,
        }
    }

    pub fn build(&self) -> anyhow::Result<GridSpec1D> {
        GridSpec1D::new(self.half_width, self.n).with_context(|| format!("grid L={} N={}", self.half_width, self.n))
    }
}

/// Smooth plateau applied to a datum, for signals that do not decay.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindowSpec {
    pub half_width: f64,
    pub taper: f64,
}

/// Samples `signal` on `grid`, windowed when requested.
pub fn sample_datum(signal: &SignalSpec, window: Option<WindowSpec>, grid: &GridSpec1D) -> anyhow::Result<SampledField> {
    let u = signal.synthesize(grid).with_context(|| format!("datum {signal:?}"))?;
    Ok(match window {
        Some(w) => {
            if !(w.half_width > 0.0 && w.taper > 0.0) {
                bail!("window half_width and taper must be positive");
            }
            u.scaled_by(&plateau_window(grid, w.half_width, w.taper))
        }
        None => u,
    })
}

/// Full resolved configuration of one run; echoed into the manifest.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig<P> {
    #[serde(default)]
    pub scenario: Option<Scenario>,
    #[serde(default)]
    pub grid: Option<GridConfig>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub params: P,
}

/// Command-line overrides.
#[derive(Clone, Copy, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub half_width: Option<f64>,
    pub n: Option<usize>,
}

/// Scenario-specific parameters.
pub trait ScenarioParams: Serialize + DeserializeOwned + Default {
    /// Grid used when the config names none; `None` for grid-free scenarios.
    fn default_grid() -> Option<GridConfig>;
}

/// Reads `path` (or starts from defaults), applies overrides and resolves the grid.
pub fn load<P: ScenarioParams>(scenario: Scenario, path: Option<&Path>, overrides: Overrides) -> anyhow::Result<RunConfig<P>> {
    let mut cfg: RunConfig<P> = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))?
        }
        None => RunConfig {
            scenario: None,
            grid: None,
            seed: 0,
            params: P::default(),
        },
    };
    if let Some(named) = cfg.scenario {
        if named != scenario {
            bail!("config is for scenario {named}, not {scenario}");
        }
    }
    cfg.scenario = Some(scenario);
    if let Some(seed) = overrides.seed {
        cfg.seed = seed;
    }
    match P::default_grid() {
        Some(default) => {
            let mut grid = cfg.grid.unwrap_or(default);
            if let Some(l) = overrides.half_width {
                grid.half_width = l;
            }
            if let Some(n) = overrides.n {
                grid.n = n;
            }
            grid.build()?;
            cfg.grid = Some(grid);
        }
        None => {
            if cfg.grid.is_some() || overrides.half_width.is_some() || overrides.n.is_some() {
                bail!("scenario {scenario} does not sample a grid");
            }
        }
    }
    Ok(cfg)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BargmannMapParams {
    pub datum: SignalSpec,
    /// Half-width of the square phase-space window.
    pub radius: f64,
    pub nodes: usize,
    /// Closed-form comparison on `inner ≤ |z| ≤ outer`, where one exists.
    pub oracle_annulus: [f64; 2],
    pub oracle_tolerance: f64,
}

impl Default for BargmannMapParams {
    fn default() -> Self {
        Self {
            datum: SignalSpec::Chirp { lambda: 1.0 },
            radius: 16.0,
            nodes: 129,
            oracle_annulus: [4.0, 16.0],
            oracle_tolerance: 1e-6,
        }
    }
}

impl ScenarioParams for BargmannMapParams {
    fn default_grid() -> Option<GridConfig> {
        Some(GridConfig { half_width: 40.0, n: 4096 })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WavefrontParams {
    pub datum: SignalSpec,
    pub window: Option<WindowSpec>,
    pub detection: DetectionParams,
    /// Directions the detector must find, and nothing else; no check when absent.
    pub expected: Option<Vec<f64>>,
    pub tolerance_bins: f64,
}

impl Default for WavefrontParams {
    fn default() -> Self {
        Self {
            datum: SignalSpec::Chirp { lambda: 1.0 },
            window: None,
            detection: DetectionParams::default(),
            expected: None,
            tolerance_bins: 1.0,
        }
    }
}

impl ScenarioParams for WavefrontParams {
    fn default_grid() -> Option<GridConfig> {
        Some(GridConfig { half_width: 40.0, n: 4096 })
    }
}

/// Quadratic Hamiltonian for the flow scenario.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FlowHamiltonian {
    /// `½|z|²` on `ℝ^{2d}`.
    HarmonicOscillator { dim: usize },
    /// `½(a x² + 2b xξ + c ξ²)`.
    Planar { a: f64, b: f64, c: f64 },
    /// `½ zᵀAz` with `A` given row by row.
    Matrix { rows: Vec<Vec<f64>> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlowParams {
    pub hamiltonian: FlowHamiltonian,
    pub t: f64,
    pub z0: Vec<f64>,
    /// RK4 step for a numerical cross-check of the exact flow.
    pub numeric_dt: Option<f64>,
    pub tolerance: f64,
    pub trajectory_samples: usize,
}

impl Default for FlowParams {
    fn default() -> Self {
        Self {
            hamiltonian: FlowHamiltonian::HarmonicOscillator { dim: 1 },
            t: PI / 4.0,
            z0: vec![1.0, 0.0],
            numeric_dt: Some(1e-3),
            tolerance: 1e-8,
            trajectory_samples: 65,
        }
    }
}

impl ScenarioParams for FlowParams {
    fn default_grid() -> Option<GridConfig> {
        None
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvolveParams {
    pub datum: SignalSpec,
    pub window: Option<WindowSpec>,
    pub hamiltonian: HamiltonianSpec,
    pub nonlinearity: NonlinearitySpec,
    pub backend: LinearBackend,
    pub t_final: f64,
    pub dt: f64,
    pub snapshot_times: Vec<f64>,
}

impl Default for EvolveParams {
    fn default() -> Self {
        Self {
            datum: SignalSpec::Gaussian { sigma: 1.0 },
            window: None,
            hamiltonian: HamiltonianSpec::HarmonicOscillator,
            nonlinearity: NonlinearitySpec::Gauge,
            backend: LinearBackend::Metaplectic,
            t_final: 1.0,
            dt: 0.01,
            snapshot_times: vec![0.5, 1.0],
        }
    }
}

impl ScenarioParams for EvolveParams {
    fn default_grid() -> Option<GridConfig> {
        Some(GridConfig::square(512))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PropagationCheckParams {
    pub datum: SignalSpec,
    pub window: Option<WindowSpec>,
    pub hamiltonian: HamiltonianSpec,
    pub nonlinearity: NonlinearitySpec,
    pub times: Vec<f64>,
    pub dt: f64,
    pub detection: DetectionParams,
    pub tolerance_bins: f64,
}

impl Default for PropagationCheckParams {
    fn default() -> Self {
        Self {
            datum: SignalSpec::Constant,
            window: Some(WindowSpec {
                half_width: 48.0,
                taper: 2.0,
            }),
            hamiltonian: HamiltonianSpec::HarmonicOscillator,
            nonlinearity: NonlinearitySpec::Zero,
            times: vec![PI / 8.0, PI / 4.0, 3.0 * PI / 8.0],
            dt: 0.01,
            detection: DetectionParams::default(),
            tolerance_bins: 1.0,
        }
    }
}

impl ScenarioParams for PropagationCheckParams {
    fn default_grid() -> Option<GridConfig> {
        Some(GridConfig::square(4096))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnomalyDemoParams {
    pub datum: SignalSpec,
    pub window: Option<WindowSpec>,
    pub nonlinearity: NonlinearitySpec,
    pub s: f64,
    pub sigma: f64,
    pub detection: DetectionParams,
    /// Directions that must be reported as new singularities of `F(u)`.
    pub expected_anomalous: Vec<f64>,
    pub tolerance_bins: f64,
}

impl Default for AnomalyDemoParams {
    fn default() -> Self {
        Self {
            datum: SignalSpec::Chirp { lambda: 1.0 },
            window: None,
            nonlinearity: NonlinearitySpec::Square,
            s: 1.4,
            sigma: 1.7,
            detection: DetectionParams::default(),
            expected_anomalous: vec![2f64.atan()],
            tolerance_bins: 1.0,
        }
    }
}

impl ScenarioParams for AnomalyDemoParams {
    fn default_grid() -> Option<GridConfig> {
        Some(GridConfig { half_width: 40.0, n: 4096 })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MoserSettings {
    /// Hermite modes per random sample.
    pub modes: usize,
    /// Independent families, each giving one estimate of the constant.
    pub families: usize,
    /// Samples per family.
    pub samples: usize,
    pub orders: Vec<f64>,
    /// Bound on the relative deviation of a family's constant from the median.
    pub max_spread: f64,
}

impl Default for MoserSettings {
    fn default() -> Self {
        Self {
            modes: 16,
            families: 5,
            samples: 20,
            orders: vec![0.0, 1.0, 2.0],
            max_spread: 0.5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RemainderSettings {
    pub s: f64,
    /// Zygmund regularity assumed for the datum.
    pub r: f64,
    pub epsilons: Vec<f64>,
    pub test_vectors: usize,
}

impl Default for RemainderSettings {
    fn default() -> Self {
        Self {
            s: 1.0,
            r: 1.5,
            epsilons: vec![0.1, 0.3],
            test_vectors: 6,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ParadiffProbeParams {
    pub datum: SignalSpec,
    pub window: Option<WindowSpec>,
    pub nonlinearity: NonlinearitySpec,
    /// Truncation level; the grid's largest admissible level when absent.
    pub levels: Option<usize>,
    pub delta: f64,
    /// Bound on `‖F(u) - reconstruction‖ - ‖F(u) - F(u_K)‖`, relative to `‖F(u)‖`.
    pub telescoping_tolerance: f64,
    pub moser: MoserSettings,
    pub remainder: RemainderSettings,
}

impl Default for ParadiffProbeParams {
    fn default() -> Self {
        Self {
            datum: SignalSpec::Gaussian { sigma: 1.0 },
            window: None,
            nonlinearity: NonlinearitySpec::Square,
            levels: None,
            delta: 0.5,
            telescoping_tolerance: 1e-10,
            moser: MoserSettings::default(),
            remainder: RemainderSettings::default(),
        }
    }
}

impl ScenarioParams for ParadiffProbeParams {
    fn default_grid() -> Option<GridConfig> {
        Some(GridConfig { half_width: 16.0, n: 1024 })
    }
}
