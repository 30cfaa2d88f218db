//! Batch experiment runner for `phasefront-core`.
//!
//! `phasefront <scenario> --config cfg.json --out dir [--seed n] [--L l] [--N n]`
//! writes `manifest.json`, `report.json` and CSV artifacts to `dir`.
//! Exit status: 0 pass or complete, 1 fail or runtime error, 2 bad configuration.

pub mod config;
pub mod output;
pub mod scenarios;

use std::fmt;
use std::path::{Path, PathBuf};

use clap::ValueEnum;
use serde::{Deserialize, Serialize};

use config::{load, Overrides, RunConfig, ScenarioParams};
pub use output::{Manifest, Status};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    BargmannMap,
    Wavefront,
    Flow,
    Evolve,
    PropagationCheck,
    AnomalyDemo,
    ParadiffProbe,
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = self.to_possible_value().expect("no skipped variants");
        f.write_str(name.get_name())
    }
}

#[derive(Debug)]
pub enum RunError {
    Config(anyhow::Error),
    Module(anyhow::Error),
}

impl RunError {
    pub fn exit_code(&self) -> u8 {
        match self {
            RunError::Config(_) => 2,
            RunError::Module(_) => 1,
        }
    }
}

impl fmt::Display for RunError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RunError::Config(e) => write!(f, "configuration error: {e:#}"),
            RunError::Module(e) => write!(f, "run failed: {e:#}"),
        }
    }
}

impl std::error::Error for RunError {}

/// Tags a fallible step as configuration or computation.
pub(crate) trait Stage<T> {
    fn config(self) -> Result<T, RunError>;
    fn module(self) -> Result<T, RunError>;
}

impl<T, E: Into<anyhow::Error>> Stage<T> for Result<T, E> {
    fn config(self) -> Result<T, RunError> {
        self.map_err(|e| RunError::Config(e.into()))
    }

    fn module(self) -> Result<T, RunError> {
        self.map_err(|e| RunError::Module(e.into()))
    }
}

/// One invocation.
#[derive(Clone, Debug)]
pub struct Invocation {
    pub scenario: Scenario,
    pub config: Option<PathBuf>,
    pub out: PathBuf,
    pub overrides: Overrides,
}

impl Status {
    pub fn exit_code(self) -> u8 {
        match self {
            Status::Pass | Status::Complete => 0,
            Status::Fail => 1,
        }
    }
}

fn execute<P: ScenarioParams>(
    inv: &Invocation,
    runner: fn(&RunConfig<P>, &Path) -> scenarios::Outcome,
) -> Result<Manifest, RunError> {
    let cfg = load::<P>(inv.scenario, inv.config.as_deref(), inv.overrides).config()?;
    let resolved = serde_json::to_value(&cfg).config()?;
    let (status, out) = runner(&cfg, &inv.out)?;
    out.finish(&inv.scenario.to_string(), status, resolved).module()
}

/// Runs a scenario and returns its manifest.
pub fn run(inv: &Invocation) -> Result<Manifest, RunError> {
    match inv.scenario {
        Scenario::BargmannMap => execute(inv, scenarios::bargmann_map),
        Scenario::Wavefront => execute(inv, scenarios::wavefront),
        Scenario::Flow => execute(inv, scenarios::flow),
        Scenario::Evolve => execute(inv, scenarios::evolve),
        Scenario::PropagationCheck => execute(inv, scenarios::propagation_check),
        Scenario::AnomalyDemo => execute(inv, scenarios::anomaly_demo),
        Scenario::ParadiffProbe => execute(inv, scenarios::paradiff_probe),
    }
}
