//! Computable microlocal analysis in one space dimension: Bargmann transforms,
//! global wave front set detection, quadratic Hamiltonian flows, Schrödinger
//! evolution and phase-space paradifferential decompositions.

pub mod bargmann;
pub mod error;
pub mod fit;
pub mod grid;
pub mod hamflow;
pub mod paradiff;
pub mod qsobolev;
pub mod schrodinger;
pub mod wavefront;

pub use bargmann::{bargmann_transform, Axis, PhaseGrid, PhaseMap};
pub use error::{Error, Result};
pub use fit::LineFit;
pub use grid::{Domain, GridSpec1D, SampledField, SignalSpec};
pub use hamflow::{FlowProvider, FlowResult, HamiltonianField, QuadraticHamiltonian};
pub use paradiff::{DecompositionSummary, LevelSymbol, MoserStability, ParadiffDecomposition};
pub use qsobolev::{DyadicPartition, GridSymbol, PhasePartition, RowSymbol};
pub use schrodinger::{EvolutionConfig, EvolutionTrace, LinearHamiltonian, Nonlinearity};
pub use wavefront::{ConicSector, DetectionParams, MatchResult, WavefrontReport};
