//! Wave front set estimation from Bargmann data.
//!
//! A direction `θ` in the `(x, ξ)` plane is regular when `|Tu|` decays fast
//! along a thin truncated cone around it. The detector fits the radial decay
//! rate of `sup |Tu|` over log-spaced shells of each angular bin, and the
//! Sobolev variant measures how `∫|z|^{2s}|Tu|²` over the cone grows with the
//! outer radius.

use std::f64::consts::{PI, TAU};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bargmann::{bargmann_transform, PhaseGrid, PhaseMap};
use crate::error::{Error, Result};
use crate::fit::{fit_line, log_log_fit, LineFit};
use crate::grid::SampledField;
use crate::hamflow::angle_distance;

/// Magnitudes below this fraction of the map maximum are treated as zero by
/// the decay fit.
pub const MAGNITUDE_FLOOR: f64 = 1e-12;
/// Smallest number of radial shells accepted by [`directional_decay`].
pub const MIN_SHELLS: usize = 8;

/// Truncated cone `{z : |angle(z) - θ₀| < ε, R₀ ≤ |z| ≤ R₁}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConicSector {
    pub direction: f64,
    pub half_width: f64,
    pub inner_radius: f64,
    pub outer_radius: f64,
}

impl ConicSector {
    pub fn new(direction: f64, half_width: f64, inner_radius: f64, outer_radius: f64) -> Result<Self> {
        let s = Self {
            direction: direction.rem_euclid(TAU),
            half_width,
            inner_radius,
            outer_radius,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.half_width > 0.0 && self.half_width < PI / 4.0) {
            return Err(Error::InvalidParameter(format!(
                "sector half-width {} outside (0, π/4)",
                self.half_width
            )));
        }
        if !(self.inner_radius > 0.0 && self.inner_radius < self.outer_radius && self.outer_radius.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "sector radii must satisfy 0 < {} < {}",
                self.inner_radius, self.outer_radius
            )));
        }
        Ok(())
    }

    pub fn contains(&self, x: f64, xi: f64) -> bool {
        let r = x.hypot(xi);
        r >= self.inner_radius
            && r <= self.outer_radius
            && angle_distance(xi.atan2(x), self.direction) < self.half_width
    }

    pub fn with_outer_radius(&self, outer_radius: f64) -> Result<Self> {
        Self::new(self.direction, self.half_width, self.inner_radius, outer_radius)
    }

    fn check_coverage(&self, pg: &PhaseGrid) -> Result<()> {
        let eps = 1e-9 * self.outer_radius;
        for k in 0..=16 {
            let a = self.direction + self.half_width * (k as f64 / 8.0 - 1.0);
            let (x, xi) = (self.outer_radius * a.cos(), self.outer_radius * a.sin());
            if x < pg.x.min - eps || x > pg.x.max + eps || xi < pg.xi.min - eps || xi > pg.xi.max + eps {
                return Err(Error::InsufficientCoverage(format!(
                    "sector at θ={:.4} with R₁={} leaves the phase grid",
                    self.direction, self.outer_radius
                )));
            }
        }
        Ok(())
    }
}

/// Per-node polar data of a map, shared across sectors.
struct PolarNodes {
    radius: Vec<f64>,
    angle: Vec<f64>,
    magnitude: Vec<f64>,
    cell: f64,
    peak: f64,
}

impl PolarNodes {
    fn new(map: &PhaseMap) -> Self {
        let pg = map.grid();
        let mut radius = Vec::with_capacity(pg.len());
        let mut angle = Vec::with_capacity(pg.len());
        for i in 0..pg.x.count {
            for k in 0..pg.xi.count {
                let (x, xi) = map.node(i, k);
                radius.push(x.hypot(xi));
                angle.push(xi.atan2(x));
            }
        }
        let magnitude = map.magnitudes();
        let peak = magnitude.iter().fold(0.0, |m: f64, v| m.max(*v));
        Self {
            radius,
            angle,
            magnitude,
            cell: pg.x.step() * pg.xi.step(),
            peak,
        }
    }

    fn in_sector(&self, s: &ConicSector) -> impl Iterator<Item = usize> + '_ {
        let s = *s;
        (0..self.radius.len()).filter(move |&n| {
            let r = self.radius[n];
            r >= s.inner_radius && r <= s.outer_radius && angle_distance(self.angle[n], s.direction) < s.half_width
        })
    }

    fn decay(&self, s: &ConicSector, shells: usize) -> Result<LineFit> {
        if shells < MIN_SHELLS {
            return Err(Error::InsufficientCoverage(format!(
                "{shells} radial shells, at least {MIN_SHELLS} needed"
            )));
        }
        let ratio = (s.outer_radius / s.inner_radius).ln() / shells as f64;
        let mut sup = vec![f64::NAN; shells];
        for n in self.in_sector(s) {
            let k = (((self.radius[n] / s.inner_radius).ln() / ratio) as usize).min(shells - 1);
            let m = self.magnitude[n];
            if !(sup[k] >= m) {
                sup[k] = m;
            }
        }
        if let Some(k) = sup.iter().position(|v| v.is_nan()) {
            return Err(Error::InsufficientCoverage(format!(
                "shell {k} of the sector at θ={:.4} contains no grid node",
                s.direction
            )));
        }
        let floor = MAGNITUDE_FLOOR * self.peak;
        let log_r: Vec<f64> = (0..shells)
            .map(|k| s.inner_radius.ln() + (k as f64 + 0.5) * ratio)
            .collect();
        // shells at the floor carry no decay information; fit the leading run above it
        let visible = sup.iter().take_while(|v| **v > floor).count();
        if visible >= 2 {
            let log_sup: Vec<f64> = sup[..visible].iter().map(|v| v.ln()).collect();
            return Ok(fit_line(&log_r[..visible], &log_sup));
        }
        // below the floor almost at once: report the steepest slope the dynamic range can resolve
        let run = log_r[visible] - s.inner_radius.ln();
        let slope = MAGNITUDE_FLOOR.ln() / run;
        Ok(LineFit {
            slope,
            intercept: (self.peak.max(f64::MIN_POSITIVE)).ln() - slope * s.inner_radius.ln(),
            residual: 0.0,
        })
    }

    fn score(&self, s: &ConicSector, order: f64) -> f64 {
        self.in_sector(s)
            .map(|n| self.radius[n].powf(2.0 * order) * self.magnitude[n].powi(2))
            .sum::<f64>()
            * self.cell
    }
}

/// Fitted slope of `log sup_{shell∩sector} |Tu|` against `log r`, over
/// `shells` log-spaced shells between the sector radii.
///
/// Only the leading shells above `MAGNITUDE_FLOOR` times the map peak enter
/// the fit. A sector that reaches the floor within its first two shells
/// gets the slope `ln(MAGNITUDE_FLOOR) / ln(r/R0)` at the first floored shell.
pub fn directional_decay(map: &PhaseMap, sector: &ConicSector, shells: usize) -> Result<LineFit> {
    sector.validate()?;
    sector.check_coverage(map.grid())?;
    PolarNodes::new(map).decay(sector, shells)
}

/// Discrete `∫_{sector} |z|^{2s} |Tu(z)|² dx dξ`.
pub fn sobolev_score(map: &PhaseMap, sector: &ConicSector, s: f64) -> Result<f64> {
    sector.validate()?;
    sector.check_coverage(map.grid())?;
    Ok(PolarNodes::new(map).score(sector, s))
}

fn growth_from_scores(radii: &[f64], scores: &[f64], floor: f64) -> LineFit {
    let padded: Vec<f64> = scores.iter().map(|v| v + floor).collect();
    log_log_fit(radii, &padded)
}

/// Log-log slope of [`sobolev_score`] against the outer radius, over the
/// given outer radii.
pub fn sobolev_growth(map: &PhaseMap, sector: &ConicSector, s: f64, radii: &[f64]) -> Result<LineFit> {
    let nodes = PolarNodes::new(map);
    let mut scores = Vec::with_capacity(radii.len());
    for &r in radii {
        let sec = sector.with_outer_radius(r)?;
        sec.check_coverage(map.grid())?;
        scores.push(nodes.score(&sec, s));
    }
    Ok(growth_from_scores(radii, &scores, score_floor(&nodes)))
}

fn score_floor(nodes: &PolarNodes) -> f64 {
    1e-20 * nodes.peak * nodes.peak
}

fn default_bins() -> usize {
    64
}
fn default_half_width() -> f64 {
    1.5 * PI / 64.0
}
fn default_inner() -> f64 {
    4.0
}
fn default_outer() -> f64 {
    16.0
}
fn default_shells() -> usize {
    12
}
fn default_n_max() -> f64 {
    8.0
}
fn default_n_threshold() -> f64 {
    3.0
}
fn default_nodes() -> usize {
    257
}
fn default_orders() -> Vec<f64> {
    vec![0.0, 1.0, 2.0]
}
fn default_growth_radii() -> Vec<f64> {
    vec![8.0, 12.0, 16.0]
}
fn default_growth_threshold() -> f64 {
    0.2
}

/// Detector settings; every field has a default.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectionParams {
    #[serde(default = "default_bins")]
    pub bins: usize,
    #[serde(default = "default_half_width")]
    pub half_width: f64,
    #[serde(default = "default_inner")]
    pub inner_radius: f64,
    #[serde(default = "default_outer")]
    pub outer_radius: f64,
    #[serde(default = "default_shells")]
    pub shells: usize,
    /// Decay steeper than `-n_max` counts as rapid.
    #[serde(default = "default_n_max")]
    pub n_max: f64,
    /// A bin is singular when its decay exponent exceeds `-n_threshold`.
    #[serde(default = "default_n_threshold")]
    pub n_threshold: f64,
    /// Nodes per axis of the square probe grid `[-R₁, R₁]²`.
    #[serde(default = "default_nodes")]
    pub probe_nodes: usize,
    #[serde(default = "default_orders")]
    pub sobolev_orders: Vec<f64>,
    #[serde(default = "default_growth_radii")]
    pub growth_radii: Vec<f64>,
    #[serde(default = "default_growth_threshold")]
    pub growth_threshold: f64,
}

impl Default for DetectionParams {
    fn default() -> Self {
        Self {
            bins: default_bins(),
            half_width: default_half_width(),
            inner_radius: default_inner(),
            outer_radius: default_outer(),
            shells: default_shells(),
            n_max: default_n_max(),
            n_threshold: default_n_threshold(),
            probe_nodes: default_nodes(),
            sobolev_orders: default_orders(),
            growth_radii: default_growth_radii(),
            growth_threshold: default_growth_threshold(),
        }
    }
}

impl DetectionParams {
    /// Same bins and thresholds with both radii (and growth radii) scaled.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            inner_radius: self.inner_radius * factor,
            outer_radius: self.outer_radius * factor,
            growth_radii: self.growth_radii.iter().map(|r| r * factor).collect(),
            probe_nodes: (self.probe_nodes - 1) * factor.ceil() as usize + 1,
            ..self.clone()
        }
    }

    pub fn bin_width(&self) -> f64 {
        TAU / self.bins as f64
    }

    pub fn bin_center(&self, b: usize) -> f64 {
        b as f64 * self.bin_width()
    }

    /// Bin containing `θ`; a boundary angle goes to the lower index.
    pub fn bin_of(&self, theta: f64) -> usize {
        let w = self.bin_width();
        let t = (theta.rem_euclid(TAU) + 0.5 * w) / w;
        let mut b = t.floor();
        if (t - t.round()).abs() < 1e-12 {
            b = t.round() - 1.0;
        }
        (b.rem_euclid(self.bins as f64)) as usize
    }

    pub fn probe_grid(&self) -> Result<PhaseGrid> {
        PhaseGrid::square(self.outer_radius, self.probe_nodes)
    }

    pub fn sector(&self, b: usize) -> Result<ConicSector> {
        ConicSector::new(self.bin_center(b), self.half_width, self.inner_radius, self.outer_radius)
    }

    pub fn validate(&self) -> Result<()> {
        if self.bins < 4 {
            return Err(Error::InvalidParameter(format!("{} angular bins", self.bins)));
        }
        ConicSector::new(0.0, self.half_width, self.inner_radius, self.outer_radius)?;
        if self.shells < MIN_SHELLS {
            return Err(Error::InsufficientCoverage(format!(
                "{} radial shells, at least {MIN_SHELLS} needed",
                self.shells
            )));
        }
        if self.probe_nodes < 3 {
            return Err(Error::InvalidParameter(format!("{} probe nodes", self.probe_nodes)));
        }
        if !(self.n_threshold > 0.0 && self.n_max >= self.n_threshold) {
            return Err(Error::InvalidParameter(format!(
                "thresholds must satisfy 0 < N_threshold ({}) <= N_max ({})",
                self.n_threshold, self.n_max
            )));
        }
        if self.growth_radii.len() < 2
            || self
                .growth_radii
                .iter()
                .any(|r| !(*r > self.inner_radius && *r <= self.outer_radius))
            || self.growth_radii.windows(2).any(|w| w[0] >= w[1])
        {
            return Err(Error::InvalidParameter(format!(
                "growth radii {:?} must increase within ({}, {}]",
                self.growth_radii, self.inner_radius, self.outer_radius
            )));
        }
        if self.sobolev_orders.iter().any(|s| !s.is_finite()) {
            return Err(Error::InvalidParameter("non-finite Sobolev order".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SobolevScore {
    pub order: f64,
    /// Score over the full sector.
    pub score: f64,
    /// Log-log growth of the score over the nested outer radii.
    pub growth: f64,
    /// `growth > growth_threshold`.
    pub singular: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AngularBin {
    pub index: usize,
    pub center: f64,
    pub decay_exponent: f64,
    pub fit_residual: f64,
    /// Exponent above `-n_threshold`.
    pub singular: bool,
    /// Exponent at or below `-n_max`.
    pub rapid_decay: bool,
    pub sobolev: Vec<SobolevScore>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WavefrontReport {
    pub params: DetectionParams,
    pub bins: Vec<AngularBin>,
    /// One representative bin center per contiguous run of singular bins:
    /// the bin with the largest decay exponent.
    pub singular_directions: Vec<f64>,
}

impl WavefrontReport {
    pub fn singular_bins(&self) -> Vec<usize> {
        self.singular_directions
            .iter()
            .map(|t| self.params.bin_of(*t))
            .collect()
    }

    /// Whether the Sobolev criterion marks the bin nearest `θ` singular at
    /// order `s`.
    pub fn sobolev_singular(&self, theta: f64, s: f64) -> Option<bool> {
        self.bins[self.params.bin_of(theta)]
            .sobolev
            .iter()
            .find(|v| v.order == s)
            .map(|v| v.singular)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Peak bin of each maximal circular run of flagged bins.
fn run_peaks(flags: &[bool], exponents: &[f64]) -> Vec<usize> {
    let n = flags.len();
    if flags.iter().all(|f| *f) {
        return vec![argmax_lower(exponents, 0..n)];
    }
    let start = flags.iter().position(|f| !*f).expect("some unflagged bin");
    let mut peaks = Vec::new();
    let mut run: Vec<usize> = Vec::new();
    for step in 1..=n {
        let b = (start + step) % n;
        if flags[b] {
            run.push(b);
        } else if !run.is_empty() {
            peaks.push(argmax_lower(exponents, run.drain(..)));
        }
    }
    peaks.sort_unstable();
    peaks
}

fn argmax_lower(values: &[f64], indices: impl Iterator<Item = usize>) -> usize {
    let mut best: Option<usize> = None;
    for i in indices {
        best = match best {
            Some(b) if values[b] > values[i] || (values[b] == values[i] && b < i) => Some(b),
            _ => Some(i),
        };
    }
    best.expect("non-empty run")
}

/// Runs the detector on a precomputed map.
pub fn detect_on_map(map: &PhaseMap, params: &DetectionParams) -> Result<WavefrontReport> {
    params.validate()?;
    let nodes = PolarNodes::new(map);
    for b in 0..params.bins {
        params.sector(b)?.check_coverage(map.grid())?;
    }
    let floor = score_floor(&nodes);
    let bins: Vec<AngularBin> = (0..params.bins)
        .into_par_iter()
        .map(|b| -> Result<AngularBin> {
            let sector = params.sector(b)?;
            let fit = nodes.decay(&sector, params.shells)?;
            let mut sobolev = Vec::with_capacity(params.sobolev_orders.len());
            for &s in &params.sobolev_orders {
                let scores: Vec<f64> = params
                    .growth_radii
                    .iter()
                    .map(|&r| sector.with_outer_radius(r).map(|sec| nodes.score(&sec, s)))
                    .collect::<Result<_>>()?;
                let growth = growth_from_scores(&params.growth_radii, &scores, floor).slope;
                sobolev.push(SobolevScore {
                    order: s,
                    score: nodes.score(&sector, s),
                    growth,
                    singular: growth > params.growth_threshold,
                });
            }
            Ok(AngularBin {
                index: b,
                center: sector.direction,
                decay_exponent: fit.slope,
                fit_residual: fit.residual,
                singular: fit.slope > -params.n_threshold,
                rapid_decay: fit.slope <= -params.n_max,
                sobolev,
            })
        })
        .collect::<Result<_>>()?;
    let flags: Vec<bool> = bins.iter().map(|b| b.singular).collect();
    let exponents: Vec<f64> = bins.iter().map(|b| b.decay_exponent).collect();
    let singular_directions = if flags.iter().any(|f| *f) {
        run_peaks(&flags, &exponents)
            .into_iter()
            .map(|b| params.bin_center(b))
            .collect()
    } else {
        Vec::new()
    };
    Ok(WavefrontReport {
        params: params.clone(),
        bins,
        singular_directions,
    })
}

/// Bargmann transform on the probe grid followed by [`detect_on_map`].
pub fn detect_wavefront(u: &SampledField, params: &DetectionParams) -> Result<WavefrontReport> {
    params.validate()?;
    let map = bargmann_transform(u, &params.probe_grid()?)?;
    detect_on_map(&map, params)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DirectionMatch {
    pub source: f64,
    pub predicted: f64,
    pub found: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    pub matches: Vec<DirectionMatch>,
    /// `(source, predicted)` pairs with no singular direction nearby.
    pub misses: Vec<(f64, f64)>,
    /// Singular directions at time `t` not predicted by the flow.
    pub extraneous: Vec<f64>,
}

impl MatchResult {
    pub fn is_full_match(&self) -> bool {
        self.misses.is_empty() && self.extraneous.is_empty()
    }
}

/// Checks that the flow maps the singular directions of `initial` onto those
/// of `evolved`, each within `tol` radians.
pub fn compare_to_flow(
    initial: &WavefrontReport,
    evolved: &WavefrontReport,
    flow_dir: impl Fn(f64) -> f64,
    tol: f64,
) -> Result<MatchResult> {
    if initial.params.bins != evolved.params.bins {
        return Err(Error::BinningMismatch(initial.params.bins, evolved.params.bins));
    }
    let dist = angle_distance;
    let slack = 1e-9;
    let mut result = MatchResult {
        matches: Vec::new(),
        misses: Vec::new(),
        extraneous: Vec::new(),
    };
    let predicted: Vec<(f64, f64)> = initial
        .singular_directions
        .iter()
        .map(|&t| (t, flow_dir(t).rem_euclid(TAU)))
        .collect();
    for &(source, p) in &predicted {
        let best = evolved
            .singular_directions
            .iter()
            .copied()
            .min_by(|a, b| dist(*a, p).total_cmp(&dist(*b, p)));
        match best {
            Some(found) if dist(found, p) <= tol + slack => result.matches.push(DirectionMatch {
                source,
                predicted: p,
                found,
            }),
            _ => result.misses.push((source, p)),
        }
    }
    for &t in &evolved.singular_directions {
        if !predicted.iter().any(|&(_, p)| dist(t, p) <= tol + slack) {
            result.extraneous.push(t);
        }
    }
    Ok(result)
}
