//! Scenario runners. Each validates its configuration before touching the
//! output directory, then computes and writes its artifacts.

use std::f64::consts::TAU;
use std::path::Path;

use anyhow::{anyhow, bail};
use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use phasefront_core::bargmann::{bargmann_transform, closed_form_magnitude, PhaseGrid};
use phasefront_core::grid::{hermite_function, GridSpec1D, SampledField, SignalSpec};
use phasefront_core::hamflow::{
    angle_distance, direction_map, flow_numeric, flow_quadratic, symplectic_defect, HamiltonianField, QuadraticHamiltonian,
};
use phasefront_core::paradiff::{
    max_truncation_level, microlocal_composition_check, moser_constant_stability, remainder_mapping_probe,
    CompositionReport, DecompositionSummary, MoserStability, ParadiffDecomposition, RemainderBound,
};
use phasefront_core::qsobolev::PhasePartition;
use phasefront_core::schrodinger::{propagate_strang, EvolutionConfig, HamiltonianSpec};
use phasefront_core::wavefront::{compare_to_flow, detect_wavefront, MatchResult, WavefrontReport};

use crate::config::{
    sample_datum, AnomalyDemoParams, BargmannMapParams, EvolveParams, FlowHamiltonian, FlowParams, ParadiffProbeParams,
    PropagationCheckParams, RunConfig, WavefrontParams,
};
use crate::output::{OutputDir, Status, REPORT};
use crate::{RunError, Stage};

pub type Outcome = Result<(Status, OutputDir), RunError>;

fn grid_of<P>(cfg: &RunConfig<P>) -> Result<GridSpec1D, RunError> {
    cfg.grid
        .ok_or_else(|| anyhow!("no grid resolved"))
        .and_then(|g| g.build())
        .config()
}

fn num(v: f64) -> String {
    format!("{v:e}")
}

fn status(pass: bool) -> Status {
    if pass {
        Status::Pass
    } else {
        Status::Fail
    }
}

fn check_tolerance_bins(bins: f64) -> Result<(), RunError> {
    if !(bins.is_finite() && bins >= 0.0) {
        return Err(RunError::Config(anyhow!("tolerance_bins must be non-negative, got {bins}")));
    }
    Ok(())
}

fn near_any(theta: f64, set: &[f64], tol: f64) -> bool {
    set.iter().any(|&q| angle_distance(theta, q) <= tol)
}

#[derive(Serialize)]
struct OracleCheck {
    annulus: [f64; 2],
    max_deviation: f64,
    tolerance: f64,
    pass: bool,
}

#[derive(Serialize)]
struct BargmannReport {
    datum: SignalSpec,
    datum_l2_norm_sq: f64,
    map_mass: f64,
    mass_ratio: f64,
    max_magnitude: f64,
    oracle: Option<OracleCheck>,
}

pub fn bargmann_map(cfg: &RunConfig<BargmannMapParams>, root: &Path) -> Outcome {
    let p = &cfg.params;
    let grid = grid_of(cfg)?;
    let u = sample_datum(&p.datum, None, &grid).config()?;
    let pg = PhaseGrid::square(p.radius, p.nodes).config()?;
    let [inner, outer] = p.oracle_annulus;
    if !(0.0 <= inner && inner < outer) {
        return Err(RunError::Config(anyhow!("oracle_annulus must satisfy 0 ≤ inner < outer")));
    }
    let mut out = OutputDir::prepare(root).config()?;

    let map = bargmann_transform(&u, &pg).module()?;
    let has_oracle = closed_form_magnitude(&p.datum, (0.0, 0.0)).is_ok();
    let mut rows = Vec::with_capacity(pg.len());
    let mut deviation: f64 = 0.0;
    for i in 0..pg.x.count {
        for k in 0..pg.xi.count {
            let z = map.node(i, k);
            let v = map.get(i, k);
            let r = z.0.hypot(z.1);
            if has_oracle && r >= inner && r <= outer {
                let exact = closed_form_magnitude(&p.datum, z).module()?;
                deviation = deviation.max((v.norm() - exact).abs());
            }
            rows.push(vec![num(z.0), num(z.1), num(v.re), num(v.im), num(v.norm())]);
        }
    }
    let l2 = u.norm_l2().powi(2);
    let oracle = has_oracle.then_some(OracleCheck {
        annulus: p.oracle_annulus,
        max_deviation: deviation,
        tolerance: p.oracle_tolerance,
        pass: deviation <= p.oracle_tolerance,
    });
    let st = oracle.as_ref().map_or(Status::Complete, |o| status(o.pass));
    let report = BargmannReport {
        datum: p.datum.clone(),
        datum_l2_norm_sq: l2,
        map_mass: map.mass(),
        mass_ratio: map.mass() / l2,
        max_magnitude: map.max_magnitude(),
        oracle,
    };
    out.write_field("datum.csv", "sampled datum", &u).module()?;
    out.write_table("map.csv", "Bargmann transform on the phase grid", &["x", "xi", "re", "im", "abs"], &rows)
        .module()?;
    out.write_json(REPORT, "mass balance and closed-form comparison", &report).module()?;
    Ok((st, out))
}

#[derive(Serialize)]
struct DirectionCheck {
    expected: Vec<f64>,
    found: Vec<f64>,
    missing: Vec<f64>,
    extraneous: Vec<f64>,
    tolerance: f64,
    pass: bool,
}

#[derive(Serialize)]
struct WavefrontScenarioReport {
    detection: WavefrontReport,
    check: Option<DirectionCheck>,
}

fn bins_table(report: &WavefrontReport) -> Vec<Vec<String>> {
    report
        .bins
        .iter()
        .map(|b| {
            vec![
                b.index.to_string(),
                num(b.center),
                num(b.decay_exponent),
                num(b.fit_residual),
                b.singular.to_string(),
                b.rapid_decay.to_string(),
            ]
        })
        .collect()
}

const BIN_HEADER: [&str; 6] = ["bin", "center", "decay_exponent", "fit_residual", "singular", "rapid_decay"];

pub fn wavefront(cfg: &RunConfig<WavefrontParams>, root: &Path) -> Outcome {
    let p = &cfg.params;
    let grid = grid_of(cfg)?;
    let u = sample_datum(&p.datum, p.window, &grid).config()?;
    p.detection.validate().config()?;
    check_tolerance_bins(p.tolerance_bins)?;
    let mut out = OutputDir::prepare(root).config()?;

    let detection = detect_wavefront(&u, &p.detection).module()?;
    let tol = p.tolerance_bins * p.detection.bin_width() + 1e-9;
    let check = p.expected.as_ref().map(|expected| {
        let found = detection.singular_directions.clone();
        let missing: Vec<f64> = expected.iter().copied().filter(|t| !near_any(*t, &found, tol)).collect();
        let extraneous: Vec<f64> = found.iter().copied().filter(|t| !near_any(*t, expected, tol)).collect();
        DirectionCheck {
            expected: expected.clone(),
            pass: missing.is_empty() && extraneous.is_empty(),
            found,
            missing,
            extraneous,
            tolerance: tol,
        }
    });
    let st = check.as_ref().map_or(Status::Complete, |c| status(c.pass));
    out.write_field("datum.csv", "sampled datum", &u).module()?;
    out.write_table("bins.csv", "per-bin decay fits", &BIN_HEADER, &bins_table(&detection))
        .module()?;
    out.write_json(REPORT, "detected singular directions", &WavefrontScenarioReport { detection, check })
        .module()?;
    Ok((st, out))
}

#[derive(Serialize)]
struct NumericCheck {
    dt: f64,
    endpoint: Vec<f64>,
    max_error: f64,
    tolerance: f64,
    pass: bool,
}

#[derive(Serialize)]
struct FlowReport {
    dim: usize,
    t: f64,
    z0: Vec<f64>,
    endpoint: Vec<f64>,
    jacobian: Vec<Vec<f64>>,
    symplectic_defect: f64,
    energy_start: f64,
    energy_end: f64,
    numeric: Option<NumericCheck>,
}

fn flow_hamiltonian(spec: &FlowHamiltonian) -> anyhow::Result<QuadraticHamiltonian> {
    Ok(match spec {
        FlowHamiltonian::HarmonicOscillator { dim } => {
            if *dim == 0 {
                bail!("dimension must be positive");
            }
            QuadraticHamiltonian::harmonic_oscillator(*dim)
        }
        FlowHamiltonian::Planar { a, b, c } => QuadraticHamiltonian::planar(*a, *b, *c)?,
        FlowHamiltonian::Matrix { rows } => {
            let n = rows.len();
            if n == 0 || rows.iter().any(|r| r.len() != n) {
                bail!("matrix must be square and non-empty");
            }
            QuadraticHamiltonian::new(DMatrix::from_fn(n, n, |r, c| rows[r][c]))?
        }
    })
}

pub fn flow(cfg: &RunConfig<FlowParams>, root: &Path) -> Outcome {
    let p = &cfg.params;
    let q = flow_hamiltonian(&p.hamiltonian).config()?;
    if !p.t.is_finite() {
        return Err(RunError::Config(anyhow!("time {}", p.t)));
    }
    let exact = flow_quadratic(&q, p.t, &p.z0).config()?;
    if let Some(dt) = p.numeric_dt {
        if !(dt > 0.0 && (p.t == 0.0 || dt <= p.t.abs() / 16.0)) {
            return Err(RunError::Config(anyhow!("numeric_dt must lie in (0, |t|/16], got {dt}")));
        }
    }
    if p.trajectory_samples < 2 {
        return Err(RunError::Config(anyhow!("trajectory_samples must be at least 2")));
    }
    let mut out = OutputDir::prepare(root).config()?;

    let jac = exact.jacobian.clone().ok_or_else(|| anyhow!("exact flow without a Jacobian")).module()?;
    let numeric = match p.numeric_dt {
        Some(dt) => {
            let field = HamiltonianField::from_quadratic(&q, p.t.abs().max(1.0));
            let end = flow_numeric(&field, 0.0, p.t, &p.z0, dt).module()?.endpoint;
            let err = end
                .iter()
                .zip(&exact.endpoint)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            Some(NumericCheck {
                dt,
                endpoint: end,
                max_error: err,
                tolerance: p.tolerance,
                pass: err <= p.tolerance,
            })
        }
        None => None,
    };
    let mut rows = Vec::with_capacity(p.trajectory_samples);
    for i in 0..p.trajectory_samples {
        let t = p.t * i as f64 / (p.trajectory_samples - 1) as f64;
        let z = flow_quadratic(&q, t, &p.z0).module()?.endpoint;
        let mut row = vec![num(t)];
        row.extend(z.iter().map(|v| num(*v)));
        row.push(num(q.value(&z)));
        rows.push(row);
    }
    let mut header = vec!["t".to_string()];
    header.extend((0..q.dim()).map(|i| format!("x{i}")));
    header.extend((0..q.dim()).map(|i| format!("xi{i}")));
    header.push("energy".into());
    let header: Vec<&str> = header.iter().map(String::as_str).collect();

    let st = numeric.as_ref().map_or(Status::Complete, |n| status(n.pass));
    let report = FlowReport {
        dim: q.dim(),
        t: p.t,
        z0: p.z0.clone(),
        endpoint: exact.endpoint.clone(),
        jacobian: (0..jac.nrows()).map(|r| jac.row(r).iter().copied().collect()).collect(),
        symplectic_defect: symplectic_defect(&jac),
        energy_start: q.value(&p.z0),
        energy_end: q.value(&exact.endpoint),
        numeric,
    };
    out.write_table("trajectory.csv", "exact trajectory samples", &header, &rows).module()?;
    out.write_json(REPORT, "flow endpoint, Jacobian and numerical cross-check", &report).module()?;
    Ok((st, out))
}

#[derive(Serialize)]
struct SnapshotSummary {
    time: f64,
    file: String,
    l2_norm: f64,
    sup_norm: f64,
}

#[derive(Serialize)]
struct EvolveReport {
    steps: usize,
    initial_l2_norm: f64,
    final_l2_norm: f64,
    relative_mass_drift: f64,
    snapshots: Vec<SnapshotSummary>,
}

pub fn evolve(cfg: &RunConfig<EvolveParams>, root: &Path) -> Outcome {
    let p = &cfg.params;
    let grid = grid_of(cfg)?;
    let u0 = sample_datum(&p.datum, p.window, &grid).config()?;
    let ham = p.hamiltonian.build(&grid).config()?;
    let ecfg = EvolutionConfig::new(ham, p.nonlinearity.build(), p.t_final, p.dt)
        .with_snapshots(p.snapshot_times.clone())
        .with_backend(p.backend);
    ecfg.validate(&grid).config()?;
    let mut out = OutputDir::prepare(root).config()?;

    let trace = propagate_strang(&u0, &ecfg).module()?;
    out.write_field("datum.csv", "initial datum", &u0).module()?;
    let mut snapshots = Vec::with_capacity(trace.snapshots.len());
    for (i, (t, field)) in trace.snapshots.iter().enumerate() {
        let file = format!("snapshot_{i:02}.csv");
        out.write_field(&file, &format!("solution at t = {t}"), field).module()?;
        snapshots.push(SnapshotSummary {
            time: *t,
            file,
            l2_norm: field.norm_l2(),
            sup_norm: field.norm_sup(),
        });
    }
    let rows: Vec<Vec<String>> = trace
        .diagnostics
        .iter()
        .map(|d| vec![num(d.time), num(d.l2_norm), d.energy.map_or(String::new(), num)])
        .collect();
    out.write_table("diagnostics.csv", "per-step norm and energy", &["time", "l2_norm", "energy"], &rows)
        .module()?;
    let first = trace.diagnostics.first().map_or(0.0, |d| d.l2_norm);
    let last = trace.diagnostics.last().map_or(0.0, |d| d.l2_norm);
    let report = EvolveReport {
        steps: trace.diagnostics.len().saturating_sub(1),
        initial_l2_norm: first,
        final_l2_norm: last,
        relative_mass_drift: if first > 0.0 { (last * last - first * first) / (first * first) } else { 0.0 },
        snapshots,
    };
    out.write_json(REPORT, "evolution summary", &report).module()?;
    Ok((Status::Complete, out))
}

#[derive(Serialize)]
struct PropagationStep {
    time: f64,
    file: String,
    singular_directions: Vec<f64>,
    comparison: MatchResult,
    pass: bool,
}

#[derive(Serialize)]
struct PropagationReport {
    initial_singular_directions: Vec<f64>,
    tolerance: f64,
    steps: Vec<PropagationStep>,
    pass: bool,
}

pub fn propagation_check(cfg: &RunConfig<PropagationCheckParams>, root: &Path) -> Outcome {
    let p = &cfg.params;
    let grid = grid_of(cfg)?;
    let u0 = sample_datum(&p.datum, p.window, &grid).config()?;
    let q = match p.hamiltonian {
        HamiltonianSpec::HarmonicOscillator => QuadraticHamiltonian::harmonic_oscillator(1),
        HamiltonianSpec::Quadratic { a, b, c } => QuadraticHamiltonian::planar(a, b, c).config()?,
        HamiltonianSpec::Potential { .. } => {
            return Err(RunError::Config(anyhow!(
                "propagation-check needs a quadratic symbol; potentials have no exact flow here"
            )))
        }
    };
    if p.times.is_empty() || p.times.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
        return Err(RunError::Config(anyhow!("times must be a non-empty list of positive numbers")));
    }
    p.detection.validate().config()?;
    check_tolerance_bins(p.tolerance_bins)?;
    let t_final = p.times.iter().copied().fold(0.0, f64::max);
    let ecfg = EvolutionConfig::new(p.hamiltonian.build(&grid).config()?, p.nonlinearity.build(), t_final, p.dt)
        .with_snapshots(p.times.clone());
    ecfg.validate(&grid).config()?;
    let mut out = OutputDir::prepare(root).config()?;

    let initial = detect_wavefront(&u0, &p.detection).module()?;
    let trace = propagate_strang(&u0, &ecfg).module()?;
    let tol = p.tolerance_bins * p.detection.bin_width();
    out.write_field("datum.csv", "initial datum", &u0).module()?;
    let mut steps = Vec::with_capacity(trace.snapshots.len());
    for (i, (t, field)) in trace.snapshots.iter().enumerate() {
        let file = format!("snapshot_{i:02}.csv");
        out.write_field(&file, &format!("solution at t = {t}"), field).module()?;
        let report = detect_wavefront(field, &p.detection).module()?;
        let comparison =
            compare_to_flow(&initial, &report, |th| direction_map(&q, *t, th).unwrap_or(f64::NAN), tol).module()?;
        steps.push(PropagationStep {
            time: *t,
            file,
            singular_directions: report.singular_directions.clone(),
            pass: comparison.is_full_match(),
            comparison,
        });
    }
    let pass = steps.iter().all(|s| s.pass);
    let report = PropagationReport {
        initial_singular_directions: initial.singular_directions.clone(),
        tolerance: tol,
        steps,
        pass,
    };
    out.write_json(REPORT, "singular directions against the Hamiltonian flow", &report)
        .module()?;
    Ok((status(pass), out))
}

#[derive(Serialize)]
struct AnomalyReport {
    expected_anomalous: Vec<f64>,
    anomalous: Vec<f64>,
    missing: Vec<f64>,
    tolerance: f64,
    checks: Vec<CompositionReport>,
    pass: bool,
}

pub fn anomaly_demo(cfg: &RunConfig<AnomalyDemoParams>, root: &Path) -> Outcome {
    let p = &cfg.params;
    let grid = grid_of(cfg)?;
    let u = sample_datum(&p.datum, p.window, &grid).config()?;
    let f = p.nonlinearity.build();
    f.validate().config()?;
    p.detection.validate().config()?;
    check_tolerance_bins(p.tolerance_bins)?;
    if p.expected_anomalous.iter().any(|t| !t.is_finite()) {
        return Err(RunError::Config(anyhow!("expected_anomalous must be finite angles")));
    }
    let mut out = OutputDir::prepare(root).config()?;

    let directions: Vec<f64> = if p.expected_anomalous.is_empty() {
        vec![0.0]
    } else {
        p.expected_anomalous.iter().map(|t| t.rem_euclid(TAU)).collect()
    };
    let checks = directions
        .iter()
        .map(|&theta| microlocal_composition_check(&u, &f, p.s, p.sigma, theta, &p.detection))
        .collect::<phasefront_core::Result<Vec<_>>>()
        .module()?;
    let anomalous = checks[0].anomalous.clone();
    let tol = p.tolerance_bins * p.detection.bin_width() + 1e-9;
    let missing: Vec<f64> = p
        .expected_anomalous
        .iter()
        .copied()
        .filter(|t| !near_any(*t, &anomalous, tol))
        .collect();
    let pass = if p.expected_anomalous.is_empty() {
        anomalous.is_empty()
    } else {
        missing.is_empty()
    };
    out.write_field("datum.csv", "datum u", &u).module()?;
    out.write_field("image.csv", "F(u)", &f.apply(&u)).module()?;
    let report = AnomalyReport {
        expected_anomalous: p.expected_anomalous.clone(),
        anomalous,
        missing,
        tolerance: tol,
        checks,
        pass,
    };
    out.write_json(REPORT, "singular directions created by the nonlinearity", &report)
        .module()?;
    Ok((status(pass), out))
}

#[derive(Serialize)]
struct MoserCheck {
    stability: MoserStability,
    max_spread: f64,
    pass: bool,
}

#[derive(Serialize)]
struct ParadiffReport {
    levels: usize,
    max_levels: usize,
    summary: DecompositionSummary,
    telescoping_gap: f64,
    telescoping_tolerance: f64,
    telescoping_pass: bool,
    moser: Vec<MoserCheck>,
    remainder: Vec<RemainderBound>,
    pass: bool,
}

/// Random combinations of the first `modes` Hermite functions, sup-normalized.
pub fn hermite_family(grid: &GridSpec1D, modes: usize, samples: usize, rng: &mut ChaCha8Rng) -> Vec<SampledField> {
    (0..samples)
        .map(|_| {
            let c: Vec<Complex64> = (0..modes)
                .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
                .collect();
            let u = SampledField::from_fn(*grid, |x| c.iter().enumerate().map(|(n, a)| a * hermite_function(n, x)).sum());
            let sup = u.norm_sup();
            u.map(|z| z / sup)
        })
        .collect()
}

pub fn paradiff_probe(cfg: &RunConfig<ParadiffProbeParams>, root: &Path) -> Outcome {
    let p = &cfg.params;
    let grid = grid_of(cfg)?;
    let u = sample_datum(&p.datum, p.window, &grid).config()?;
    let f = p.nonlinearity.build();
    f.validate().config()?;
    let cap = max_truncation_level(&grid)
        .ok_or_else(|| anyhow!("grid resolves no dyadic level"))
        .config()?;
    let levels = p.levels.unwrap_or(cap);
    if levels == 0 || levels > cap {
        return Err(RunError::Config(anyhow!("levels must lie in 1..={cap} on this grid, got {levels}")));
    }
    let m = &p.moser;
    if m.modes == 0 || m.modes > grid.len() / 4 || m.families == 0 || m.samples == 0 || p.remainder.test_vectors == 0 {
        return Err(RunError::Config(anyhow!(
            "random families need 1..={} modes and at least one sample",
            grid.len() / 4
        )));
    }
    let mut out = OutputDir::prepare(root).config()?;

    let part = PhasePartition::new(levels);
    let d = ParadiffDecomposition::new(&u, &f, &part, levels, p.delta).module()?;
    let summary = d.summary(&u, &f);
    let scale = f.apply(&u).norm_l2().max(1.0);
    let gap = (summary.telescoping_residual - summary.truncation_residual).abs() / scale;
    let telescoping_pass = gap <= p.telescoping_tolerance;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let families: Vec<Vec<SampledField>> = (0..m.families)
        .map(|_| hermite_family(&grid, m.modes, m.samples, &mut rng))
        .collect();
    let moser = m
        .orders
        .iter()
        .map(|&s| {
            moser_constant_stability(&families, &f, s).map(|stability| MoserCheck {
                pass: stability.spread <= m.max_spread,
                max_spread: m.max_spread,
                stability,
            })
        })
        .collect::<phasefront_core::Result<Vec<_>>>()
        .module()?;
    let tests = hermite_family(&grid, m.modes, p.remainder.test_vectors, &mut rng);
    let r = &p.remainder;
    let remainder = remainder_mapping_probe(&d.flat, &tests, r.s, r.r, p.delta, &r.epsilons).module()?;

    let rows: Vec<Vec<String>> = (0..levels)
        .map(|k| {
            vec![
                k.to_string(),
                num(summary.m_sup[k]),
                num(summary.m_tilde_sup[k]),
                num(summary.sharp_sup[k]),
                num(summary.flat_sup[k]),
            ]
        })
        .collect();
    let pass = telescoping_pass && moser.iter().all(|c| c.pass);
    out.write_field("datum.csv", "datum u", &u).module()?;
    out.write_table(
        "levels.csv",
        "per-level coefficient sups",
        &["level", "m_sup", "m_tilde_sup", "sharp_sup", "flat_sup"],
        &rows,
    )
    .module()?;
    let report = ParadiffReport {
        levels,
        max_levels: cap,
        summary,
        telescoping_gap: gap,
        telescoping_tolerance: p.telescoping_tolerance,
        telescoping_pass,
        moser,
        remainder,
        pass,
    };
    out.write_json(REPORT, "paradifferential decomposition probes", &report).module()?;
    Ok((status(pass), out))
}

