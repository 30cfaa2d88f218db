//! Phase-space paradifferential decomposition of a nonlinearity.
//!
//! With `u_k = Φ_k(x, D)u` and `v_k = φ_{k+1}(x, D)u`, the telescoping sum
//!
//! ```text
//! F(u_K) = F(u_0) + Σ_{k<K} m_k v_k + m̃_k v̄_k,
//! m_k  = ∫₀¹ ∂_z F(u_k + t v_k) dt,   m̃_k = ∫₀¹ ∂_z̄ F(u_k + t v_k) dt
//! ```
//!
//! is exact. The symbol `M(x, ξ) = Σ m_k(x) φ_{k+1}(x, ξ)` therefore satisfies
//! `M(x, D)u = Σ m_k v_k`, and splitting each coefficient at frequency
//! `2^{kδ}` gives the smooth part `M♯` and the remainder `M♭`.

use std::num::NonZeroUsize;

use gauss_quad::legendre::GaussLegendre;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bargmann::bargmann_transform;
use crate::error::{Error, Result};
use crate::fit::{fit_line, log_log_fit, LineFit};
use crate::grid::{fourier_multiplier, Domain, GridSpec1D, SampledField};
use crate::qsobolev::{bump, kn_quantize, qs_norm, PhasePartition, RowSymbol};
use crate::schrodinger::Nonlinearity;
use crate::wavefront::{detect_on_map, sobolev_growth, ConicSector, DetectionParams};

/// Nodes of the Gauss–Legendre rule in the telescoping integrals.
pub const QUADRATURE_NODES: usize = 16;

/// Deepest truncation level on `grid`: the outer edge `2^{K+1}` of `Φ_K`
/// stays inside the resolved band `|ξ| ≤ π/h`.
pub fn max_truncation_level(grid: &GridSpec1D) -> Option<usize> {
    let top = grid.nyquist().log2().floor() - 1.0;
    (top >= 1.0).then_some(top as usize)
}

/// Coefficients of the telescoping sum for levels `0..K`.
#[derive(Clone, Debug)]
pub struct TelescopeCoefficients {
    pub levels: usize,
    /// `m_k`, `k < K`.
    pub m: Vec<SampledField>,
    /// `m̃_k`, `k < K`.
    pub m_tilde: Vec<SampledField>,
    /// `u_k = Φ_k(x, D)u`, `k ≤ K`.
    pub lowpass: Vec<SampledField>,
    /// `v_k = φ_{k+1}(x, D)u`, `k < K`.
    pub pieces: Vec<SampledField>,
}

fn quadrature_on_unit_interval() -> Vec<(f64, f64)> {
    let rule = GaussLegendre::new(NonZeroUsize::new(QUADRATURE_NODES).expect("nonzero"));
    rule.as_node_weight_pairs()
        .iter()
        .map(|&(x, w)| (0.5 * (x + 1.0), 0.5 * w))
        .collect()
}

fn check_truncation(grid: &GridSpec1D, part: &PhasePartition, k: usize) -> Result<()> {
    let cap = max_truncation_level(grid).unwrap_or(0);
    let max = cap.min(part.levels());
    if k == 0 || k > max {
        return Err(Error::LevelOutOfBand { level: k, max });
    }
    Ok(())
}

/// `m_k`, `m̃_k` for `k < K` by 16-node Gauss–Legendre quadrature in `t`.
pub fn telescope_coeffs(
    u: &SampledField,
    f: &Nonlinearity,
    part: &PhasePartition,
    k_max: usize,
) -> Result<TelescopeCoefficients> {
    u.expect_domain(Domain::Space)?;
    f.validate()?;
    check_truncation(u.grid(), part, k_max)?;
    let lowpass = (0..=k_max)
        .map(|k| kn_quantize(&part.cumulative_symbol(k), u))
        .collect::<Result<Vec<_>>>()?;
    let pieces = (0..k_max)
        .map(|k| kn_quantize(&part.level_symbol(k + 1), u))
        .collect::<Result<Vec<_>>>()?;
    let rule = quadrature_on_unit_interval();
    let (m, m_tilde): (Vec<_>, Vec<_>) = (0..k_max)
        .into_par_iter()
        .map(|k| {
            let base = lowpass[k].values();
            let step = pieces[k].values();
            let (dz, dzbar): (Vec<Complex64>, Vec<Complex64>) = base
                .iter()
                .zip(step)
                .map(|(b, s)| {
                    let mut a = Complex64::new(0.0, 0.0);
                    let mut c = Complex64::new(0.0, 0.0);
                    for &(t, w) in &rule {
                        let z = b + t * s;
                        a += w * f.dz(z);
                        c += w * f.dzbar(z);
                    }
                    (a, c)
                })
                .unzip();
            (u.with_values(dz), u.with_values(dzbar))
        })
        .unzip();
    Ok(TelescopeCoefficients {
        levels: k_max,
        m,
        m_tilde,
        lowpass,
        pieces,
    })
}

impl TelescopeCoefficients {
    /// `F(u_0) + Σ_{k<K} (m_k v_k + m̃_k v̄_k)`.
    pub fn reconstruction(&self, f: &Nonlinearity) -> SampledField {
        let mut out = f.apply(&self.lowpass[0]).into_values();
        for k in 0..self.levels {
            let terms = self.m[k]
                .values()
                .iter()
                .zip(self.m_tilde[k].values())
                .zip(self.pieces[k].values());
            for (o, ((m, mt), v)) in out.iter_mut().zip(terms) {
                *o += m * v + mt * v.conj();
            }
        }
        self.lowpass[0].with_values(out)
    }

    pub fn truncated(&self) -> &SampledField {
        &self.lowpass[self.levels]
    }
}

/// Lazily evaluated `Σ_{k<K} c_k(x) φ_{k+1}(x, ξ)`.
#[derive(Clone, Debug)]
pub struct LevelSymbol {
    grid: GridSpec1D,
    part: PhasePartition,
    coefficients: Vec<Vec<Complex64>>,
    label: String,
}

impl LevelSymbol {
    pub fn new(part: PhasePartition, coefficients: &[SampledField], label: impl Into<String>) -> Result<Self> {
        let grid = *coefficients
            .first()
            .ok_or_else(|| Error::InvalidParameter("symbol needs at least one level".into()))?
            .grid();
        if let Some(c) = coefficients.iter().find(|c| *c.grid() != grid) {
            return Err(Error::DimensionMismatch(format!(
                "coefficient grids differ: {grid} and {}",
                c.grid()
            )));
        }
        Ok(Self {
            grid,
            part,
            coefficients: coefficients.iter().map(|c| c.values().to_vec()).collect(),
            label: label.into(),
        })
    }

    pub fn levels(&self) -> usize {
        self.coefficients.len()
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn coefficient(&self, k: usize) -> &[Complex64] {
        &self.coefficients[k]
    }

    pub fn value(&self, j: usize, m: usize) -> Complex64 {
        let (x, xi) = (self.grid.point(j), self.grid.frequency(m));
        self.coefficients
            .iter()
            .enumerate()
            .map(|(k, c)| c[j] * self.part.phi(k + 1, x, xi))
            .sum()
    }

    /// Applies the symbol to `u` through Kohn–Nirenberg quantization.
    pub fn apply(&self, u: &SampledField) -> Result<SampledField> {
        kn_quantize(self, u)
    }

    /// Per-level `‖c_k‖_{L^∞}`.
    pub fn coefficient_sups(&self) -> Vec<f64> {
        self.coefficients
            .iter()
            .map(|c| c.iter().map(|v| v.norm()).fold(0.0, f64::max))
            .collect()
    }
}

impl RowSymbol for LevelSymbol {
    fn fill_row(&self, grid: &GridSpec1D, j: usize, row: &mut [Complex64]) {
        let x = grid.point(j);
        for (m, r) in row.iter_mut().enumerate() {
            let xi = grid.frequency(m);
            let mut acc = Complex64::new(0.0, 0.0);
            for (k, c) in self.coefficients.iter().enumerate() {
                let p = self.part.phi(k + 1, x, xi);
                if p != 0.0 {
                    acc += c[j] * p;
                }
            }
            *r = acc;
        }
    }

    fn sampled_on(&self) -> Option<&GridSpec1D> {
        Some(&self.grid)
    }
}

/// `M(x, ξ) = Σ_{k<K} m_k(x) φ_{k+1}(x, ξ)`.
pub fn assemble_symbol(coeffs: &TelescopeCoefficients, part: &PhasePartition) -> Result<LevelSymbol> {
    LevelSymbol::new(*part, &coeffs.m, format!("M, K={}", coeffs.levels))
}

/// Same as [`assemble_symbol`] for the `m̃_k`, acting on `ū`.
pub fn assemble_conjugate_symbol(coeffs: &TelescopeCoefficients, part: &PhasePartition) -> Result<LevelSymbol> {
    LevelSymbol::new(*part, &coeffs.m_tilde, format!("M~, K={}", coeffs.levels))
}

/// `ψ₀(2^{-kδ}D)m_k` and the remainder `m_k - ψ₀(2^{-kδ}D)m_k`.
pub fn split_coefficient(m_k: &SampledField, k: usize, delta: f64) -> Result<(SampledField, SampledField)> {
    let scale = 2f64.powf(-(k as f64) * delta);
    let sharp = fourier_multiplier(m_k, |xi| Complex64::new(bump(scale * xi), 0.0))?;
    let flat = m_k.with_values(
        m_k.values()
            .iter()
            .zip(sharp.values())
            .map(|(a, b)| a - b)
            .collect(),
    );
    Ok((sharp, flat))
}

/// `(M♯, M♭)` with smoothing parameter `δ ∈ (0, 1)`.
pub fn symbol_split(
    coeffs: &TelescopeCoefficients,
    part: &PhasePartition,
    delta: f64,
) -> Result<(LevelSymbol, LevelSymbol)> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidParameter(format!("δ must lie in (0, 1), got {delta}")));
    }
    let (sharp, flat): (Vec<_>, Vec<_>) = coeffs
        .m
        .iter()
        .enumerate()
        .map(|(k, m)| split_coefficient(m, k, delta))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .unzip();
    Ok((
        LevelSymbol::new(*part, &sharp, format!("M#, K={}, delta={delta}", coeffs.levels))?,
        LevelSymbol::new(*part, &flat, format!("Mb, K={}, delta={delta}", coeffs.levels))?,
    ))
}

/// Decay of `‖m♭_k‖_{L^∞}` in `k`: slope of `log₂` sup against `k`, over
/// levels `first..K`.
pub fn flat_decay_fit(flat: &LevelSymbol, first: usize) -> LineFit {
    let sups = flat.coefficient_sups();
    let ks: Vec<f64> = (first..sups.len()).map(|k| k as f64).collect();
    let logs: Vec<f64> = sups[first..].iter().map(|s| s.max(f64::MIN_POSITIVE).log2()).collect();
    fit_line(&ks, &logs)
}

/// Full decomposition of `F(u)` at truncation `K` and smoothing `δ`.
#[derive(Clone, Debug)]
pub struct ParadiffDecomposition {
    pub levels: usize,
    pub delta: f64,
    pub coeffs: TelescopeCoefficients,
    pub symbol: LevelSymbol,
    pub sharp: LevelSymbol,
    pub flat: LevelSymbol,
    /// `F(u_0)`.
    pub base: SampledField,
}

/// Per-level norms and the two sides of the telescoping identity.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecompositionSummary {
    pub levels: usize,
    pub delta: f64,
    pub m_sup: Vec<f64>,
    pub m_tilde_sup: Vec<f64>,
    pub sharp_sup: Vec<f64>,
    pub flat_sup: Vec<f64>,
    pub flat_decay: LineFit,
    /// `‖F(u) - F(u_0) - Σ(m_k v_k + m̃_k v̄_k)‖_{L²}`.
    pub telescoping_residual: f64,
    /// `‖F(u) - F(u_K)‖_{L²}`.
    pub truncation_residual: f64,
}

impl ParadiffDecomposition {
    pub fn new(u: &SampledField, f: &Nonlinearity, part: &PhasePartition, k_max: usize, delta: f64) -> Result<Self> {
        let coeffs = telescope_coeffs(u, f, part, k_max)?;
        let symbol = assemble_symbol(&coeffs, part)?;
        let (sharp, flat) = symbol_split(&coeffs, part, delta)?;
        let base = f.apply(&coeffs.lowpass[0]);
        Ok(Self {
            levels: k_max,
            delta,
            coeffs,
            symbol,
            sharp,
            flat,
            base,
        })
    }

    /// `(‖F(u) - reconstruction‖, ‖F(u) - F(u_K)‖)`; equal up to rounding.
    pub fn telescoping_residuals(&self, u: &SampledField, f: &Nonlinearity) -> (f64, f64) {
        let fu = f.apply(u);
        let lhs = fu.distance_l2(&self.coeffs.reconstruction(f));
        let rhs = fu.distance_l2(&f.apply(self.coeffs.truncated()));
        (lhs, rhs)
    }

    pub fn summary(&self, u: &SampledField, f: &Nonlinearity) -> DecompositionSummary {
        let sups = |fields: &[SampledField]| fields.iter().map(|c| c.norm_sup()).collect::<Vec<_>>();
        let (lhs, rhs) = self.telescoping_residuals(u, f);
        DecompositionSummary {
            levels: self.levels,
            delta: self.delta,
            m_sup: sups(&self.coeffs.m),
            m_tilde_sup: sups(&self.coeffs.m_tilde),
            sharp_sup: self.sharp.coefficient_sups(),
            flat_sup: self.flat.coefficient_sups(),
            flat_decay: flat_decay_fit(&self.flat, 1.min(self.levels.saturating_sub(2))),
            telescoping_residual: lhs,
            truncation_residual: rhs,
        }
    }
}

/// Symbol class `(1 + |x| + |ξ|)^{m - ρ|α| + δ|β|}` used to weight the
/// derivatives in [`seminorm_probe`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SymbolClass {
    pub order: f64,
    pub rho: f64,
    pub delta: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeminormProbe {
    /// Outer radius `2^l` of each dyadic annulus.
    pub radii: Vec<f64>,
    /// Weighted derivative sup per annulus.
    pub sups: Vec<f64>,
    /// Log-log fit over the annuli with non-zero sup; slope 0 when fewer
    /// than two qualify.
    pub fit: LineFit,
}

fn central_weights(order: usize) -> &'static [f64] {
    match order {
        0 => &[0.0, 1.0, 0.0],
        1 => &[-0.5, 0.0, 0.5],
        _ => &[1.0, -2.0, 1.0],
    }
}

/// Weighted sups of `∂_x^β ∂_ξ^α M` over dyadic annuli in `|(x, ξ)|`, by
/// central differences; rows are generated three at a time.
pub fn seminorm_probe(
    symbol: &dyn RowSymbol,
    grid: &GridSpec1D,
    alpha: usize,
    beta: usize,
    class: SymbolClass,
) -> Result<SeminormProbe> {
    if alpha > 2 || beta > 2 {
        return Err(Error::StencilOverrun(format!(
            "derivative orders (α={alpha}, β={beta}) exceed the second-order stencils"
        )));
    }
    let n = grid.len();
    if n < 5 {
        return Err(Error::StencilOverrun(format!("{n} nodes leave no interior for the stencil")));
    }
    let wx = central_weights(beta);
    let wxi = central_weights(alpha);
    let hx = grid.spacing().powi(beta as i32);
    let hxi = grid.freq_spacing().powi(alpha as i32);
    let exponent = class.order - class.rho * alpha as f64 + class.delta * beta as f64;
    let reach = grid.half_width().min(grid.nyquist());
    let annuli = reach.log2().floor().max(0.0) as usize + 1;
    let annulus_of = |r: f64| -> Option<usize> {
        let a = if r < 1.0 { 0 } else { r.log2().floor() as usize + 1 };
        (a < annuli && r <= reach).then_some(a)
    };
    let zero = Complex64::new(0.0, 0.0);
    let sups = (1..n - 1)
        .into_par_iter()
        .map_init(
            || (vec![zero; n], vec![zero; n], vec![zero; n]),
            |(a, b, c), j| {
                symbol.fill_row(grid, j - 1, a);
                symbol.fill_row(grid, j, b);
                symbol.fill_row(grid, j + 1, c);
                let x = grid.point(j);
                let mut local = vec![0.0f64; annuli];
                for m in 1..n - 1 {
                    let xi = grid.frequency(m);
                    let Some(slot) = annulus_of(x.hypot(xi)) else { continue };
                    let mut d = zero;
                    for (rw, row) in wx.iter().zip([&*a, &*b, &*c]) {
                        if *rw == 0.0 {
                            continue;
                        }
                        let inner = wxi[0] * row[m - 1] + wxi[1] * row[m] + wxi[2] * row[m + 1];
                        d += rw * inner;
                    }
                    let v = d.norm() / (hx * hxi) * (1.0 + x.abs() + xi.abs()).powf(-exponent);
                    local[slot] = local[slot].max(v);
                }
                local
            },
        )
        .reduce(
            || vec![0.0; annuli],
            |a, b| a.iter().zip(&b).map(|(p, q)| p.max(*q)).collect(),
        );
    let radii: Vec<f64> = (0..annuli).map(|l| 2f64.powi(l as i32)).collect();
    let (rs, vs): (Vec<f64>, Vec<f64>) = radii
        .iter()
        .zip(&sups)
        .filter(|(_, v)| **v > 0.0)
        .map(|(r, v)| (*r, *v))
        .unzip();
    let fit = if rs.len() >= 2 {
        log_log_fit(&rs, &vs)
    } else {
        LineFit {
            slope: 0.0,
            intercept: 0.0,
            residual: 0.0,
        }
    };
    Ok(SeminormProbe { radii, sups, fit })
}

/// `Σ_{j ≤ J} 2^{-rj} cos(2^j x) η(x)` with `η(x) = ψ₀(x/a)`; a standard
/// Zygmund-class `C^r_*` test function.
pub fn lacunary_field(grid: &GridSpec1D, r: f64, top: usize, window: f64) -> SampledField {
    SampledField::from_fn(*grid, |x| {
        let s: f64 = (0..=top)
            .map(|j| 2f64.powf(-r * j as f64) * (2f64.powi(j as i32) * x).cos())
            .sum();
        Complex64::new(s * bump(x / window), 0.0)
    })
}

/// Regularity of `F(u)` at one direction, as seen by the detector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompositionReport {
    pub direction: f64,
    pub s: f64,
    pub sigma: f64,
    /// `1/2 < s ≤ σ < 2s - 1/2`.
    pub within_hypotheses: bool,
    pub input_qs_norm: f64,
    pub input_growth: f64,
    pub output_growth: f64,
    pub input_regular: bool,
    pub output_regular: bool,
    pub input_singular: Vec<f64>,
    pub output_singular: Vec<f64>,
    /// Singular directions of `F(u)` at least one bin away from every
    /// singular direction of `u`.
    pub anomalous: Vec<f64>,
}

impl CompositionReport {
    /// Regular input stays regular.
    pub fn preserved(&self) -> bool {
        !self.input_regular || self.output_regular
    }
}

/// Runs the detector and the `Q^σ` growth test on `u` and `F(u)` at `θ`.
pub fn microlocal_composition_check(
    u: &SampledField,
    f: &Nonlinearity,
    s: f64,
    sigma: f64,
    theta: f64,
    params: &DetectionParams,
) -> Result<CompositionReport> {
    params.validate()?;
    f.validate()?;
    let pg = params.probe_grid()?;
    let fu = f.apply(u);
    let sector = ConicSector::new(theta, params.half_width, params.inner_radius, params.outer_radius)?;
    let bin = params.bin_of(theta);

    let analyse = |field: &SampledField| -> Result<(f64, bool, Vec<f64>)> {
        let map = bargmann_transform(field, &pg)?;
        let report = detect_on_map(&map, params)?;
        let growth = sobolev_growth(&map, &sector, sigma, &params.growth_radii)?.slope;
        let regular = !report.bins[bin].singular && growth <= params.growth_threshold;
        Ok((growth, regular, report.singular_directions))
    };
    let (input_growth, input_regular, input_singular) = analyse(u)?;
    let (output_growth, output_regular, output_singular) = analyse(&fu)?;
    let tol = params.bin_width() + 1e-9;
    let anomalous = output_singular
        .iter()
        .copied()
        .filter(|t| {
            input_singular
                .iter()
                .all(|q| crate::hamflow::angle_distance(*t, *q) > tol)
        })
        .collect();
    Ok(CompositionReport {
        direction: theta,
        s,
        sigma,
        within_hypotheses: 0.5 < s && s <= sigma && sigma < 2.0 * s - 0.5,
        input_qs_norm: qs_norm(u, s),
        input_growth,
        output_growth,
        input_regular,
        output_regular,
        input_singular,
        output_singular,
        anomalous,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MoserProbe {
    pub s: f64,
    /// `‖F(u)‖_{Q^s} / ‖u‖_{Q^s}` per sample.
    pub ratios: Vec<f64>,
    pub median: f64,
    /// Largest relative deviation of a ratio from the median.
    pub spread: f64,
}

/// Moser-type ratios `‖F(u)‖_{Q^s} / ‖u‖_{Q^s}` over a family of samples.
pub fn moser_probe(family: &[SampledField], f: &Nonlinearity, s: f64) -> Result<MoserProbe> {
    if family.is_empty() {
        return Err(Error::InvalidParameter("empty sample family".into()));
    }
    f.validate()?;
    let ratios: Vec<f64> = family
        .par_iter()
        .map(|u| qs_norm(&f.apply(u), s) / qs_norm(u, s))
        .collect();
    let median = median(&ratios);
    let spread = ratios
        .iter()
        .map(|r| (r / median - 1.0).abs())
        .fold(0.0, f64::max);
    Ok(MoserProbe {
        s,
        ratios,
        median,
        spread,
    })
}

/// Spread of the estimated Moser constant across independent families.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MoserStability {
    pub s: f64,
    /// `max ‖F(u)‖_{Q^s} / ‖u‖_{Q^s}` within each family.
    pub constants: Vec<f64>,
    pub median: f64,
    /// Largest relative deviation of a family's constant from the median.
    pub spread: f64,
    pub probes: Vec<MoserProbe>,
}

/// Estimates the Moser constant on each family and measures how much the
/// estimates disagree.
pub fn moser_constant_stability(families: &[Vec<SampledField>], f: &Nonlinearity, s: f64) -> Result<MoserStability> {
    if families.is_empty() {
        return Err(Error::InvalidParameter("no sample families".into()));
    }
    let probes = families
        .iter()
        .map(|fam| moser_probe(fam, f, s))
        .collect::<Result<Vec<_>>>()?;
    let constants: Vec<f64> = probes.iter().map(|p| p.ratios.iter().copied().fold(0.0, f64::max)).collect();
    let median = median(&constants);
    let spread = constants.iter().map(|c| (c / median - 1.0).abs()).fold(0.0, f64::max);
    Ok(MoserStability {
        s,
        constants,
        median,
        spread,
        probes,
    })
}

fn median(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mid = sorted.len() / 2;
    if sorted.len() % 2 == 1 {
        sorted[mid]
    } else {
        0.5 * (sorted[mid - 1] + sorted[mid])
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RemainderBound {
    pub epsilon: f64,
    /// `max ‖M♭(x, D)v‖_{Q^s} / ‖v‖_{Q^{s+ε-δr}}` over the test vectors.
    pub ratio: f64,
}

/// Empirical mapping ratios of `M♭(x, D)` from `Q^{s+ε-δr}` to `Q^s`.
pub fn remainder_mapping_probe(
    flat: &LevelSymbol,
    tests: &[SampledField],
    s: f64,
    r: f64,
    delta: f64,
    epsilons: &[f64],
) -> Result<Vec<RemainderBound>> {
    let images = tests
        .iter()
        .map(|v| flat.apply(v).map(|w| qs_norm(&w, s)))
        .collect::<Result<Vec<_>>>()?;
    Ok(epsilons
        .iter()
        .map(|&eps| {
            let ratio = tests
                .iter()
                .zip(&images)
                .map(|(v, img)| img / qs_norm(v, s + eps - delta * r))
                .fold(0.0, f64::max);
            RemainderBound { epsilon: eps, ratio }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::SignalSpec;
    use crate::schrodinger::PowerTerm;

    fn identity() -> Nonlinearity {
        Nonlinearity::PowerSeries(vec![PowerTerm { p: 1, q: 0, re: 1.0, im: 0.0 }])
    }

    fn small_grid() -> GridSpec1D {
        GridSpec1D::new(16.0, 512).unwrap()
    }

    fn smooth_real(g: &GridSpec1D) -> SampledField {
        SampledField::from_fn(*g, |x| Complex64::new((x.cos() + 0.5 * (3.0 * x).sin()) * (-x * x / 8.0).exp(), 0.0))
    }

    #[test]
    fn quadrature_rule() {
        let rule = quadrature_on_unit_interval();
        assert_eq!(rule.len(), 16);
        let v: f64 = rule.iter().map(|(t, w)| w * t.powi(31)).sum();
        assert!((v - 1.0 / 32.0).abs() < 1e-15);
    }

    #[test]
    fn truncation_levels() {
        let g = small_grid();
        // π/h ≈ 50 → Φ_K reaches 2^{K+1} ≤ 50
        assert_eq!(max_truncation_level(&g), Some(4));
        let u = smooth_real(&g);
        let part = PhasePartition::new(8);
        assert!(matches!(
            telescope_coeffs(&u, &Nonlinearity::Square, &part, 5),
            Err(Error::LevelOutOfBand { level: 5, max: 4 })
        ));
        assert!(telescope_coeffs(&u, &Nonlinearity::Square, &part, 0).is_err());
    }

    #[test]
    fn identity_coefficients() {
        let g = small_grid();
        let u = smooth_real(&g);
        let part = PhasePartition::new(4);
        let c = telescope_coeffs(&u, &identity(), &part, 4).unwrap();
        for k in 0..4 {
            assert!(c.m[k].values().iter().all(|v| (v - 1.0).norm() < 1e-15));
            assert!(c.m_tilde[k].values().iter().all(|v| v.norm() < 1e-15));
        }
        // M(x, D)u = u_K - u_0
        let m = assemble_symbol(&c, &part).unwrap();
        let applied = m.apply(&u).unwrap();
        let expected = c.lowpass[4].with_values(
            c.lowpass[4]
                .values()
                .iter()
                .zip(c.lowpass[0].values())
                .map(|(a, b)| a - b)
                .collect(),
        );
        assert!(applied.distance_l2(&expected) < 1e-12);
        let (sharp, flat) = symbol_split(&c, &part, 0.5).unwrap();
        assert!(flat.coefficient_sups().iter().all(|v| *v < 1e-14));
        assert!(sharp.coefficient_sups().iter().all(|v| (*v - 1.0).abs() < 1e-14));
    }

    #[test]
    fn square_coefficients_average_neighbouring_levels() {
        let g = small_grid();
        let u = smooth_real(&g);
        let part = PhasePartition::new(4);
        let c = telescope_coeffs(&u, &Nonlinearity::Square, &part, 4).unwrap();
        for k in 0..4 {
            let expected: Vec<Complex64> = c.lowpass[k]
                .values()
                .iter()
                .zip(c.lowpass[k + 1].values())
                .map(|(a, b)| a + b)
                .collect();
            for (m, e) in c.m[k].values().iter().zip(&expected) {
                assert!((m - e).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn gauge_coefficients_follow_wirtinger_calculus() {
        let g = small_grid();
        let u = SampledField::from_fn(g, |x| Complex64::from_polar((-x * x / 6.0).exp(), 0.8 * x));
        let part = PhasePartition::new(3);
        let c = telescope_coeffs(&u, &Nonlinearity::Gauge, &part, 3).unwrap();
        // for z(t) = a + tb: ∫₀¹ 2|z|² dt and ∫₀¹ z² dt in closed form
        for k in 0..3 {
            for ((a, b), (m, mt)) in c.lowpass[k]
                .values()
                .iter()
                .zip(c.pieces[k].values())
                .zip(c.m[k].values().iter().zip(c.m_tilde[k].values()))
            {
                let dz = 2.0 * (a.norm_sqr() + (a * b.conj()).re + b.norm_sqr() / 3.0);
                let dzbar = a * a + a * b + b * b / 3.0;
                assert!((m - dz).norm() < 1e-12);
                assert!((mt - dzbar).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn telescoping_identity() {
        let g = small_grid();
        let u = smooth_real(&g);
        let part = PhasePartition::new(4);
        let mut last = f64::INFINITY;
        for k in 1..=4 {
            let d = ParadiffDecomposition::new(&u, &Nonlinearity::Square, &part, k, 0.5).unwrap();
            let (lhs, rhs) = d.telescoping_residuals(&u, &Nonlinearity::Square);
            assert!((lhs - rhs).abs() < 1e-13 * u.norm_l2(), "K={k}: {lhs} vs {rhs}");
            assert!(rhs < last);
            last = rhs;
        }
    }

    #[test]
    fn zero_field_gives_zero_symbol() {
        let g = small_grid();
        let u = SampledField::zeros(g);
        let part = PhasePartition::new(3);
        let d = ParadiffDecomposition::new(&u, &Nonlinearity::Gauge, &part, 3, 0.5).unwrap();
        let probe = seminorm_probe(&d.symbol, &g, 0, 0, SymbolClass { order: 0.0, rho: 1.0, delta: 0.5 }).unwrap();
        assert!(probe.sups.iter().all(|v| *v == 0.0));
        assert_eq!(probe.fit.slope, 0.0);
    }

    #[test]
    fn split_is_exact_nodewise() {
        let g = GridSpec1D::new(8.0, 128).unwrap();
        let u = smooth_real(&g);
        let part = PhasePartition::new(3);
        let d = ParadiffDecomposition::new(&u, &Nonlinearity::Square, &part, 3, 0.7).unwrap();
        for j in 0..g.len() {
            for m in 0..g.len() {
                let total = d.symbol.value(j, m);
                let parts = d.sharp.value(j, m) + d.flat.value(j, m);
                assert!((total - parts).norm() <= 1e-14 * (1.0 + total.norm()));
            }
        }
    }

    #[test]
    fn band_limited_coefficient_has_no_remainder() {
        let g = GridSpec1D::new(48.0, 512).unwrap();
        let m = SampledField::from_fn(g, |x| Complex64::new((-x * x / 50.0).exp(), 0.0));
        let (_, flat) = split_coefficient(&m, 3, 0.5).unwrap();
        assert!(flat.norm_sup() < 1e-12);
    }

    #[test]
    fn stencil_limits() {
        let g = small_grid();
        let part = PhasePartition::new(2);
        let class = SymbolClass { order: 0.0, rho: 1.0, delta: 0.0 };
        assert!(matches!(
            seminorm_probe(&part.level_symbol(1), &g, 3, 0, class),
            Err(Error::StencilOverrun(_))
        ));
        assert!(seminorm_probe(&part.level_symbol(1), &g, 2, 2, class).is_ok());
    }

    #[test]
    fn seminorm_of_a_smooth_symbol() {
        // ∂_ξ Φ_k scales like 2^{-k}, so the ⟨z⟩-weighted sup is level-independent
        let g = GridSpec1D::new(32.0, 1024).unwrap();
        let part = PhasePartition::new(4);
        let class = SymbolClass { order: 0.0, rho: 1.0, delta: 0.0 };
        let peaks: Vec<f64> = (2..=4)
            .map(|k| {
                let p = seminorm_probe(&part.cumulative_symbol(k), &g, 1, 0, class).unwrap();
                p.sups.iter().fold(0.0, |m: f64, v| m.max(*v))
            })
            .collect();
        let (lo, hi) = peaks.iter().fold((f64::MAX, 0.0f64), |(a, b), v| (a.min(*v), b.max(*v)));
        assert!(hi < 8.0 && hi / lo < 2.0, "{peaks:?}");
    }

    #[test]
    fn composition_of_gaussian_stays_regular() {
        let g = GridSpec1D::new(40.0, 4096).unwrap();
        let u = SignalSpec::Gaussian { sigma: 1.0 }.synthesize(&g).unwrap();
        let p = DetectionParams::default();
        let r = microlocal_composition_check(&u, &Nonlinearity::Square, 1.4, 1.7, 1.0, &p).unwrap();
        assert!(r.within_hypotheses);
        assert!(r.input_regular && r.output_regular);
        assert!(r.anomalous.is_empty() && r.output_singular.is_empty());
        let r = microlocal_composition_check(&u, &identity(), 1.4, 1.7, 1.0, &p).unwrap();
        assert_eq!(r.input_singular, r.output_singular);
    }

    #[test]
    fn moser_ratio_summary() {
        let g = small_grid();
        let fam: Vec<SampledField> = (0..3)
            .map(|n| SignalSpec::Hermite { n }.synthesize(&g).unwrap())
            .collect();
        let p = moser_probe(&fam, &Nonlinearity::Square, 1.0).unwrap();
        assert_eq!(p.ratios.len(), 3);
        assert_eq!(p.median, {
            let mut r = p.ratios.clone();
            r.sort_by(f64::total_cmp);
            r[1]
        });
        assert!(moser_probe(&[], &Nonlinearity::Square, 1.0).is_err());
    }

    #[test]
    fn summary_serializes() {
        let g = small_grid();
        let u = smooth_real(&g);
        let part = PhasePartition::new(4);
        let d = ParadiffDecomposition::new(&u, &Nonlinearity::Square, &part, 4, 0.5).unwrap();
        let s = d.summary(&u, &Nonlinearity::Square);
        let text = serde_json::to_string(&s).unwrap();
        let back: DecompositionSummary = serde_json::from_str(&text).unwrap();
        assert_eq!(back, s);
        assert_eq!(s.m_sup.len(), 4);
    }
}
