use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use phasefront_core::grid::{hermite_function, GridSpec1D, SampledField, SignalSpec};
use phasefront_core::paradiff::{
    lacunary_field, max_truncation_level, moser_constant_stability, moser_probe, remainder_mapping_probe, ParadiffDecomposition,
};
use phasefront_core::qsobolev::PhasePartition;
use phasefront_core::schrodinger::Nonlinearity;

fn grid() -> GridSpec1D {
    GridSpec1D::new(16.0, 512).unwrap()
}

fn smooth_real(g: GridSpec1D) -> SampledField {
    SampledField::from_fn(g, |x| Complex64::new((x.cos() + 0.5 * (3.0 * x).sin()) * (-x * x / 8.0).exp(), 0.0))
}

fn hermite_family(g: GridSpec1D, modes: usize, samples: usize, seed: u64) -> Vec<SampledField> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..samples)
        .map(|_| {
            let c: Vec<Complex64> = (0..modes)
                .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
                .collect();
            let u = SampledField::from_fn(g, |x| c.iter().enumerate().map(|(n, a)| a * hermite_function(n, x)).sum());
            // Moser constants depend on ‖u‖_∞, so samples are sup-normalized
            let norm = u.norm_sup();
            u.map(|z| z / norm)
        })
        .collect()
}

#[test]
fn telescoping_holds_at_every_level_and_truncation_improves() {
    let g = grid();
    let cap = max_truncation_level(&g).unwrap();
    assert!(cap >= 3);
    let part = PhasePartition::new(cap);
    let u = smooth_real(g);
    for f in [Nonlinearity::Square, Nonlinearity::Gauge] {
        let mut previous = f64::INFINITY;
        for k in 1..=cap {
            let d = ParadiffDecomposition::new(&u, &f, &part, k, 0.5).unwrap();
            let (lhs, rhs) = d.telescoping_residuals(&u, &f);
            assert!((lhs - rhs).abs() <= 1e-12 * f.apply(&u).norm_l2().max(1.0), "K={k}: {lhs} vs {rhs}");
            assert!(rhs <= previous * (1.0 + 1e-9), "K={k}: {rhs} after {previous}");
            previous = rhs;
        }
    }
}

#[test]
fn moser_constant_is_stable_across_random_families() {
    let g = GridSpec1D::new(16.0, 1024).unwrap();
    for seed in [0, 1, 2] {
        let families: Vec<Vec<SampledField>> = (0..5).map(|i| hermite_family(g, 16, 20, seed * 100 + i)).collect();
        for f in [Nonlinearity::Square, Nonlinearity::Gauge] {
            for s in [0.0, 1.0, 2.0] {
                let st = moser_constant_stability(&families, &f, s).unwrap();
                assert!(st.constants.iter().all(|c| c.is_finite() && *c > 0.0));
                assert!(st.spread <= 0.5, "seed {seed} {f:?} s={s}: {:?}", st.constants);
            }
        }
    }
}

#[test]
fn moser_ratios_are_positive_and_summarized() {
    let g = grid();
    let family = hermite_family(g, 8, 6, 3);
    let probe = moser_probe(&family, &Nonlinearity::Square, 1.0).unwrap();
    assert_eq!(probe.ratios.len(), 6);
    assert!(probe.ratios.iter().all(|r| r.is_finite() && *r > 0.0));
    let deviation = probe.ratios.iter().map(|r| (r / probe.median - 1.0).abs()).fold(0.0, f64::max);
    assert_eq!(deviation, probe.spread);
}

#[test]
fn remainder_ratios_are_finite_and_ordered_in_epsilon() {
    let g = grid();
    let cap = max_truncation_level(&g).unwrap();
    let part = PhasePartition::new(cap);
    let (r, delta, s) = (1.5, 0.5, 1.0);
    let u = lacunary_field(&g, r, 4, 4.0);
    let d = ParadiffDecomposition::new(&u, &Nonlinearity::Square, &part, cap, delta).unwrap();
    let tests: Vec<SampledField> = [0.5, 1.0, 2.0]
        .iter()
        .map(|&sigma| SignalSpec::Gaussian { sigma }.synthesize(&g).unwrap())
        .chain(hermite_family(g, 16, 4, 11))
        .collect();
    let bounds = remainder_mapping_probe(&d.flat, &tests, s, r, delta, &[0.1, 0.3]).unwrap();
    assert_eq!(bounds.len(), 2);
    assert!(bounds.iter().all(|b| b.ratio.is_finite() && b.ratio > 0.0));
    assert!(bounds[1].ratio <= bounds[0].ratio);
}
