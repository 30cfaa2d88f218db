use std::f64::consts::PI;

use num_complex::Complex64;
use proptest::prelude::*;

use phasefront_core::grid::{GridSpec1D, SampledField, SignalSpec};
use phasefront_core::paradiff::lacunary_field;
use phasefront_core::qsobolev::{
    bump, highpass_decay_fit, kn_quantize, lowpass_sup_ratio, phase_localization_sup_ratio, DyadicPartition, FnSymbol,
    PhasePartition,
};

/// `‖F⁻¹ψ₀‖_{L¹}` by direct quadrature.
fn bump_kernel_l1() -> f64 {
    let dxi = 1e-3;
    let xis: Vec<f64> = (0..=4000).map(|i| -2.0 + i as f64 * dxi).collect();
    let weights: Vec<f64> = xis.iter().map(|&xi| bump(xi)).collect();
    let dx = 0.01;
    (0..=40_000)
        .map(|i| {
            let x = -200.0 + i as f64 * dx;
            // ψ₀ is even, so the kernel is real
            let k: f64 = xis.iter().zip(&weights).map(|(xi, w)| w * (x * xi).cos()).sum::<f64>() * dxi / (2.0 * PI);
            k.abs() * dx
        })
        .sum()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn dyadic_partition_telescopes(xi in -300.0f64..300.0, levels in 1usize..9) {
        let part = DyadicPartition::new(levels);
        let sum: f64 = (0..=levels).map(|k| part.psi(k, xi)).sum();
        prop_assert!((sum - part.cumulative(levels, xi)).abs() <= 1e-14);
        if xi.abs() <= 2f64.powi(levels as i32) {
            prop_assert!((sum - 1.0).abs() <= 1e-14);
        }
        for k in 1..=levels {
            let lo = 2f64.powi(k as i32 - 1);
            if xi.abs() <= lo || xi.abs() >= 4.0 * lo {
                prop_assert_eq!(part.psi(k, xi), 0.0);
            }
            prop_assert!(part.psi(k, xi) >= 0.0);
        }
    }

    #[test]
    fn phase_partition_telescopes(x in -200.0f64..200.0, xi in -200.0f64..200.0, levels in 1usize..9) {
        let part = PhasePartition::new(levels);
        let sum: f64 = (0..=levels).map(|k| part.phi(k, x, xi)).sum();
        prop_assert!((sum - part.cumulative(levels, x, xi)).abs() <= 1e-14);
        if x.hypot(xi) <= 2f64.powi(levels as i32) {
            prop_assert!((sum - 1.0).abs() <= 1e-14);
        }
    }

    #[test]
    fn quantization_matches_brute_force(
        n_pow in 3u32..6,
        coeffs in proptest::collection::vec(-1.0f64..1.0, 6),
        data in proptest::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 32),
    ) {
        let n = 1usize << n_pow;
        let g = GridSpec1D::new(3.0, n).unwrap();
        let c = coeffs.clone();
        let p = move |x: f64, xi: f64| {
            Complex64::new(c[0] + c[1] * (x + 0.5 * xi).sin(), c[2] * x * xi)
                + Complex64::from_polar(c[3], c[4] * x - c[5] * xi)
        };
        let f = SampledField::new(
            g,
            data[..n].iter().map(|(a, b)| Complex64::new(*a, *b)).collect(),
            phasefront_core::Domain::Space,
        )
        .unwrap();
        let fast = kn_quantize(&FnSymbol(p.clone()), &f).unwrap();

        let h = g.spacing();
        let dxi = PI / g.half_width();
        let fhat: Vec<Complex64> = (0..n)
            .map(|m| {
                let xi = -PI / h + m as f64 * dxi;
                (0..n).map(|l| f.values()[l] * Complex64::from_polar(h, -(-g.half_width() + l as f64 * h) * xi)).sum()
            })
            .collect();
        for j in 0..n {
            let x = -g.half_width() + j as f64 * h;
            let slow: Complex64 = (0..n)
                .map(|m| {
                    let xi = -PI / h + m as f64 * dxi;
                    Complex64::from_polar(dxi / (2.0 * PI), x * xi) * p(x, xi) * fhat[m]
                })
                .sum();
            prop_assert!((fast.values()[j] - slow).norm() <= 1e-11, "j={} {} vs {}", j, fast.values()[j], slow);
        }
    }
}

#[test]
fn lowpass_sup_ratio_is_bounded_uniformly() {
    let c = bump_kernel_l1();
    assert!(c > 1.0 && c < 2.0, "{c}");
    let g = GridSpec1D::new(8.0, 8192).unwrap();
    let inputs = [
        SignalSpec::Gaussian { sigma: 0.05 }.synthesize(&g).unwrap(),
        lacunary_field(&g, 0.5, 10, 3.0),
        lacunary_field(&g, 1.0, 10, 3.0),
        SampledField::from_fn(g, |x| Complex64::new(if x.abs() < 1.0 { 1.0 } else { 0.0 }, 0.0)),
    ];
    for f in &inputs {
        for e in 0..=6 {
            let eps = 2f64.powi(-e);
            let r = lowpass_sup_ratio(f, eps).unwrap();
            assert!(r <= c * (1.0 + 1e-3), "eps={eps}: {r} > {c}");
        }
    }
}

#[test]
fn highpass_decay_matches_regularity() {
    let g = GridSpec1D::new(8.0, 8192).unwrap();
    let eps: Vec<f64> = (2..=8).map(|e| 2f64.powi(-e)).collect();
    for r in [0.5, 1.0, 1.5] {
        let f = lacunary_field(&g, r, 10, 3.0);
        let fit = highpass_decay_fit(&f, &eps).unwrap();
        assert!(fit.slope >= r - 0.2, "r={r}: slope {}", fit.slope);
    }
}

#[test]
fn phase_localization_ratio_is_stable() {
    let g = GridSpec1D::new(20.0, 1024).unwrap();
    let inputs = [
        SignalSpec::Gaussian { sigma: 0.3 }.synthesize(&g).unwrap(),
        SampledField::from_fn(g, |x| Complex64::from_polar((-x * x / 18.0).exp(), 0.5 * x * x)),
        SampledField::from_fn(g, |x| Complex64::new((3.0 * x).cos() * (-x * x / 8.0).exp(), 0.0)),
    ];
    for u in &inputs {
        let ratios: Vec<f64> = (0..=4)
            .map(|e| phase_localization_sup_ratio(u, 2f64.powi(-e)).unwrap())
            .collect();
        let hi = ratios.iter().cloned().fold(0.0, f64::max);
        assert!(hi <= 2.0, "{ratios:?}");
        assert!((ratios[4] - 1.0).abs() <= 0.05, "{ratios:?}");
    }
}
