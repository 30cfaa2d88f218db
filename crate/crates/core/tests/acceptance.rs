//! Acceptance gate: one test per criterion, each printing a PASS/FAIL line.

use std::f64::consts::PI;
use std::io::Write;
use std::time::Instant;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use phasefront_core::bargmann::{bargmann_point, bargmann_transform, closed_form_magnitude, PhaseGrid};
use phasefront_core::grid::{hermite_function, plateau_window, GridSpec1D, SampledField, SignalSpec};
use phasefront_core::hamflow::{
    angle_distance, direction_map, flow_numeric, flow_quadratic, symplectic_defect, HamiltonianField,
    QuadraticHamiltonian,
};
use phasefront_core::paradiff::{
    flat_decay_fit, lacunary_field, max_truncation_level, microlocal_composition_check, symbol_split,
    telescope_coeffs, ParadiffDecomposition,
};
use phasefront_core::qsobolev::{kn_quantize, lp_sum_ratio, FnSymbol, PhasePartition};
use phasefront_core::schrodinger::{
    chirp_amplitude, chirp_solution, propagate_linear, propagate_linear_ho, propagate_strang, EvolutionConfig,
    LinearHamiltonian, Nonlinearity, PowerTerm,
};
use phasefront_core::wavefront::{compare_to_flow, detect_wavefront, DetectionParams, WavefrontReport};

fn verdict(id: u32, name: &str, pass: bool, detail: &str) {
    let line = format!(
        "acceptance {id:>2} {name}: {} ({detail})\n",
        if pass { "PASS" } else { "FAIL" }
    );
    // bypasses the test harness capture so the line always shows
    let _ = std::io::stderr().write_all(line.as_bytes());
    assert!(pass, "criterion {id} failed: {detail}");
}

fn data_grid() -> GridSpec1D {
    GridSpec1D::new(40.0, 4096).unwrap()
}

fn within_one_bin(report: &WavefrontReport, expected: &[f64]) -> bool {
    let tol = report.params.bin_width() + 1e-9;
    let found = &report.singular_directions;
    found.len() == expected.len()
        && expected.iter().all(|e| found.iter().any(|f| angle_distance(*e, *f) <= tol))
        && found.iter().all(|f| expected.iter().any(|e| angle_distance(*e, *f) <= tol))
}

#[test]
fn criterion_01_bargmann_oracles() {
    let g = data_grid();
    let pg = PhaseGrid::square(16.0, 129).unwrap();
    let specs = [
        SignalSpec::Constant,
        SignalSpec::Chirp { lambda: 0.5 },
        SignalSpec::Chirp { lambda: 1.0 },
        SignalSpec::Chirp { lambda: 2.0 },
        SignalSpec::Gaussian { sigma: 1.0 },
        SignalSpec::Hermite { n: 0 },
        SignalSpec::DeltaApprox { sigma: 0.05 },
    ];
    let mut worst: f64 = 0.0;
    let mut cross: f64 = 0.0;
    for spec in &specs {
        let u = spec.synthesize(&g).unwrap();
        let map = bargmann_transform(&u, &pg).unwrap();
        for i in 0..pg.x.count {
            for k in 0..pg.xi.count {
                let z = map.node(i, k);
                let r = z.0.hypot(z.1);
                if !(4.0..=16.0).contains(&r) {
                    continue;
                }
                let exact = closed_form_magnitude(spec, z).unwrap();
                worst = worst.max((map.get(i, k).norm() - exact).abs());
                if i % 16 == 0 && k % 16 == 0 {
                    let direct = bargmann_point(&u, z).unwrap();
                    cross = cross.max((direct - map.get(i, k)).norm());
                }
            }
        }
    }
    let pass = worst <= 1e-6 && cross <= 1e-6;
    verdict(
        1,
        "Bargmann oracle agreement",
        pass,
        &format!("max |error| {worst:.2e} on 4<=|z|<=16, quadrature cross-check {cross:.2e}, tol 1e-6"),
    );
}

#[test]
fn criterion_02_static_wave_front_sets() {
    let g = data_grid();
    let p = DetectionParams::default();
    let mut failures = Vec::new();
    let mut check = |label: String, spec: SignalSpec, expected: Vec<f64>| {
        let r = detect_wavefront(&spec.synthesize(&g).unwrap(), &p).unwrap();
        if !within_one_bin(&r, &expected) {
            failures.push(format!("{label}: {:?}", r.singular_bins()));
        }
    };
    check("constant".into(), SignalSpec::Constant, vec![0.0, PI]);
    check("delta".into(), SignalSpec::DeltaApprox { sigma: 0.05 }, vec![PI / 2.0, 1.5 * PI]);
    for lambda in [0.5, 1.0, 2.0] {
        let t = f64::atan(lambda);
        check(format!("chirp {lambda}"), SignalSpec::Chirp { lambda }, vec![t, t + PI]);
    }
    check("gaussian".into(), SignalSpec::Gaussian { sigma: 1.0 }, vec![]);
    check("gaussian 0.5".into(), SignalSpec::Gaussian { sigma: 0.5 }, vec![]);
    for n in 0..=10 {
        check(format!("hermite {n}"), SignalSpec::Hermite { n }, vec![]);
    }
    let pass = failures.is_empty();
    verdict(
        2,
        "static wave front sets",
        pass,
        &if pass {
            "constant, delta, chirp 0.5/1/2 within one bin; no false positives on 2 gaussians and hermite 0..10".into()
        } else {
            failures.join("; ")
        },
    );
}

#[test]
fn criterion_03_slope_doubling() {
    let g = data_grid();
    let p = DetectionParams::default();
    let u = SignalSpec::Chirp { lambda: 1.0 }.synthesize(&g).unwrap();
    let r = detect_wavefront(&u.map(|v| v * v), &p).unwrap();
    let doubled = f64::atan(2.0);
    let flagged = within_one_bin(&r, &[doubled, doubled + PI]);
    let cleared = [PI / 4.0, 1.25 * PI].iter().all(|t| !r.bins[p.bin_of(*t)].singular);
    verdict(
        3,
        "slope doubling",
        flagged && cleared,
        &format!(
            "u^2 singular bins {:?} (arctan 2 in bin {}), bins {} and {} flagged: {}",
            r.singular_bins(),
            p.bin_of(doubled),
            p.bin_of(PI / 4.0),
            p.bin_of(1.25 * PI),
            !cleared
        ),
    );
}

#[test]
fn criterion_04_flow_correctness() {
    let q = QuadraticHamiltonian::harmonic_oscillator(1);
    let mut exact_err: f64 = 0.0;
    for i in -64..=64 {
        let t = 2.0 * PI * i as f64 / 64.0;
        let z0 = [0.7, -1.3];
        let out = flow_quadratic(&q, t, &z0).unwrap();
        let (c, s) = (t.cos(), t.sin());
        let expected = [c * z0[0] + s * z0[1], -s * z0[0] + c * z0[1]];
        for (a, b) in out.endpoint.iter().zip(expected) {
            exact_err = exact_err.max((a - b).abs());
        }
    }

    let field = HamiltonianField::from_quadratic(&q, 10.0);
    let z0 = [1.0, 0.5];
    let exact = flow_quadratic(&q, 2.0, &z0).unwrap().endpoint;
    let errs: Vec<f64> = [0.1, 0.05, 0.025]
        .iter()
        .map(|&dt| {
            let e = flow_numeric(&field, 0.0, 2.0, &z0, dt).unwrap().endpoint;
            e.iter().zip(&exact).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
        })
        .collect();
    let ratios = [errs[0] / errs[1], errs[1] / errs[2]];

    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut defect: f64 = 0.0;
    for i in 0..100 {
        let d = 1 + i % 2;
        let mut a = DMatrix::<f64>::zeros(2 * d, 2 * d);
        for r in 0..2 * d {
            for c in r..2 * d {
                let v = rng.gen_range(-1.0..1.0);
                a[(r, c)] = v;
                a[(c, r)] = v;
            }
        }
        let q = QuadraticHamiltonian::new(a).unwrap();
        let t = rng.gen_range(-3.0..3.0);
        let mut z = vec![0.0; 2 * d];
        z[0] = 1.0;
        let jac = flow_quadratic(&q, t, &z).unwrap().jacobian.unwrap();
        defect = defect.max(symplectic_defect(&jac));
    }
    let pass = exact_err <= 1e-12 && ratios.iter().all(|r| *r >= 14.0) && defect <= 1e-9;
    verdict(
        4,
        "flow correctness",
        pass,
        &format!(
            "exact-flow error {exact_err:.2e} (tol 1e-12), RK4 halving ratios {:.2}/{:.2} (min 14), symplectic defect {defect:.2e} over 100 Hamiltonians (tol 1e-9)",
            ratios[0], ratios[1]
        ),
    );
}

#[test]
fn criterion_05_linear_propagation() {
    let start = Instant::now();
    let g = GridSpec1D::square(4096).unwrap();
    let u0 = SampledField::from_fn(g, |_| Complex64::new(1.0, 0.0)).scaled_by(&plateau_window(&g, 48.0, 2.0));
    let p = DetectionParams::default();
    let ho = QuadraticHamiltonian::harmonic_oscillator(1);
    let initial = detect_wavefront(&u0, &p).unwrap();
    let mut failures = Vec::new();
    if !within_one_bin(&initial, &[0.0, PI]) {
        failures.push(format!("t=0: {:?}", initial.singular_bins()));
    }
    for t in [PI / 8.0, PI / 4.0, 3.0 * PI / 8.0, PI / 2.0 - 1.0 / 64.0] {
        let u = propagate_linear(&u0, &LinearHamiltonian::HarmonicOscillator, t).unwrap();
        let r = detect_wavefront(&u, &p).unwrap();
        let m = compare_to_flow(&initial, &r, |th| direction_map(&ho, t, th).unwrap(), p.bin_width()).unwrap();
        if !m.is_full_match() {
            failures.push(format!("t={t:.4}: {:?}", r.singular_bins()));
        }
    }
    let near = propagate_linear(&u0, &LinearHamiltonian::HarmonicOscillator, PI / 2.0 - 1.0 / 64.0).unwrap();
    let r = detect_wavefront(&near, &p).unwrap();
    if !within_one_bin(&r, &[PI / 2.0, 1.5 * PI]) {
        failures.push(format!("delta formation: {:?}", r.singular_bins()));
    }
    let elapsed = start.elapsed().as_secs_f64();
    let pass = failures.is_empty() && elapsed <= 300.0;
    verdict(
        5,
        "linear propagation end-to-end",
        pass,
        &if failures.is_empty() {
            format!("t in {{pi/8, pi/4, 3pi/8, pi/2-1/64}} match the flow within one bin; {elapsed:.1}s")
        } else {
            failures.join("; ")
        },
    );
}

#[test]
fn criterion_06_exact_chirp_solution() {
    let g = GridSpec1D::square(4096).unwrap();
    let u0 = SampledField::from_fn(g, |_| Complex64::new(1.0, 0.0)).scaled_by(&plateau_window(&g, 48.0, 2.0));
    let t = PI / 4.0;
    let exact = chirp_solution(t, &g).unwrap();
    let interior = |u: &SampledField| {
        let (mut err, mut norm) = (0.0, 0.0);
        for j in (0..g.len()).filter(|&j| g.point(j).abs() <= 16.0) {
            err += (u.values()[j] - exact.values()[j]).norm_sqr();
            norm += exact.values()[j].norm_sqr();
        }
        (err / norm).sqrt()
    };
    let direct = propagate_linear(&u0, &LinearHamiltonian::HarmonicOscillator, t).unwrap();
    let cfg = EvolutionConfig::new(LinearHamiltonian::HarmonicOscillator, Nonlinearity::Zero, t, t / 8.0);
    let stepped = propagate_strang(&u0, &cfg).unwrap();
    let e1 = interior(&direct);
    let e2 = interior(stepped.last().unwrap());
    let c = chirp_amplitude(t).unwrap().norm();
    let pass = e1 <= 1e-3 && e2 <= 1e-3 && (c - 2f64.powf(0.25)).abs() <= 1e-3;
    verdict(
        6,
        "exact chirp solution",
        pass,
        &format!("interior rel. L2 error {e1:.2e} (single step), {e2:.2e} (8 steps), |c(pi/4)| = {c:.6}; tol 1e-3"),
    );
}

#[test]
fn criterion_07_solver_properties() {
    // L² drift, linear case
    let g = GridSpec1D::square(512).unwrap();
    let u = SampledField::from_fn(g, |x| Complex64::from_polar((-(x - 1.0).powi(2) / 2.0).exp(), 0.5 * x));
    let t_end = 2.0 * PI;
    let cfg = EvolutionConfig::new(LinearHamiltonian::HarmonicOscillator, Nonlinearity::Zero, t_end, 0.01);
    let trace = propagate_strang(&u, &cfg).unwrap();
    let m0 = trace.diagnostics[0].l2_norm;
    let drift = trace
        .diagnostics
        .iter()
        .map(|d| (d.l2_norm - m0).abs() / m0)
        .fold(0.0, f64::max)
        / t_end;

    // Strang self-convergence on F(u) = u²
    let gs = GridSpec1D::square(1024).unwrap();
    let w = SampledField::from_fn(gs, |_| Complex64::new(0.5, 0.0)).scaled_by(&plateau_window(&gs, 5.0, 1.0));
    let run = |dt: f64| {
        let cfg = EvolutionConfig::new(LinearHamiltonian::HarmonicOscillator, Nonlinearity::Square, 0.5, dt);
        propagate_strang(&w, &cfg).unwrap().last().unwrap().clone()
    };
    let sols: Vec<SampledField> = [0.05, 0.025, 0.0125].iter().map(|&dt| run(dt)).collect();
    let order_ratio = sols[0].distance_l2(&sols[1]) / sols[1].distance_l2(&sols[2]);

    // 2π antiperiodicity on Hermite-band data
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let coeffs: Vec<Complex64> = (0..20)
        .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
        .collect();
    let band = SampledField::from_fn(g, |x| coeffs.iter().enumerate().map(|(n, c)| c * hermite_function(n, x)).sum());
    let flipped = band.map(|v| -v);
    let spectral = propagate_linear_ho(&band, 2.0 * PI, 64).unwrap().field.distance_l2(&flipped) / band.norm_l2();
    let metaplectic = propagate_linear(&band, &LinearHamiltonian::HarmonicOscillator, 2.0 * PI)
        .unwrap()
        .distance_l2(&flipped)
        / band.norm_l2();

    let pass = drift <= 1e-9
        && (4.0 / 1.5..=4.0 * 1.5).contains(&order_ratio)
        && spectral <= 1e-6
        && metaplectic <= 1e-6;
    verdict(
        7,
        "solver properties",
        pass,
        &format!(
            "L2 drift {drift:.2e}/unit time (tol 1e-9), Strang halving ratio {order_ratio:.3} (4 within x1.5), u(2pi)+u(0): {spectral:.2e} Hermite, {metaplectic:.2e} metaplectic (tol 1e-6)"
        ),
    );
}

#[test]
fn criterion_08_paradifferential_identities() {
    let g = GridSpec1D::new(16.0, 1024).unwrap();
    let u = SampledField::from_fn(g, |x| {
        Complex64::new((x.cos() + 0.3 * (5.0 * x).sin()) * (-x * x / 10.0).exp(), 0.0)
    });
    let identity = Nonlinearity::PowerSeries(vec![PowerTerm { p: 1, q: 0, re: 1.0, im: 0.0 }]);
    let k = max_truncation_level(&g).unwrap();
    let part = PhasePartition::new(k);
    let mut telescope: f64 = 0.0;
    for f in [&identity, &Nonlinearity::Square] {
        let d = ParadiffDecomposition::new(&u, f, &part, k, 0.5).unwrap();
        let (lhs, rhs) = d.telescoping_residuals(&u, f);
        telescope = telescope.max((lhs - rhs).abs() / f.apply(&u).norm_l2());
    }

    let gs = GridSpec1D::new(8.0, 256).unwrap();
    let us = SampledField::from_fn(gs, |x| Complex64::new(x.sin() * (-x * x / 4.0).exp(), 0.0));
    let ps = PhasePartition::new(max_truncation_level(&gs).unwrap());
    let d = ParadiffDecomposition::new(&us, &Nonlinearity::Square, &ps, ps.levels(), 0.7).unwrap();
    let mut split: f64 = 0.0;
    for j in 0..gs.len() {
        for m in 0..gs.len() {
            let total = d.symbol.value(j, m);
            split = split.max((total - d.sharp.value(j, m) - d.flat.value(j, m)).norm());
        }
    }

    let gl = GridSpec1D::new(16.0, 4096).unwrap();
    let kl = max_truncation_level(&gl).unwrap();
    let pl = PhasePartition::new(kl);
    let mut decay = Vec::new();
    let mut decay_ok = true;
    for r in [0.5, 1.5] {
        let top = (gl.nyquist() / 2.0).log2().floor() as usize - 1;
        let lac = lacunary_field(&gl, r, top, 2.0);
        let c = telescope_coeffs(&lac, &Nonlinearity::Square, &pl, kl).unwrap();
        for delta in [0.5, 0.8] {
            let (_, flat) = symbol_split(&c, &pl, delta).unwrap();
            let slope = flat_decay_fit(&flat, 1).slope;
            let bound = -delta * r + 0.3;
            decay_ok &= slope <= bound;
            decay.push(format!("(r={r},d={delta}) {slope:.3}<={bound:.2}"));
        }
    }
    let pass = telescope <= 1e-13 && split <= 1e-13 && decay_ok;
    verdict(
        8,
        "paradifferential identities",
        pass,
        &format!(
            "telescoping mismatch {telescope:.1e} (rel.), M#+Mb-M {split:.1e}, Mb decay slopes {}",
            decay.join(", ")
        ),
    );
}

fn square_function_family(g: &GridSpec1D) -> Vec<SampledField> {
    let mut fam: Vec<SampledField> = (0..10)
        .map(|n| SignalSpec::Hermite { n }.synthesize(g).unwrap())
        .collect();
    let gauss = |x0: f64, w: f64, k: f64, chirp: f64| {
        SampledField::from_fn(*g, move |x| {
            Complex64::from_polar((-(x - x0).powi(2) / (2.0 * w * w)).exp(), k * x + 0.5 * chirp * x * x)
        })
    };
    for w in [0.5, 1.0, 2.0] {
        fam.push(gauss(0.0, w, 0.0, 0.0));
    }
    for x0 in [-2.0, 3.0] {
        fam.push(gauss(x0, 1.0, 0.0, 0.0));
    }
    for k in [2.0, -3.0] {
        fam.push(gauss(0.0, 1.0, k, 0.0));
    }
    for c in [0.5, 1.0, -1.5] {
        fam.push(gauss(0.0, 1.0, 0.0, c));
    }
    fam
}

#[test]
fn criterion_09_square_function() {
    let coarse = GridSpec1D::new(16.0, 1024).unwrap();
    let fine = GridSpec1D::new(16.0, 4096).unwrap();
    let part = PhasePartition::new(PhasePartition::resolvable_levels(&fine).unwrap());
    let fc = square_function_family(&coarse);
    let ff = square_function_family(&fine);
    assert_eq!(fc.len(), 20);
    let (mut lo, mut hi, mut var): (f64, f64, f64) = (f64::MAX, 0.0, 0.0);
    for s in [0.0, 1.0, 2.0] {
        for (a, b) in fc.iter().zip(&ff) {
            let rc = lp_sum_ratio(a, s, &part).unwrap();
            let rf = lp_sum_ratio(b, s, &part).unwrap();
            lo = lo.min(rc.min(rf));
            hi = hi.max(rc.max(rf));
            var = var.max((rf / rc - 1.0).abs());
        }
    }
    let pass = lo >= 0.1 && hi <= 10.0 && var <= 0.2;
    verdict(
        9,
        "square-function inequality",
        pass,
        &format!("ratios in [{lo:.3}, {hi:.3}] (bound [0.1, 10]), max change 1024->4096 {:.2}% (tol 20%)", 100.0 * var),
    );
}

#[test]
fn criterion_10_quantization_oracle() {
    let g = GridSpec1D::new(8.0, 256).unwrap();
    let n = g.len();
    let h = g.spacing();
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let f = SampledField::from_fn(g, |x| Complex64::from_polar((-x * x / 3.0).exp(), 0.7 * x));
    let mut worst: f64 = 0.0;
    for _ in 0..10 {
        let c: Vec<f64> = (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let p = move |x: f64, xi: f64| {
            Complex64::new(
                c[0] + c[1] * (c[2] * x + c[3] * xi).sin() * (-(x * x + xi * xi) / 20.0).exp(),
                c[4] * (c[5] * x * xi / 10.0).cos(),
            )
        };
        let fast = kn_quantize(&FnSymbol(&p), &f).unwrap();
        let xs = g.points();
        let xis = g.frequencies();
        let spectrum: Vec<Complex64> = xis
            .iter()
            .map(|&xi| (0..n).map(|j| Complex64::from_polar(h, -xs[j] * xi) * f.values()[j]).sum())
            .collect();
        for j in 0..n {
            let brute: Complex64 = (0..n)
                .map(|m| Complex64::from_polar(1.0, xs[j] * xis[m]) * p(xs[j], xis[m]) * spectrum[m])
                .sum::<Complex64>()
                * g.freq_spacing()
                / (2.0 * PI);
            worst = worst.max((brute - fast.values()[j]).norm());
        }
    }
    verdict(
        10,
        "quantization oracle",
        worst <= 1e-10,
        &format!("max deviation from dense brute force {worst:.2e} over 10 symbols, N=256 (tol 1e-10)"),
    );
}

#[test]
fn criterion_11_microlocal_composition() {
    let g = data_grid();
    let p = DetectionParams::default();
    let square = Nonlinearity::Square;
    let decaying_chirp = SampledField::from_fn(g, |x| Complex64::from_polar(1.0 / (1.0 + x * x), 0.5 * x * x));
    let gaussian = SignalSpec::Gaussian { sigma: 1.0 }.synthesize(&g).unwrap();
    let cases = [
        ("gaussian", &gaussian, 1.4, 1.7, 1.0),
        ("gaussian", &gaussian, 1.4, 1.4, 2.5),
        ("<x>^-2 chirp", &decaying_chirp, 1.4, 1.4, f64::atan(2.0)),
        ("<x>^-2 chirp", &decaying_chirp, 1.4, 1.7, f64::atan(2.0)),
        ("<x>^-2 chirp", &decaying_chirp, 1.4, 1.7, 0.75 * PI),
    ];
    let mut ok = true;
    let mut notes = Vec::new();
    for (label, u, s, sigma, theta) in cases {
        let r = microlocal_composition_check(u, &square, s, sigma, theta, &p).unwrap();
        let fine = r.within_hypotheses && r.input_regular && r.preserved();
        ok &= fine;
        notes.push(format!("{label} s={s} sigma={sigma} theta={theta:.3}: growth {:.3}", r.output_growth));
    }
    // outside the hypotheses: the undamped chirp is not in any Q^s with s > 1/2
    let chirp = SignalSpec::Chirp { lambda: 1.0 }.synthesize(&g).unwrap();
    let demo = microlocal_composition_check(&chirp, &square, 1.4, 1.7, f64::atan(2.0), &p).unwrap();
    let anomaly = demo.input_regular && !demo.output_regular && !demo.anomalous.is_empty();
    notes.push(format!(
        "anomaly demo (chirp, outside hypotheses): output growth {:.2}, anomalous {:?}",
        demo.output_growth, demo.anomalous
    ));
    verdict(11, "microlocal composition", ok && anomaly, &notes.join("; "));
}
