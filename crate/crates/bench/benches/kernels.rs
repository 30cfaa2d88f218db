use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use num_complex::Complex64;

use phasefront_bench::{grid, packet};
use phasefront_core::bargmann::{bargmann_transform, PhaseGrid};
use phasefront_core::grid::ChirpZ;
use phasefront_core::qsobolev::{kn_quantize, FnSymbol};
use phasefront_core::schrodinger::{propagate_strang, EvolutionConfig, LinearHamiltonian, Nonlinearity};

fn bargmann(c: &mut Criterion) {
    let mut group = c.benchmark_group("bargmann_transform");
    group.sample_size(20);
    for nodes in [65usize, 129, 257] {
        let u = packet(grid(4096), 1.0, -2.0);
        let pg = PhaseGrid::square(16.0, nodes).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(nodes), &nodes, |b, _| {
            b.iter(|| bargmann_transform(black_box(&u), &pg).unwrap())
        });
    }
    group.finish();
}

fn quantize(c: &mut Criterion) {
    let mut group = c.benchmark_group("kn_quantize");
    group.sample_size(20);
    let p = FnSymbol(|x: f64, xi: f64| Complex64::new((-(x * x + xi * xi) / 32.0).exp(), 0.1 * x * xi));
    for n in [256usize, 512, 1024] {
        let u = packet(grid(n), 0.5, 1.0);
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| kn_quantize(&p, black_box(&u)).unwrap())
        });
    }
    group.finish();
}

fn strang_step(c: &mut Criterion) {
    let mut group = c.benchmark_group("strang_step");
    for n in [512usize, 2048, 8192] {
        let u = packet(grid(n), 1.0, 0.0);
        let cfg = EvolutionConfig::new(LinearHamiltonian::HarmonicOscillator, Nonlinearity::Gauge, 0.01, 0.01);
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| propagate_strang(black_box(&u), &cfg).unwrap())
        });
    }
    group.finish();
}

fn czt(c: &mut Criterion) {
    let mut group = c.benchmark_group("chirp_z");
    for (inputs, outputs) in [(512usize, 257usize), (2048, 257), (2048, 1025)] {
        let h = 0.02;
        let domega = 0.125;
        let plan = ChirpZ::new(inputs, outputs, h, domega);
        let data: Vec<Complex64> = (0..inputs).map(|j| Complex64::from_polar(1.0, 0.01 * j as f64)).collect();
        group.bench_with_input(BenchmarkId::new("apply", format!("{inputs}x{outputs}")), &inputs, |b, _| {
            b.iter(|| plan.apply(black_box(&data), -5.0, h, -16.0, domega))
        });
    }
    group.finish();
}

criterion_group!(benches, bargmann, quantize, strang_step, czt);
criterion_main!(benches);
