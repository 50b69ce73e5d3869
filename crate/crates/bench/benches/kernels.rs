use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use nsms_bench::{diffuse_disk, disk, grid, shear, smooth_source};
use nsms_core::ms_step::ms_step;
use nsms_core::ns_step::{ns_step, viscosity_field};
use nsms_core::model_h::nsch_step;
use nsms_core::{DoubleWell, HNegWorkspace, MsStepConfig, NsStepConfig, ViscosityLaw};

#[global_allocator]
static ALLOC: mimalloc::MiMalloc = mimalloc::MiMalloc;

fn hneg(c: &mut Criterion) {
    let mut group = c.benchmark_group("hneg_norm");
    for n in [64, 128, 256] {
        let ws = HNegWorkspace::new(grid(n));
        let f = smooth_source(n);
        group.bench_with_input(BenchmarkId::from_parameter(n), &f, |b, f| {
            b.iter(|| ws.hneg_norm(black_box(f)).unwrap())
        });
    }
    group.finish();
}

fn leray(c: &mut Criterion) {
    let ws = HNegWorkspace::new(grid(128));
    let u = shear(128, 1.0);
    c.bench_function("leray_project/128", |b| b.iter(|| ws.leray_project(black_box(&u))));
}

fn phase_step(c: &mut Criterion) {
    let mut group = c.benchmark_group("ms_step");
    group.sample_size(20);
    for n in [32, 64] {
        let cfg = MsStepConfig::new(&grid(n), 5e-4);
        let (chi, v) = (disk(n), shear(n, 1.0));
        group.bench_function(BenchmarkId::from_parameter(n), |b| {
            b.iter(|| ms_step(black_box(&chi), &v, &cfg).unwrap())
        });
    }
    group.finish();
}

fn momentum_step(c: &mut Criterion) {
    let mut group = c.benchmark_group("ns_step");
    group.sample_size(20);
    for n in [64, 128] {
        let cfg = NsStepConfig::new(5e-4);
        let chi = disk(n);
        let mu = smooth_source(n);
        let nu = viscosity_field(&chi, 1.0, 2.0, 2.0 / n as f64).unwrap();
        let v = shear(n, 1.0);
        group.bench_function(BenchmarkId::from_parameter(n), |b| {
            b.iter(|| ns_step(black_box(&v), &chi, &mu, &nu, &cfg).unwrap())
        });
    }
    group.finish();
}

fn diffuse_step(c: &mut Criterion) {
    let mut group = c.benchmark_group("nsch_step");
    group.sample_size(20);
    let well = DoubleWell::quartic();
    let law = ViscosityLaw {
        nu_minus: 1.0,
        nu_plus: 2.0,
    };
    let cfg = NsStepConfig::new(1e-4);
    for n in [64, 128] {
        let state = diffuse_disk(n, 0.04);
        group.bench_function(BenchmarkId::from_parameter(n), |b| {
            b.iter(|| nsch_step(black_box(&state), 1e-4, &well, &law, &cfg).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, hneg, leray, phase_step, momentum_step, diffuse_step);
criterion_main!(benches);
