use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use plasmon_qi::dynamics::{evolve_with_kernel, EvolveOptions, MemoryKernel};
use plasmon_qi::entanglement::tripartite_c3;
use plasmon_qi::green::{spectral_density_entries, QuadratureSpec};
use plasmon_qi::material::{DrudeMetal, EmitterArray, PhysicalSystem, WireGeometry};
use plasmon_qi::special_functions::{CylinderKind, CylinderSequence, C64};

fn default_system() -> PhysicalSystem {
    let lambda0 = plasmon_qi::material::wavelength(2.0);
    PhysicalSystem {
        metal: DrudeMetal::SILVER,
        wire: WireGeometry { radius: 0.01 * lambda0, present: true },
        emitters: EmitterArray { count: 2, omega_0: 2.0, gamma_0: 1e-4, r_a: 0.012 * lambda0, d: 5.0 },
    }
}

fn bessel(c: &mut Criterion) {
    let z = C64::new(12.5, 0.8);
    c.bench_function("hankel sequence n<=40", |b| {
        b.iter(|| CylinderSequence::new(CylinderKind::H1, black_box(z), 40).unwrap())
    });
}

fn spectral_density(c: &mut Criterion) {
    let sys = default_system();
    let spec = QuadratureSpec::default();
    let mut g = c.benchmark_group("spectral density");
    g.sample_size(10);
    g.bench_function("J0, J1 at 2 eV", |b| {
        b.iter(|| spectral_density_entries(&sys, black_box(2.0), 1, &spec).unwrap())
    });
    g.finish();
}

fn solver(c: &mut Criterion) {
    let dt = 0.01;
    let steps = 20_000;
    let kernel = MemoryKernel::from_fn(2, dt, steps + 1, |t| {
        let k = 0.2 * (C64::new(-0.2, -2.1) * t).exp();
        vec![k, 0.5 * k]
    })
    .unwrap();
    let c0 = [C64::new(1.0, 0.0), C64::new(0.0, 0.0)];
    let opts = EvolveOptions { record_every: 100, ..EvolveOptions::default() };
    let mut g = c.benchmark_group("volterra");
    g.sample_size(10);
    g.bench_function("N=2, 2e4 steps", |b| {
        b.iter(|| evolve_with_kernel(2.0, &kernel, black_box(&c0), steps, &opts).unwrap())
    });
    g.finish();
}

fn entanglement(c: &mut Criterion) {
    let v = [C64::new(0.4, 0.1), C64::new(-0.3, 0.2), C64::new(0.1, -0.5)];
    c.bench_function("tripartite C3", |b| b.iter(|| tripartite_c3(black_box(&v)).unwrap()));
}

criterion_group!(benches, bessel, spectral_density, solver, entanglement);
criterion_main!(benches);
