use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use skm_core::integrators::{sk_row, SpdeParams};
use skm_core::lyapunov_perron::{base_grid, manifold_distance, required_t_back, LpSetup};
use skm_core::noise::NoisePath;
use skm_core::ou::OUPath;
use skm_core::par::Execution;
use skm_core::spectral::{Nonlinearity, QSpectrum, SpectralField};
use skm_core::wave_operator::GapCase;

const M: usize = 16;
const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn noise(c: &mut Criterion) {
    let mut g = c.benchmark_group("noise_path");
    for (name, exec) in MODES {
        g.bench_with_input(BenchmarkId::new(name, 20_000), &exec, |b, &exec| {
            b.iter(|| NoisePath::with_execution(42, 0.01, M, -20_000, 20_000, black_box(exec)).unwrap())
        });
    }
    g.finish();
}

fn distance(c: &mut Criterion) {
    let nu = 1e-3;
    let f = Nonlinearity::ScaledSine { a: 0.5 };
    let q = QSpectrum::power_law(M, 4.0, 1.0).unwrap();
    let mut setup = LpSetup::new(M, 2, f);
    let back = required_t_back(&setup, GapCase::Wave { nu }, 0.01)
        .unwrap()
        .max(required_t_back(&setup, GapCase::Heat, 0.01).unwrap());
    let noise = NoisePath::covering(42, 0.01, M, -(back + 0.02), 0.0).unwrap();
    let path = OUPath::stationary(&noise, &q, Some(nu)).unwrap();
    let bases = base_grid(2, 1.0, 5);
    let mut g = c.benchmark_group("manifold_distance");
    g.sample_size(10);
    for (name, exec) in MODES {
        setup.cfg.exec = exec;
        g.bench_with_input(BenchmarkId::new(name, bases.len()), &setup, |b, s| {
            b.iter(|| manifold_distance(&path, nu, s, &bases).unwrap())
        });
    }
    g.finish();
}

fn sk(c: &mut Criterion) {
    let params = SpdeParams {
        nu: 1e-2,
        q: QSpectrum::power_law(M, 4.0, 1.0).unwrap(),
        f: Nonlinearity::ScaledSine { a: 0.5 },
        phys_points: 2 * M,
    };
    let u0 = &SpectralField::basis(M, 1) * 0.3;
    let u1 = SpectralField::zeros(M);
    let mut g = c.benchmark_group("sk_replicas");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_with_input(BenchmarkId::new(name, 16), &exec, |b, &exec| {
            b.iter(|| sk_row(&params, &u0, &u1, 1e-3, 0.5, 0.1, 42, 16, exec).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, noise, distance, sk);
criterion_main!(benches);
