use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use tearfilm::dae::{FilmSystem, OdeSystem};
use tearfilm::pod::{capture_snapshots, ReducedSystem};
use tearfilm::{
    integrate, Evaporation, FieldState, IntegratorConfig, ModelParams, PeriodicGrid, PodBasis, PodRanks, TearFilmModel,
};

fn model(n: usize) -> TearFilmModel {
    let grid = PeriodicGrid::square(n).unwrap();
    TearFilmModel::new(grid, ModelParams::default(), Evaporation::single_spot(1.0, 0.1, 0.5)).unwrap()
}

/// A thinned, non-uniform film.
fn state(m: &TearFilmModel) -> (Vec<f64>, Vec<f64>) {
    let g = m.grid();
    let h = g.sample(|x, y| 0.6 + 0.3 * (x.cos() * y.cos() + 0.2 * (2.0 * x).sin()));
    let c = g.sample(|x, y| 1.4 + 0.5 * (x.sin() * y.cos()));
    (h, c)
}

fn pressure(cr: &mut Criterion) {
    let mut group = cr.benchmark_group("pressure");
    for n in [32, 64, 128] {
        let m = model(n);
        let (h, _) = state(&m);
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| b.iter(|| m.pressure(black_box(&h))));
    }
    group.finish();
}

fn film_rhs(cr: &mut Criterion) {
    let mut group = cr.benchmark_group("film_rhs");
    for n in [32, 60, 96] {
        let m = model(n);
        let sys = FilmSystem::new(&m);
        let (h, c) = state(&m);
        let y = FilmSystem::pack(&h, &c);
        let mut dy = vec![0.0; y.len()];
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| sys.rhs(0.0, black_box(&y), &mut dy).unwrap())
        });
    }
    group.finish();
}

fn reduced_rhs(cr: &mut Criterion) {
    let m = model(60);
    let (set, last) = capture_snapshots(&m, 0.5, 50, &IntegratorConfig::default(), false).unwrap();
    let basis = PodBasis::from_snapshots(&set, PodRanks::for_window(0.5).unwrap(), "bench").unwrap();
    let sys = ReducedSystem::new(&m, &basis).unwrap();
    let y = sys.project(&last.final_state);
    let mut dy = vec![0.0; y.len()];
    cr.bench_function("reduced_rhs/60", |b| b.iter(|| sys.rhs(0.0, black_box(&y), &mut dy).unwrap()));
}

fn short_run(cr: &mut Criterion) {
    let m = model(32);
    let cfg = IntegratorConfig { t_end: 0.5, ..IntegratorConfig::default() };
    let init = FieldState::uniform(m.grid(), 1.0);
    let mut group = cr.benchmark_group("integrate");
    group.sample_size(10);
    group.bench_function("32x32_to_0.5", |b| b.iter(|| integrate(&m, &init, &cfg, &[]).unwrap()));
    group.finish();
}

criterion_group!(benches, pressure, film_rhs, reduced_rhs, short_run);
criterion_main!(benches);
