use criterion::{black_box, criterion_group, criterion_main, Criterion};

use stagewise_bench::{dataset, epochs, invariants};
use stagewise_core::psr::{embed, false_neighbor_fraction, select_params};
use stagewise_core::{
    divide_stages, fit_monitor, optimize_rotation, score_cycle, EmbeddingParams, InvariantSeries, OptimizerConfig,
    PsrConfig, SegmenterConfig,
};

fn psr(c: &mut Criterion) {
    let ds = dataset(15, 150, None);
    let voltage = ds.cycles[0].variables[0].clone();
    c.bench_function("embed tau=5 r=3", |b| b.iter(|| embed(black_box(&voltage), EmbeddingParams { tau: 5, r: 3 })));
    let segments: Vec<&[f64]> = ds.cycles.iter().map(|c| c.variables[0].as_slice()).collect();
    c.bench_function("fnn fraction r=3 (15 cycles)", |b| {
        b.iter(|| false_neighbor_fraction(black_box(&segments), 5, 3, 15.0, 2.0))
    });
    let refs: Vec<_> = ds.cycles.iter().collect();
    let mut group = c.benchmark_group("slow");
    group.sample_size(10);
    group.bench_function("select_params (15 cycles)", |b| b.iter(|| select_params(black_box(&refs), &PsrConfig::default())));
    group.finish();
}

fn ssa(c: &mut Criterion) {
    let (ep, w) = epochs(6, 2, 30, 500);
    let config = OptimizerConfig::default();
    let mut group = c.benchmark_group("slow");
    group.sample_size(10);
    group.bench_function("optimize_rotation n=6 d=2", |b| b.iter(|| optimize_rotation(black_box(&ep), &w, 2, &config)));
    group.finish();
}

fn monitor(c: &mut Criterion) {
    let train = invariants(2000, 4);
    let model = fit_monitor(&train, 0.85, 0.05).unwrap();
    let series = InvariantSeries { cycle_index: 1, scores: invariants(200, 4) };
    c.bench_function("fit_monitor 2000x4", |b| b.iter(|| fit_monitor(black_box(&train), 0.85, 0.05)));
    c.bench_function("score_cycle 200x4", |b| b.iter(|| score_cycle(&model, black_box(&series))));
}

fn segment(c: &mut Criterion) {
    let ds = dataset(60, 150, Some(30));
    let mut config = SegmenterConfig::default();
    config.psr.fixed = Some(EmbeddingParams { tau: 1, r: 2 });
    let mut group = c.benchmark_group("slow");
    group.sample_size(10);
    group.bench_function("divide_stages 60 cycles fixed embedding", |b| b.iter(|| divide_stages(black_box(&ds), &config)));
    group.finish();
}

criterion_group!(benches, psr, ssa, monitor, segment);
criterion_main!(benches);
