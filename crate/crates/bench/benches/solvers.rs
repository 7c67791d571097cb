use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use nalista_bench::fixture;
use nalista_core::dictionary::{compute_dictionary, DictionaryOptions};
use nalista_core::problems::ProblemEnsemble;
use nalista_core::solvers::{
    ForwardOptions, InputFeatures, Model, ModelKind, RecurrentCellParams, Solver, SupportSelectionSchedule,
};
use nalista_core::training::{batch_loss_and_grad, ModelSpec};

fn matmul(c: &mut Criterion) {
    let (_, ops, batch) = fixture(50, 200, 8.0, 256);
    c.bench_function("matmul 256x50 * 50x200", |b| b.iter(|| black_box(batch.y.matmul(&ops.w).unwrap())));
}

fn forward(c: &mut Criterion) {
    let (_, ops, batch) = fixture(50, 200, 8.0, 256);
    let k = 12;
    let ss = SupportSelectionSchedule::ramp(k, 1.2, 2.4).unwrap();
    let mut g = c.benchmark_group("forward K=12 B=256");
    let na = Model::NaAlista(RecurrentCellParams::init(InputFeatures::Both, 32, 0).unwrap());
    let alista = ModelSpec {
        kind: ModelKind::Alista,
        iterations: k,
        ..ModelSpec::default()
    }
    .init(0)
    .unwrap();
    let solvers = [
        Solver::Ista { lambda: 0.4 },
        Solver::Fista { lambda: 0.4 },
        Solver::Learned(alista),
        Solver::Learned(na),
    ];
    for s in &solvers {
        g.bench_with_input(BenchmarkId::from_parameter(s.name()), s, |b, s| {
            b.iter(|| black_box(s.run(&ops, &batch.y, k, &ss, ForwardOptions::default()).unwrap()))
        });
    }
    g.finish();
}

fn gradient(c: &mut Criterion) {
    let (_, ops, batch) = fixture(50, 200, 8.0, 64);
    let k = 12;
    let ss = SupportSelectionSchedule::ramp(k, 1.2, 2.4).unwrap();
    let na = Model::NaAlista(RecurrentCellParams::init(InputFeatures::Both, 32, 0).unwrap());
    c.bench_function("na_alista loss+grad B=64", |b| {
        b.iter(|| black_box(batch_loss_and_grad(&na, &ops, &batch, k, &ss, 64).unwrap()))
    });
}

fn dictionary(c: &mut Criterion) {
    let ens = ProblemEnsemble::generate(50, 200, 8.0, None, 0).unwrap();
    let opts = DictionaryOptions {
        iters: 100,
        rel_tol: 0.0,
        refine_iters: 0,
        ..DictionaryOptions::default()
    };
    let mut g = c.benchmark_group("dictionary");
    g.sample_size(10);
    g.bench_function("100 PGD iterations 50x200", |b| {
        b.iter(|| black_box(compute_dictionary(&ens.phi, &opts).unwrap()))
    });
    let refined = DictionaryOptions {
        refine_iters: 100,
        ..opts.clone()
    };
    g.bench_function("100 PGD + 100 refinement steps 50x200", |b| {
        b.iter(|| black_box(compute_dictionary(&ens.phi, &refined).unwrap()))
    });
    g.finish();
}

criterion_group!(benches, matmul, forward, gradient, dictionary);
criterion_main!(benches);
