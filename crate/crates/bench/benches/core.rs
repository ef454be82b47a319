use criterion::{criterion_group, criterion_main, Criterion};
use heis_bench::{coupled_h2, h1, two_cells_regular};
use heis_core::{
    decide, group_exp, group_log, group_multiply, integrate, sample_reachable, search_obstruction,
    AlgebraElement, ControlSignal, GroupElement, SampleOptions, SearchBudget,
};
use std::hint::black_box;

fn algebra(c: &mut Criterion) {
    let g = GroupElement::new(vec![0.3, -1.2], vec![0.7, 0.1], 2.0).unwrap();
    let h = GroupElement::new(vec![-0.4, 0.5], vec![1.1, -0.9], -0.3).unwrap();
    let a = AlgebraElement::new(vec![0.3, -1.2], vec![0.7, 0.1], 2.0).unwrap();
    c.bench_function("group_multiply H2", |b| b.iter(|| group_multiply(black_box(&g), black_box(&h))));
    c.bench_function("exp/log H2", |b| b.iter(|| group_log(&group_exp(black_box(&a)))));
}

fn deciding(c: &mut Criterion) {
    let rotating = h1(-1.0, 0.0, 0.0);
    let cells = two_cells_regular();
    let coupled = coupled_h2();
    c.bench_function("decide H1", |b| b.iter(|| decide(black_box(&rotating))));
    c.bench_function("decide two cells with certificate", |b| b.iter(|| decide(black_box(&cells))));
    let mut group = c.benchmark_group("slow");
    group.sample_size(10);
    group.bench_function("decide coupled H2", |b| b.iter(|| decide(black_box(&coupled))));
    group.finish();
}

fn searching(c: &mut Criterion) {
    let saddle = h1(1.0, 1.0, 0.0);
    let budget = SearchBudget::default();
    c.bench_function("search_obstruction H1 trivial", |b| {
        b.iter(|| search_obstruction(black_box(&saddle), &budget, 0))
    });
}

fn simulating(c: &mut Criterion) {
    let sys = h1(-1.0, 0.5, 0.2);
    let signal = ControlSignal::new(vec![(1.0, vec![2.0]), (1.0, vec![-1.0])]).unwrap();
    let e = GroupElement::identity(1);
    c.bench_function("integrate 2000 RK4 steps", |b| b.iter(|| integrate(&sys, &e, black_box(&signal), 1e-3)));
    let opts = SampleOptions { samples: 100, ..Default::default() };
    let mut group = c.benchmark_group("slow");
    group.sample_size(10);
    group.bench_function("sample_reachable 100 signals", |b| b.iter(|| sample_reachable(&sys, black_box(&opts))));
    group.finish();
}

criterion_group!(benches, algebra, deciding, searching, simulating);
criterion_main!(benches);
