use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use offerset_bench::{fixture, random_mixture};
use offerset_core::{greedy, lss::LssIndex, prune, rng_from_seed, Ensemble, ItemId};

fn query(c: &mut Criterion) {
    let mut group = c.benchmark_group("lss_query");
    for n in [1 << 12, 1 << 14, 1 << 16] {
        let f = fixture(n, 32, 1);
        group.bench_with_input(BenchmarkId::new("raw", n), &f, |b, f| {
            b.iter(|| f.index.query(black_box(&f.user)))
        });
        group.bench_with_input(BenchmarkId::new("pruned", n), &f, |b, f| {
            b.iter(|| f.index.query_pruned(black_box(&f.user), &f.universe))
        });
    }
    group.finish();
}

fn build(c: &mut Criterion) {
    let f = fixture(1 << 14, 32, 2);
    c.bench_function("lss_build_16k", |b| {
        b.iter(|| LssIndex::build(&f.universe, f.index.plan().clone(), black_box(3)))
    });
}

fn optimize(c: &mut Criterion) {
    let f = fixture(1 << 14, 32, 4);
    let mix = random_mixture(10, 32, 5);
    let ens = Ensemble::build(&f.universe, f.index.plan(), 20, 6).unwrap();
    let mut rng = rng_from_seed(7);
    let cands = prune(ens.members(), &mix, &f.universe, &mut rng).unwrap();
    let all: Vec<ItemId> = f.universe.ids().collect();
    c.bench_function("prune_20_draws", |b| {
        b.iter(|| prune(ens.members(), &mix, &f.universe, &mut rng))
    });
    c.bench_function("greedy_pruned_k5", |b| {
        b.iter(|| greedy(black_box(&cands), 5, &mix, &f.model, &f.universe))
    });
    c.bench_function("greedy_full_k5", |b| {
        b.iter(|| greedy(black_box(&all), 5, &mix, &f.model, &f.universe))
    });
}

criterion_group!(benches, query, build, optimize);
criterion_main!(benches);
