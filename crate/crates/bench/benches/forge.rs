use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use promptlab_bench::{records, sentences, tags};
use promptlab_core::forge::{build_nl_pair, build_tag_pair, forge_corpus, ForgeConfig};

fn pairs(c: &mut Criterion) {
    let mut g = c.benchmark_group("pairs");
    for n in [18, 72] {
        let t = tags(n);
        g.bench_with_input(BenchmarkId::new("tag", n), &t, |b, t| {
            b.iter(|| build_tag_pair(black_box(t), n / 2, 7).unwrap())
        });
    }
    let s = sentences(18);
    g.bench_function("nl/18", |b| {
        b.iter(|| build_nl_pair(black_box(&s), 9, 7).unwrap())
    });
    g.finish();
}

fn corpus(c: &mut Criterion) {
    let recs = records(1000, 1);
    let cfg = ForgeConfig::default();
    c.bench_function("forge/1000_records", |b| {
        b.iter(|| forge_corpus(recs.iter().cloned().map(Ok::<_, String>), &cfg, 3).count())
    });
}

criterion_group!(benches, pairs, corpus);
criterion_main!(benches);
