use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use promptlab_bench::{sentences, tags};
use promptlab_core::presample::{run_cycle, MockBackend, PipelineConfig};
use promptlab_core::{LengthClass, StructuredPrompt};

fn cycle(c: &mut Criterion) {
    let backend = MockBackend::default();
    let cfg = PipelineConfig::default();
    let input = StructuredPrompt::new(Vec::new(), tags(6), sentences(1));
    c.bench_function("run_cycle/mock_long", |b| {
        b.iter(|| run_cycle(&backend, black_box(&input), LengthClass::Long, 9, &cfg).unwrap())
    });
}

criterion_group!(benches, cycle);
criterion_main!(benches);
