//! Per-example batch gradients: sequential loop vs. rayon.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::Rng;

use olid_core::encoder::{EncoderConfig, ParameterSet, Pooling};
use olid_core::parallel::Execution;
use olid_core::seed;
use olid_core::tokenizer::{TokenSequence, CLS};
use olid_core::training::{gradients, Example, Objective};

fn batch(vocab: usize, size: usize, len: usize) -> Vec<Example> {
    let mut rng = seed::rng(11);
    (0..size)
        .map(|i| {
            let ids: Vec<u32> = std::iter::once(CLS).chain((1..len).map(|_| rng.gen_range(4..vocab as u32))).collect();
            Example { seq: TokenSequence::from_ids(&ids, len), label: i % 2 }
        })
        .collect()
}

fn bench(c: &mut Criterion) {
    let cfg = EncoderConfig { max_len: 32, ..EncoderConfig::desk(500, 2) };
    let params = ParameterSet::init(&cfg).unwrap();
    let data = batch(500, 32, 32);
    let mut group = c.benchmark_group("batch_gradients");
    group.sample_size(10);
    for (name, exec) in [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)] {
        for objective in [Objective::Classification(Pooling::Cls), Objective::Mlm] {
            let id = BenchmarkId::new(name, format!("{objective:?}"));
            group.bench_with_input(id, &objective, |b, &obj| {
                b.iter(|| gradients(black_box(&params), black_box(&data), obj, 7, true, exec).unwrap())
            });
        }
    }
    group.finish();
}

criterion_group!(benches, bench);
criterion_main!(benches);
