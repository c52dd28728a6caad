use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;
use streamac_bench::policy_store;
use streamac_core::policy::XacmlRequest;

fn evaluate(c: &mut Criterion) {
    let mut g = c.benchmark_group("evaluate");
    for n in [10usize, 100, 1000, 10_000] {
        let store = policy_store(n);
        let req = XacmlRequest::new("s", 5_000);
        g.bench_with_input(BenchmarkId::from_parameter(n), &store, |b, s| {
            b.iter(|| black_box(s.evaluate(black_box(&req))))
        });
    }
    g.finish();
}

criterion_group!(benches, evaluate);
criterion_main!(benches);
