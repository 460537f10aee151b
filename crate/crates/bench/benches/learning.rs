use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use flipctl_bench::load;
use flipctl_core::{find_kernels, learn_min_flip_policy, FlipSet, KernelSearchParams, PolicyParams, Variant};

fn kernel_search(c: &mut Criterion) {
    let (net, problem) = load("example2");
    let mut group = c.benchmark_group("kernel search, three nodes");
    for variant in Variant::ALL {
        let params = KernelSearchParams {
            variant,
            episodes: 100,
            cap: Some(10),
            parallel: false,
            ..KernelSearchParams::default()
        };
        group.bench_function(variant.name(), |b| {
            b.iter(|| find_kernels(&net, &problem.spec, &problem.flip_candidates, black_box(&params)).unwrap())
        });
    }
    group.finish();
}

fn min_flip_policy(c: &mut Criterion) {
    let (net, problem) = load("example2");
    let b = FlipSet::new(vec![1, 2]);
    let params = PolicyParams {
        episodes: 3000,
        ..PolicyParams::default()
    };
    c.bench_function("min-flip policy, 3000 episodes", |bench| {
        bench.iter(|| learn_min_flip_policy(&net, &problem.spec, &b, black_box(&params)).unwrap())
    });
}

criterion_group!(benches, kernel_search, min_flip_policy);
criterion_main!(benches);
