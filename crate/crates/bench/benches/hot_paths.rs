use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use mimic::markov::{fit_ensemble, Context};
use mimic::planner::{astar_plan, fixtures, Weights, DEFAULT_NODE_CUTOFF};
use mimic_bench::arena_fixture;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn lookup(c: &mut Criterion) {
    let fx = arena_fixture(2, 500);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut i = 0;
    c.bench_function("ensemble_lookup", |b| {
        b.iter(|| {
            let (s, h) = &fx.queries[i % fx.queries.len()];
            i += 1;
            black_box(fx.seq.policy_action(Context::new(s, h), &mut rng))
        })
    });
}

fn quantization(c: &mut Criterion) {
    let fx = arena_fixture(1, 500);
    let mut key = Vec::new();
    c.bench_function("state_key_all_levels", |b| {
        b.iter(|| {
            for (s, _) in &fx.queries {
                for j in 0..fx.scheme.num_levels() {
                    key.clear();
                    fx.scheme.push_state_key(j, s, &mut key);
                }
            }
            black_box(key.len())
        })
    });
    c.bench_function("fit_ensemble_500", |b| {
        b.iter_batched(
            || fx.demos.clone(),
            |d| black_box(fit_ensemble(&d, &fx.scheme, 3).unwrap()),
            BatchSize::SmallInput,
        )
    });
}

fn planning(c: &mut Criterion) {
    let weights = Weights::default();
    for name in ["toy", "barista", "workshop"] {
        let m = fixtures::by_name(name).unwrap();
        c.bench_function(&format!("astar_{name}"), |b| {
            b.iter(|| black_box(astar_plan(&m, &m.start(), &weights, DEFAULT_NODE_CUTOFF).unwrap()))
        });
    }
}

fn net_forward(c: &mut Criterion) {
    let fx = arena_fixture(1, 200);
    let mut i = 0;
    c.bench_function("policy_net_forward", |b| {
        b.iter(|| {
            let (s, h) = &fx.queries[i % fx.queries.len()];
            i += 1;
            black_box(fx.net.act(s, h))
        })
    });
}

criterion_group!(benches, lookup, quantization, planning, net_forward);
criterion_main!(benches);
