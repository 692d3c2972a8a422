use std::hint::black_box;

use adb_bench::fixture;
use adb_core::explore::{Construction, Explorer};
use adb_core::{atomic_step, split_dec, split_env, split_exec, ExtendedState, SplitState};
use criterion::{criterion_group, criterion_main, Criterion};

fn steps(c: &mut Criterion) {
    let f = fixture("filelock");
    let sc = &f.scenario;
    let ext = ExtendedState::new(sc.initial);
    c.bench_function("atomic_step", |b| b.iter(|| atomic_step(sc, black_box(&ext), f.action)));

    let st = SplitState::new(sc.initial);
    let (env, target) = sc.env_successors(sc.initial).next().unwrap();
    c.bench_function("split_dec_env_exec", |b| {
        b.iter(|| {
            let d = split_dec(sc, black_box(&st), f.action).unwrap();
            let e = split_env(sc, &d, env, target).unwrap();
            split_exec(sc, &e).unwrap()
        })
    });
}

fn exploration(c: &mut Criterion) {
    let mut group = c.benchmark_group("explore");
    for name in ["filelock", "k8s-quota", "filelock-escalate"] {
        let sc = fixture(name).scenario;
        let depth = sc.default_depth();
        let split = Explorer::new(&sc, Construction::split()).unwrap();
        group.bench_function(format!("find_witness/{name}"), |b| b.iter(|| split.find_witness(black_box(depth))));
        let atomic = Explorer::new(&sc, Construction::atomic()).unwrap();
        group.bench_function(format!("count_traces/{name}"), |b| b.iter(|| atomic.count_traces(black_box(depth))));
    }
    group.finish();
}

criterion_group!(benches, steps, exploration);
criterion_main!(benches);
