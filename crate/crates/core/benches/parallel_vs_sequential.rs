use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rsma_core::montecarlo::{sweep_samples, Axis, SweepSpec};
use rsma_core::rate_region::rsma_optimal_sum_rate_with;
use rsma_core::rsma::{recover_order_and_power, ScaOptions};
use rsma_core::scenario::{derive_seed, drop_users, DropConfig, LinkDefaults};
use rsma_core::Exec;

const EXECS: [(&str, Exec); 2] = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];

fn sweep(c: &mut Criterion) {
    let mut g = c.benchmark_group("sweep_k10");
    g.sample_size(10);
    let mut spec = SweepSpec::new(Axis::PMaxDbm, vec![-10.0, 0.0, 10.0, 20.0]);
    spec.trials = 50;
    spec.seed = 1;
    for (name, exec) in EXECS {
        g.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &e| {
            b.iter(|| sweep_samples(&spec, e).unwrap())
        });
    }
    g.finish();
}

fn subset_optimum(c: &mut Criterion) {
    let mut g = c.benchmark_group("subset_optimum_k16");
    let s = drop_users(&DropConfig::table_defaults(16, 3), &LinkDefaults::table_defaults()).unwrap();
    for (name, exec) in EXECS {
        g.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &e| {
            b.iter(|| rsma_optimal_sum_rate_with(&s, e).unwrap())
        });
    }
    g.finish();
}

fn order_recovery(c: &mut Criterion) {
    let mut g = c.benchmark_group("order_recovery_k3");
    g.sample_size(10);
    let s = drop_users(&DropConfig::table_defaults(3, derive_seed(4, 0)), &LinkDefaults::table_defaults()).unwrap();
    let target = rsma_optimal_sum_rate_with(&s, Exec::Sequential).unwrap().allocation;
    let opts = ScaOptions::default();
    for (name, exec) in EXECS {
        g.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &e| {
            b.iter(|| recover_order_and_power(&s, &target, &opts, e).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, sweep, subset_optimum, order_recovery);
criterion_main!(benches);
