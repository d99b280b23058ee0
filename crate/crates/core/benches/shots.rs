use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use decoupler::circuit::build_schedule;
use decoupler::dd::{dd_pulses, BaselineKind, DdMode};
use decoupler::device::calibrated_chain10;
use decoupler::exec;
use decoupler::qft::build_qft_m;
use decoupler::sim::run_shots;

fn shots(c: &mut Criterion) {
    let device = calibrated_chain10();
    let sched = build_schedule(&build_qft_m(10), &device.timing).unwrap();
    let pulses = dd_pulses(&sched, &device, &DdMode::Baseline(BaselineKind::XpXm)).unwrap();
    let mut group = c.benchmark_group("qft10_xpxm");
    group.sample_size(10);
    for n in [256u64, 2048] {
        group.bench_with_input(BenchmarkId::new("sequential", n), &n, |b, &n| {
            b.iter(|| exec::sequential(|| run_shots(&sched, &pulses, &device, n, 1).unwrap()))
        });
        group.bench_with_input(BenchmarkId::new("parallel", n), &n, |b, &n| {
            b.iter(|| run_shots(&sched, &pulses, &device, n, 1).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, shots);
criterion_main!(benches);
