use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use dgl_core::experiments::{run_regime_verification, StudySettings};
use dgl_core::{Execution, Forcing, IntegrationOptions, LatticeState, ModelParams, RhsKernel, C64};

fn rhs(c: &mut Criterion) {
    let mut group = c.benchmark_group("rhs_eval");
    let params = ModelParams::nonlocal(0.5, 0.3, 2.0);
    let forcing = Forcing::single_site(0, 0.1);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for half_width in [256usize, 16_384, 262_144] {
        let state = LatticeState::random(&mut rng, -(half_width as i64), 2 * half_width + 1, 0.1);
        let kernel = RhsKernel::for_state(&params, &forcing, &state).unwrap();
        let mut out = vec![C64::new(0.0, 0.0); state.len()];
        for exec in [Execution::Sequential, Execution::Parallel] {
            group.bench_with_input(
                BenchmarkId::new(format!("{exec:?}"), half_width),
                &half_width,
                |b, _| b.iter(|| kernel.eval_into(state.values(), &mut out, exec)),
            );
        }
    }
    group.finish();
}

fn sweep(c: &mut Criterion) {
    let mut group = c.benchmark_group("regime_sweep");
    group.sample_size(10);
    let params = ModelParams::nonlocal(0.0, 0.0, 3.0);
    let forcing = Forcing::single_site(0, 0.1);
    let grid: Vec<f64> = (1..=8).map(|k| 0.1 * k as f64).collect();
    for exec in [Execution::Sequential, Execution::Parallel] {
        let settings = StudySettings::default()
            .with_half_width(128)
            .with_opts(IntegrationOptions::default().with_exec(exec));
        group.bench_function(format!("{exec:?}"), |b| {
            b.iter(|| run_regime_verification(&params, &forcing, &grid, 5.0, &settings).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, rhs, sweep);
criterion_main!(benches);
