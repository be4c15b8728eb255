use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use qmine_core::mine::{backward, sgd_step, DropoutMasks, MlpParams};
use qmine_core::{ground_state, plugin_mi, sample_bitstrings, IsingOperator, ModelParams, Partition, SolverOptions};

fn matvec(c: &mut Criterion) {
    let op = IsingOperator::new(ModelParams::new(16, 0.9, 0.3).unwrap());
    let v: Vec<f64> = (0..op.dim()).map(|i| (i as f64).sin()).collect();
    let mut out = vec![0.0; op.dim()];
    c.bench_function("apply_hamiltonian/n16", |b| b.iter(|| op.apply_into(&v, &mut out).unwrap()));
}

fn lanczos(c: &mut Criterion) {
    let p = ModelParams::new(12, 1.0, 0.5).unwrap();
    c.bench_function("ground_state/n12", |b| b.iter(|| ground_state(&p, &SolverOptions::default()).unwrap()));
}

fn training_step(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let bits = |rng: &mut ChaCha8Rng| DMatrix::from_fn(16, 256, |_, _| if rng.gen::<bool>() { 1.0 } else { 0.0 });
    let joint = bits(&mut rng);
    let marginal = bits(&mut rng);
    let params = MlpParams::glorot(16, &mut rng);
    let velocity = params.zeros_like();
    c.bench_function("mine_step/n16_batch256", |b| {
        b.iter_batched(
            || (params.clone(), velocity.clone(), ChaCha8Rng::seed_from_u64(1)),
            |(mut p, mut v, mut r)| {
                let masks = DropoutMasks::sample(&p, 256, 0.1, &mut r);
                let (_, g) = backward(&p, &joint, &marginal, Some(&masks)).unwrap();
                sgd_step(&mut p, &g, &mut v, 0.01, 0.8).unwrap();
                p
            },
            BatchSize::SmallInput,
        )
    });
}

fn plugin(c: &mut Criterion) {
    let psi = ground_state(&ModelParams::new(16, 1.0, 1.0).unwrap(), &SolverOptions::default()).unwrap().state;
    let data = sample_bitstrings(&psi, 15000, 3).unwrap();
    let part = Partition::half(16).unwrap();
    c.bench_function("plugin_mi/n16_15000", |b| b.iter(|| plugin_mi(&data, &part).unwrap()));
}

criterion_group!(benches, matvec, lanczos, training_step, plugin);
criterion_main!(benches);
