use acia_core::dataset::{generate, GenConfig};
use acia_core::intervention::DataIntervention;
use acia_core::objective::{objective_and_gradients, Batch, ObjectiveConfig, R2Mode, Targets};
use acia_core::representation::{AciaModel, Arch};
use acia_core::trainer::{evaluate, train, TrainConfig};
use criterion::{black_box, criterion_group, criterion_main, Criterion};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn batch(n: usize, input: usize) -> Batch {
    let mut r = ChaCha8Rng::seed_from_u64(5);
    let x = Array2::from_shape_fn((n, input), |_| r.gen_range(-1.0..1.0));
    let x_int = &x + &Array2::from_shape_fn((n, input), |_| r.gen_range(-0.1..0.1));
    let classes: Vec<usize> = (0..n).map(|i| i % 10).collect();
    Batch {
        x,
        targets: Targets::Classes(classes.clone()),
        envs: (0..n).map(|i| i % 2).collect(),
        env_ids: vec![1, 2],
        label_keys: vec![classes],
        x_int: Some(x_int),
    }
}

fn training(c: &mut Criterion) {
    let arch = Arch { input_dim: 128, phi_l: vec![32], phi_h: vec![16], output_dim: 10 };
    let model = AciaModel::init(&arch, 1).unwrap();
    let b = batch(32, 128);
    let cfg = ObjectiveConfig { lambda1: 0.1, lambda2: 0.5, r2: R2Mode::Simulation };
    c.bench_function("objective_and_gradients/batch32", |bench| {
        bench.iter(|| objective_and_gradients(black_box(&model), &b, &cfg).unwrap())
    });

    let ds = generate(&GenConfig::colored(500), 2).unwrap();
    let spec = DataIntervention::default_for(ds.family);
    let tc = TrainConfig { max_epochs: 1, learning_rate: 1e-3, ..TrainConfig::default() };
    let mut group = c.benchmark_group("train");
    group.sample_size(10);
    group.bench_function("colored_1000_one_epoch", |bench| bench.iter(|| train(&tc, &ds, &spec).unwrap()));
    group.finish();

    let (trained, _) = train(&tc, &ds, &spec).unwrap();
    c.bench_function("evaluate/colored_1000", |bench| bench.iter(|| evaluate(&trained, &ds, &spec, 3).unwrap()));
}

criterion_group!(benches, training);
criterion_main!(benches);
