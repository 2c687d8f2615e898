mod common;

use acia_core::dataset::{generate, EnvironmentDataset, GenConfig};
use acia_core::intervention::DataIntervention;
use acia_core::objective::softmax;
use acia_core::representation::{to_matrix, AciaModel};
use acia_core::trainer::{evaluate, trend_diagnostic, train, Adam, Schedule, TrainConfig};
use acia_core::Error;
use ndarray::Array2;

fn small_cfg() -> TrainConfig {
    TrainConfig {
        max_epochs: 2,
        learning_rate: 1e-3,
        phi_l: Some(vec![16]),
        phi_h: Some(vec![8]),
        seed: 11,
        ..TrainConfig::default()
    }
}

fn colored(n: usize) -> EnvironmentDataset {
    generate(&GenConfig::colored(n), 5).unwrap()
}

/// Plain worst-environment cross-entropy minimization over the trainer's batch order,
/// with the gradient written out by hand.
fn manual_erm(cfg: &TrainConfig, ds: &EnvironmentDataset, init_seed: u64) -> AciaModel {
    let mut model = AciaModel::init(&cfg.arch_for(ds), init_seed).unwrap();
    let schedule = Schedule::new(cfg, ds).unwrap();
    let mut adam = Adam::new(cfg.learning_rate, cfg.optimizer.clone(), model.params.n_params());
    for epoch in 0..cfg.max_epochs {
        for (rows, envs) in schedule.epoch(epoch) {
            let x = to_matrix(&rows.iter().flat_map(|&i| ds.features_of(i).to_vec()).collect::<Vec<_>>(), ds.feature_dim);
            let y: Vec<usize> = rows.iter().map(|&i| ds.class_of(i).unwrap()).collect();
            let cache = model.forward(x.view()).unwrap();
            let p = softmax(cache.output.view());
            let n_envs = schedule.envs.len();
            let mut risk = vec![0.0; n_envs];
            let mut count = vec![0.0; n_envs];
            for i in 0..rows.len() {
                risk[envs[i]] -= p[[i, y[i]]].ln();
                count[envs[i]] += 1.0;
            }
            let worst = (0..n_envs).fold(0, |w, e| if risk[e] / count[e] > risk[w] / count[w] { e } else { w });
            let mut d = Array2::zeros(p.raw_dim());
            for i in 0..rows.len() {
                if envs[i] == worst {
                    let mut row = p.row(i).to_owned();
                    row[y[i]] -= 1.0;
                    d.row_mut(i).assign(&(row / count[worst]));
                }
            }
            let g = model.backward(&cache, d.view(), None, None);
            adam.step(&mut model.params, &g);
        }
    }
    model
}

#[test]
fn disabling_regularizers_reduces_to_worst_env_erm() {
    let ds = colored(100);
    let cfg = small_cfg().erm();
    let (trained, history) = train(&cfg, &ds, &DataIntervention::default_for(ds.family)).unwrap();
    assert!(history.steps.iter().all(|s| s.breakdown.r1 == 0.0 && s.breakdown.r2 == 0.0));
    assert!(history.steps.iter().all(|s| s.breakdown.total == s.breakdown.per_env_risk[&s.breakdown.worst_env]));
    let manual = manual_erm(&cfg, &ds, trained.init_seed);
    let diff = trained
        .params
        .to_flat()
        .iter()
        .zip(manual.params.to_flat())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    assert!(diff <= 1e-9, "{diff}");
}

#[test]
fn training_is_bitwise_reproducible() {
    let ds = colored(80);
    let spec = DataIntervention::default_for(ds.family);
    let cfg = TrainConfig { eval_every: 5, ..small_cfg() };
    let (m1, h1) = train(&cfg, &ds, &spec).unwrap();
    let (m2, h2) = train(&cfg, &ds, &spec).unwrap();
    assert_eq!(m1.params, m2.params);
    let (mut a, mut b) = (Vec::new(), Vec::new());
    h1.write_jsonl(&mut a).unwrap();
    h2.write_jsonl(&mut b).unwrap();
    assert_eq!(a, b);
    assert!(!h1.evals.is_empty());
    assert!(h1.steps.windows(2).all(|w| w[1].step > w[0].step));
    let (m3, _) = train(&TrainConfig { seed: 12, ..cfg }, &ds, &spec).unwrap();
    assert_ne!(m1.params, m3.params);
}

#[test]
fn every_step_populates_each_environment() {
    let ds = generate(&GenConfig::ball(40), 2).unwrap();
    let cfg = small_cfg();
    let (_, h) = train(&cfg, &ds, &DataIntervention::default_for(ds.family)).unwrap();
    for s in &h.steps {
        assert_eq!(s.breakdown.per_env_risk.len(), 2);
        assert!(s.breakdown.total.is_finite());
        assert_eq!(s.breakdown.r2_mode, "simulation");
    }
}

#[test]
fn toy_training_uses_exact_r2() {
    let ds = generate(&GenConfig::toy(200), 1).unwrap();
    let (_, h) = train(&small_cfg(), &ds, &DataIntervention::default_for(ds.family)).unwrap();
    assert!(h.steps.iter().all(|s| s.breakdown.r2_mode == "exact"));
}

#[test]
fn divergence_raises() {
    let ds = generate(&GenConfig::ball(20), 1).unwrap();
    let cfg = TrainConfig { learning_rate: 1e150, ..small_cfg() };
    match train(&cfg, &ds, &DataIntervention::default_for(ds.family)) {
        Err(Error::DivergenceDetected { .. }) => {}
        other => panic!("expected divergence, got {:?}", other.map(|(_, h)| h.steps.len())),
    }
}

#[test]
fn early_stopping_returns_best_held_out_checkpoint() {
    let ds = colored(150);
    let cfg = TrainConfig { early_stop_patience: Some(2), max_epochs: 6, learning_rate: 3e-3, ..small_cfg() };
    let (model, h) = train(&cfg, &ds, &DataIntervention::default_for(ds.family)).unwrap();
    let best = h.held_out.iter().cloned().fold((0, f64::INFINITY), |a, b| if b.1 < a.1 { b } else { a });
    assert_eq!(h.returned_step, best.0);
    // Recompute the held-out worst-environment risk of the returned model.
    let (_, held) = ds.holdout_split();
    let mut worst = f64::NEG_INFINITY;
    for id in ds.env_ids() {
        let rows: Vec<usize> = held.iter().copied().filter(|&i| ds.env_of(i) == id).collect();
        let x = ds.subset(&rows);
        let out = model.predict(to_matrix(&x.features, x.feature_dim).view()).unwrap();
        let p = softmax(out.view());
        let loss: f64 = (0..rows.len()).map(|r| -p[[r, x.class_of(r).unwrap()]].ln()).sum::<f64>() / rows.len() as f64;
        worst = worst.max(loss);
    }
    assert!((worst - best.1).abs() <= 1e-12);
}

#[test]
fn configuration_errors() {
    let ds = colored(20);
    let spec = DataIntervention::default_for(ds.family);
    let tiny = TrainConfig { batch_size: 3, ..small_cfg() };
    assert!(matches!(train(&tiny, &ds, &spec), Err(Error::Config(m)) if m.contains("batch_size")));
    let one_env = ds.subset(&ds.indices_for_env(1));
    assert!(matches!(train(&small_cfg(), &one_env, &spec), Err(Error::Config(_))));
    let bad: Result<TrainConfig, _> = serde_json::from_str(r#"{"learning_rat": 0.1}"#);
    assert!(bad.is_err());
    let cfg: TrainConfig = serde_json::from_str("{}").unwrap();
    assert_eq!(cfg.learning_rate, 1e-4);
    assert_eq!(serde_json::from_str::<TrainConfig>(&serde_json::to_string(&cfg).unwrap()).unwrap(), cfg);
}

#[test]
fn objective_trends_down_on_colored_digits() {
    let ds = colored(400);
    let cfg = TrainConfig { max_epochs: 30, ..small_cfg() };
    let (model, h) = train(&cfg, &ds, &DataIntervention::default_for(ds.family)).unwrap();
    let trend = trend_diagnostic(&h.totals(), 20, 0.2);
    assert!(trend.end < trend.start, "{trend:?}");
    let report = evaluate(&model, &ds, &DataIntervention::default_for(ds.family), 1).unwrap();
    assert!(report.accuracy > 0.9, "{}", report.accuracy);
}
