mod common;

use acia_core::objective::{r1, r2_simulation, total_objective, Batch, ObjectiveConfig, R2Mode, Targets};
use acia_core::representation::{AciaModel, Arch};
use common::rng;
use ndarray::{Array1, Array2};
use proptest::prelude::*;
use rand::Rng;

/// Representations where every (label, env) cell has the same mean.
fn aligned_z(n_labels: usize, n_envs: usize, per_cell: usize, d: usize, seed: u64) -> (Array2<f64>, Vec<usize>, Vec<usize>) {
    let mut r = rng(seed);
    let centers: Vec<Array1<f64>> = (0..n_labels).map(|_| Array1::from_shape_fn(d, |_| r.gen_range(-2.0..2.0))).collect();
    let n = n_labels * n_envs * per_cell;
    let mut z = Array2::zeros((n, d));
    let (mut ys, mut es) = (Vec::new(), Vec::new());
    let mut i = 0;
    for y in 0..n_labels {
        for e in 0..n_envs {
            // Symmetric offsets cancel inside the cell.
            let offs: Vec<Array1<f64>> = (0..per_cell / 2).map(|_| Array1::from_shape_fn(d, |_| r.gen_range(-1.0..1.0))).collect();
            for o in &offs {
                for sign in [1.0, -1.0] {
                    z.row_mut(i).assign(&(&centers[y] + &(o * sign)));
                    ys.push(y);
                    es.push(e);
                    i += 1;
                }
            }
        }
    }
    (z, ys, es)
}

fn arb_cells() -> impl Strategy<Value = (Array2<f64>, Vec<usize>, Vec<usize>, usize)> {
    (any::<u64>(), 1usize..4, 2usize..4, 1usize..5, 4usize..30).prop_map(|(seed, ny, ne, d, n)| {
        let mut r = rng(seed);
        let z = Array2::from_shape_fn((n, d), |_| r.gen_range(-3.0..3.0));
        let ys = (0..n).map(|_| r.gen_range(0..ny)).collect();
        let es = (0..n).map(|_| r.gen_range(0..ne)).collect();
        (z, ys, es, ne)
    })
}

#[test]
fn r1_zero_when_cell_means_coincide() {
    let (z, ys, es) = aligned_z(3, 3, 4, 5, 1);
    let v = r1(z.view(), std::slice::from_ref(&ys), &es, 3);
    assert!(v.value.abs() <= 1e-12, "{}", v.value);
    let mut shifted = z.clone();
    shifted[[0, 0]] += 0.5;
    assert!(r1(shifted.view(), &[ys], &es, 3).value > 0.0);
}

#[test]
fn r1_pairwise_oracle() {
    // Label 0: env means 0 and 3 -> distance 3; label 1: env means (0,0) and (3,4) -> 5.
    let z = ndarray::array![[0.0, 0.0], [0.0, 0.0], [3.0, 0.0], [3.0, 0.0], [0.0, 0.0], [3.0, 4.0]];
    let ys = vec![0, 0, 0, 0, 1, 1];
    let es = vec![0, 0, 1, 1, 0, 1];
    let v = r1(z.view(), &[ys], &es, 2);
    let want = 4.0 / 6.0 * 3.0 + 2.0 / 6.0 * 5.0;
    assert!((v.value - want).abs() <= 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn r1_nonnegative_and_permutation_invariant((z, ys, es, ne) in arb_cells(), seed in any::<u64>()) {
        let base = r1(z.view(), std::slice::from_ref(&ys), &es, ne).value;
        prop_assert!(base >= 0.0);
        let mut order: Vec<usize> = (0..ys.len()).collect();
        use rand::seq::SliceRandom;
        order.shuffle(&mut rng(seed));
        let zp = z.select(ndarray::Axis(0), &order);
        let yp: Vec<usize> = order.iter().map(|&i| ys[i]).collect();
        let ep: Vec<usize> = order.iter().map(|&i| es[i]).collect();
        prop_assert!((r1(zp.view(), &[yp], &ep, ne).value - base).abs() <= 1e-9);
        // Relabel environments by reversing positions.
        let er: Vec<usize> = es.iter().map(|&e| ne - 1 - e).collect();
        prop_assert!((r1(z.view(), &[ys], &er, ne).value - base).abs() <= 1e-9);
    }

    #[test]
    fn total_identity_and_scaled_argmax(seed in any::<u64>(), c in 0.1f64..10.0) {
        let mut r = rng(seed);
        let arch = Arch { input_dim: 3, phi_l: vec![4], phi_h: vec![3], output_dim: 2 };
        let model = AciaModel::init(&arch, seed).unwrap();
        let n = 12;
        let x = Array2::from_shape_fn((n, 3), |_| r.gen_range(-1.0..1.0));
        let t = Array2::from_shape_fn((n, 2), |_| r.gen_range(-1.0..1.0));
        let envs: Vec<usize> = (0..n).map(|i| i % 3).collect();
        let batch = Batch {
            x: x.clone(),
            targets: Targets::Coords(t.clone()),
            envs: envs.clone(),
            env_ids: vec![5, 2, 9],
            label_keys: vec![(0..n).map(|i| i % 2).collect()],
            x_int: Some(&x * 0.9),
        };
        let cfg = ObjectiveConfig { lambda1: 0.2, lambda2: 0.3, r2: R2Mode::Simulation };
        let b = total_objective(&model, &batch, &cfg).unwrap();
        let want = b.per_env_risk[&b.worst_env] + 0.2 * b.r1 + 0.3 * b.r2;
        prop_assert!((b.total - want).abs() <= 1e-9);
        prop_assert!(b.r1 >= 0.0 && b.r2 >= 0.0);

        // Scaling the head and the targets by c scales every squared-error risk by c^2.
        let mut scaled = model.clone();
        scaled.params.head.w *= c;
        scaled.params.head.b *= c;
        let sb = Batch { targets: Targets::Coords(&t * c), ..batch.clone() };
        let b2 = total_objective(&scaled, &sb, &ObjectiveConfig { lambda1: 0.0, lambda2: 0.0, r2: R2Mode::Off }).unwrap();
        prop_assert_eq!(b2.worst_env, b.worst_env);
        for (id, risk) in &b.per_env_risk {
            prop_assert!((b2.per_env_risk[id] - c * c * risk).abs() <= 1e-9 * (1.0 + c * c * risk));
        }
    }
}

#[test]
fn r2_zero_for_intervention_invariant_encoder() {
    let mut r = rng(4);
    let arch = Arch { input_dim: 6, phi_l: vec![5], phi_h: vec![4], output_dim: 3 };
    let mut model = AciaModel::init(&arch, 4).unwrap();
    // The intervention rewrites coordinates 0 and 1; the encoder never reads them.
    model.params.phi_l[0].w.row_mut(0).fill(0.0);
    model.params.phi_l[0].w.row_mut(1).fill(0.0);
    let n = 20;
    let x = Array2::from_shape_fn((n, 6), |_| r.gen_range(-1.0..1.0));
    let mut x_int = x.clone();
    for i in 0..n {
        x_int[[i, 0]] = r.gen_range(-5.0..5.0);
        x_int[[i, 1]] = r.gen_range(-5.0..5.0);
    }
    let envs: Vec<usize> = (0..n).map(|i| i % 2).collect();
    let batch = Batch {
        x: x.clone(),
        targets: Targets::Classes((0..n).map(|i| i % 3).collect()),
        envs: envs.clone(),
        env_ids: vec![1, 2],
        label_keys: vec![(0..n).map(|i| i % 3).collect()],
        x_int: Some(x_int.clone()),
    };
    let b = total_objective(&model, &batch, &ObjectiveConfig { lambda1: 0.0, lambda2: 1.0, r2: R2Mode::Simulation }).unwrap();
    assert_eq!(b.r2, 0.0);

    let (a, bb) = (model.predict(x.view()).unwrap(), model.predict(x_int.view()).unwrap());
    assert_eq!(r2_simulation(a.view(), bb.view(), &envs, 2, false).0, 0.0);
    let reading = AciaModel::init(&arch, 4).unwrap();
    let b = total_objective(&reading, &batch, &ObjectiveConfig { lambda1: 0.0, lambda2: 1.0, r2: R2Mode::Simulation }).unwrap();
    assert!(b.r2 > 0.0);
}

#[test]
fn ties_break_to_lowest_position() {
    let arch = Arch { input_dim: 2, phi_l: vec![], phi_h: vec![], output_dim: 2 };
    let model = AciaModel::zeros(&arch).unwrap();
    let batch = Batch {
        x: Array2::zeros((4, 2)),
        targets: Targets::Classes(vec![0, 1, 0, 1]),
        envs: vec![1, 1, 0, 0],
        env_ids: vec![8, 3],
        label_keys: vec![vec![0, 1, 0, 1]],
        x_int: None,
    };
    let b = total_objective(&model, &batch, &ObjectiveConfig { lambda1: 0.0, lambda2: 0.0, r2: R2Mode::Off }).unwrap();
    assert_eq!(b.worst_env, 8);
    assert!((b.total - 2f64.ln()).abs() <= 1e-12);
}

#[test]
fn malformed_batches_rejected() {
    let arch = Arch { input_dim: 2, phi_l: vec![], phi_h: vec![], output_dim: 2 };
    let model = AciaModel::zeros(&arch).unwrap();
    let cfg = ObjectiveConfig { lambda1: 0.0, lambda2: 0.0, r2: R2Mode::Off };
    let empty = Batch {
        x: Array2::zeros((0, 2)),
        targets: Targets::Classes(vec![]),
        envs: vec![],
        env_ids: vec![0],
        label_keys: vec![],
        x_int: None,
    };
    assert!(total_objective(&model, &empty, &cfg).is_err());
    let sim = ObjectiveConfig { lambda1: 0.0, lambda2: 1.0, r2: R2Mode::Simulation };
    let no_int = Batch { x: Array2::zeros((2, 2)), targets: Targets::Classes(vec![0, 1]), envs: vec![0, 0], ..empty };
    assert!(total_objective(&model, &no_int, &sim).is_err());
}
