//! Worst-environment risk with the two causal regularizers:
//!
//! `L = max_e R_e + lambda1 R1 + lambda2 R2`
//!
//! - `R_e`: mean task loss over environment `e` (cross-entropy on logits, or
//!   mean squared error for coordinate regression).
//! - `R1`: label-frequency-weighted sum, over environment pairs, of the L2
//!   distance between label-conditional means of `z_H`.
//! - `R2`: either the simulated form, the L2 distance between predictions on a
//!   sample and on its intervened counterpart, or the exact form on a finite
//!   SCM, the gap between the model's expected label under the do-kernel and
//!   the interventional expectation.
//!
//! The max is a hard max with ties going to the lowest environment position,
//! so only the worst environment's risk receives gradient.

use std::collections::BTreeMap;

use ndarray::{Array1, Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::causal_space::{per_environment_kernel, FiniteScm, Omega};
use crate::intervention::{interventional_kernel, Intervention, Target};
use crate::representation::{AciaModel, Gradients};
use crate::{Error, Result};

/// Prediction targets of a batch.
#[derive(Debug, Clone, PartialEq)]
pub enum Targets {
    Classes(Vec<usize>),
    Coords(Array2<f64>),
}

impl Targets {
    pub fn len(&self) -> usize {
        match self {
            Targets::Classes(c) => c.len(),
            Targets::Coords(c) => c.nrows(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_regression(&self) -> bool {
        matches!(self, Targets::Coords(_))
    }
}

/// A stratified batch: rows from several environments stacked together.
#[derive(Debug, Clone)]
pub struct Batch {
    pub x: Array2<f64>,
    pub targets: Targets,
    /// Environment position (0-based, configuration order) of each row.
    pub envs: Vec<usize>,
    /// Environment ids by position.
    pub env_ids: Vec<i64>,
    /// One or more label groupings for `R1`; each assigns every row a key.
    pub label_keys: Vec<Vec<usize>>,
    /// Intervened counterparts of `x`, row-aligned, for simulated `R2`.
    pub x_int: Option<Array2<f64>>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.x.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.x.nrows() == 0
    }

    fn check(&self) -> Result<()> {
        let n = self.x.nrows();
        if n == 0 {
            return Err(Error::EmptyBatch("batch has no rows".into()));
        }
        if self.targets.len() != n || self.envs.len() != n || self.label_keys.iter().any(|k| k.len() != n) {
            return Err(Error::Shape("batch columns have different lengths".into()));
        }
        if let Some(bad) = self.envs.iter().find(|&&e| e >= self.env_ids.len()) {
            return Err(Error::Shape(format!("environment position {bad} has no id")));
        }
        if let Some(xi) = &self.x_int {
            if xi.dim() != self.x.dim() {
                return Err(Error::Shape("intervened rows do not match the batch".into()));
            }
        }
        Ok(())
    }
}

/// Closed-form `R2` on a finite SCM with a scalar label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExactR2 {
    /// Model input for each observable atom (one row per atom).
    pub atom_inputs: Vec<Vec<f64>>,
    /// `K^do(Y)` row over atoms for each environment position.
    pub do_rows: Vec<Vec<f64>>,
    /// Label value of each class.
    pub label_values: Vec<f64>,
    /// Interventional expectation of `Y` for each environment position.
    pub reference: Vec<f64>,
}

impl ExactR2 {
    /// Do-kernel rows and reference for `do(Y ~ q)` on every environment of `scm`.
    pub fn for_scm(scm: &FiniteScm, q: &[f64]) -> Result<Self> {
        let all: Vec<usize> = (0..scm.n_envs()).collect();
        let base = per_environment_kernel(scm, &all)?;
        let done = interventional_kernel(&base, &Intervention::hard(Target::Y, q.to_vec()))?;
        let do_rows = all.iter().map(|&e| done.row(Omega::new(0, e)).map(<[f64]>::to_vec)).collect::<Result<_>>()?;
        let label_values: Vec<f64> = scm.label_support().iter().map(|&v| v as f64).collect();
        let expectation: f64 = q.iter().zip(&label_values).map(|(p, v)| p * v).sum();
        Ok(ExactR2 {
            atom_inputs: scm.obs_support().iter().map(|&v| vec![v as f64]).collect(),
            do_rows,
            label_values,
            reference: vec![expectation; scm.n_envs()],
        })
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum R2Mode {
    Off,
    #[default]
    Simulation,
    Exact(ExactR2),
}

impl R2Mode {
    pub fn name(&self) -> &'static str {
        match self {
            R2Mode::Off => "off",
            R2Mode::Simulation => "simulation",
            R2Mode::Exact(_) => "exact",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObjectiveConfig {
    pub lambda1: f64,
    pub lambda2: f64,
    pub r2: R2Mode,
}

impl ObjectiveConfig {
    /// `lambda1 = 0.1 / sqrt(batch)` and `lambda2 = 0.5 / sqrt(batch)`.
    pub fn default_lambdas(batch_size: usize) -> (f64, f64) {
        let root = (batch_size as f64).sqrt();
        (0.1 / root, 0.5 / root)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveBreakdown {
    pub per_env_risk: BTreeMap<i64, f64>,
    pub worst_env: i64,
    pub r1: f64,
    pub r2: f64,
    pub total: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub r2_mode: String,
    /// `(label, environment)` cells absent from the batch, skipped by `R1`.
    pub r1_skipped_cells: usize,
}

fn log_softmax_row(logits: ndarray::ArrayView1<f64>) -> Array1<f64> {
    let m = logits.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let lse = m + logits.mapv(|v| (v - m).exp()).sum().ln();
    logits.mapv(|v| v - lse)
}

/// Row-wise softmax.
pub fn softmax(logits: ArrayView2<f64>) -> Array2<f64> {
    let mut out = logits.to_owned();
    for mut row in out.rows_mut() {
        let l = log_softmax_row(row.view());
        row.assign(&l.mapv(f64::exp));
    }
    out
}

/// Per-row loss and its gradient with respect to the output row.
fn per_row_loss(output: ArrayView2<f64>, targets: &Targets) -> Result<(Vec<f64>, Array2<f64>)> {
    let mut grad = Array2::zeros(output.raw_dim());
    let losses = match targets {
        Targets::Classes(ys) => {
            if ys.len() != output.nrows() {
                return Err(Error::Shape("one class per row is required".into()));
            }
            let mut losses = Vec::with_capacity(ys.len());
            for (i, &y) in ys.iter().enumerate() {
                if y >= output.ncols() {
                    return Err(Error::Shape(format!("class {y} exceeds {} logits", output.ncols())));
                }
                let ls = log_softmax_row(output.row(i));
                losses.push(-ls[y]);
                let mut g = ls.mapv(f64::exp);
                g[y] -= 1.0;
                grad.row_mut(i).assign(&g);
            }
            losses
        }
        Targets::Coords(t) => {
            if t.dim() != output.dim() {
                return Err(Error::Shape("regression targets must match output shape".into()));
            }
            let k = output.ncols() as f64;
            let diff = &output - t;
            grad.assign(&(&diff * (2.0 / k)));
            diff.rows().into_iter().map(|r| r.mapv(|v| v * v).sum() / k).collect()
        }
    };
    Ok((losses, grad))
}

/// Mean task loss: cross-entropy on logits, or mean squared error.
pub fn task_loss(output: ArrayView2<f64>, targets: &Targets) -> Result<f64> {
    let (losses, _) = per_row_loss(output, targets)?;
    if losses.is_empty() {
        return Err(Error::EmptyBatch("no rows to score".into()));
    }
    Ok(losses.iter().sum::<f64>() / losses.len() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct R1Value {
    pub value: f64,
    pub skipped_cells: usize,
    /// Gradient with respect to each `z_H` row.
    pub grad: Array2<f64>,
}

/// `sum_k freq(k) sum_{i<j} ||mean(z | k, e_i) - mean(z | k, e_j)||_2`, averaged over
/// groupings. Cells with no rows are skipped.
pub fn r1(z_h: ArrayView2<f64>, label_keys: &[Vec<usize>], envs: &[usize], n_envs: usize) -> R1Value {
    let (n, d) = z_h.dim();
    let mut grad = Array2::zeros((n, d));
    let (mut value, mut skipped) = (0.0, 0);
    if n == 0 || label_keys.is_empty() {
        return R1Value { value, skipped_cells: skipped, grad };
    }
    let scale = 1.0 / label_keys.len() as f64;
    for keys in label_keys {
        let n_keys = keys.iter().max().map_or(0, |m| m + 1);
        let mut sums = vec![Array1::<f64>::zeros(d); n_keys * n_envs];
        let mut counts = vec![0usize; n_keys * n_envs];
        for i in 0..n {
            let c = keys[i] * n_envs + envs[i];
            sums[c] += &z_h.row(i);
            counts[c] += 1;
        }
        let means: Vec<Array1<f64>> =
            sums.iter().zip(&counts).map(|(s, &c)| if c > 0 { s / c as f64 } else { s.clone() }).collect();
        // Upstream gradient per cell mean.
        let mut d_means = vec![Array1::<f64>::zeros(d); n_keys * n_envs];
        for k in 0..n_keys {
            let freq = (0..n_envs).map(|e| counts[k * n_envs + e]).sum::<usize>() as f64 / n as f64;
            if freq == 0.0 {
                continue;
            }
            for a in 0..n_envs {
                for b in a + 1..n_envs {
                    let (ca, cb) = (k * n_envs + a, k * n_envs + b);
                    if counts[ca] == 0 || counts[cb] == 0 {
                        skipped += 1;
                        continue;
                    }
                    let diff = &means[ca] - &means[cb];
                    let norm = diff.mapv(|v| v * v).sum().sqrt();
                    value += scale * freq * norm;
                    if norm > 0.0 {
                        let u = diff * (scale * freq / norm);
                        d_means[ca] += &u;
                        d_means[cb] -= &u;
                    }
                }
            }
        }
        for i in 0..n {
            let c = keys[i] * n_envs + envs[i];
            let mut row = grad.row_mut(i);
            row.scaled_add(1.0 / counts[c] as f64, &d_means[c]);
        }
    }
    R1Value { value, skipped_cells: skipped, grad }
}

/// Simulated `R2` with gradients on both output blocks: the per-environment
/// mean of `||g(a_i) - g(b_i)||_2`, summed over environments, where `g` is the
/// softmax for classification and the identity for regression.
pub fn r2_simulation(
    out_a: ArrayView2<f64>,
    out_b: ArrayView2<f64>,
    envs: &[usize],
    n_envs: usize,
    regression: bool,
) -> (f64, Array2<f64>, Array2<f64>) {
    let (pa, pb) = if regression { (out_a.to_owned(), out_b.to_owned()) } else { (softmax(out_a), softmax(out_b)) };
    let mut counts = vec![0usize; n_envs];
    envs.iter().for_each(|&e| counts[e] += 1);
    let (mut value, mut ga, mut gb) = (0.0, Array2::zeros(out_a.raw_dim()), Array2::zeros(out_b.raw_dim()));
    for i in 0..pa.nrows() {
        let w = 1.0 / counts[envs[i]] as f64;
        let diff = &pa.row(i) - &pb.row(i);
        let norm = diff.mapv(|v| v * v).sum().sqrt();
        value += w * norm;
        if norm == 0.0 {
            continue;
        }
        let u = diff * (w / norm);
        if regression {
            ga.row_mut(i).assign(&u);
            gb.row_mut(i).assign(&-&u);
        } else {
            // d softmax: J = diag(p) - p p^T, so J^T u = p * (u - p.u).
            let (p, q) = (pa.row(i), pb.row(i));
            let (pu, qu) = (p.dot(&u), q.dot(&u));
            ga.row_mut(i).assign(&(&p * &(&u - pu)));
            gb.row_mut(i).assign(&-(&q * &(&u - qu)));
        }
    }
    (value, ga, gb)
}

/// `sum_e |predicted_e - reference_e|`.
pub fn r2_exact_from_values(predicted: &[f64], reference: &[f64]) -> f64 {
    predicted.iter().zip(reference).map(|(p, r)| (p - r).abs()).sum()
}

/// Exact `R2` and its gradient with respect to the atom logits.
fn r2_exact(atom_logits: ArrayView2<f64>, spec: &ExactR2, env_positions: &[usize]) -> (f64, Array2<f64>) {
    let probs = softmax(atom_logits);
    let values = Array1::from(spec.label_values.clone());
    let expect: Array1<f64> = probs.dot(&values);
    let mut grad = Array2::zeros(atom_logits.raw_dim());
    let mut value = 0.0;
    for &e in env_positions {
        let row = &spec.do_rows[e];
        let predicted: f64 = row.iter().zip(expect.iter()).map(|(w, v)| w * v).sum();
        let gap = predicted - spec.reference[e];
        value += gap.abs();
        let sign = if gap > 0.0 {
            1.0
        } else if gap < 0.0 {
            -1.0
        } else {
            0.0
        };
        for (x, &w) in row.iter().enumerate() {
            // d E[y | x] / d logit_k = p_k (v_k - E[y | x]).
            let p = probs.row(x);
            let g = (&values - expect[x]) * p * (sign * w);
            let mut gr = grad.row_mut(x);
            gr += &g;
        }
    }
    (value, grad)
}

/// Evaluate the objective without gradients.
pub fn total_objective(model: &AciaModel, batch: &Batch, cfg: &ObjectiveConfig) -> Result<ObjectiveBreakdown> {
    Ok(evaluate(model, batch, cfg, false)?.0)
}

/// Objective value and its analytic gradient with respect to every parameter.
pub fn objective_and_gradients(
    model: &AciaModel,
    batch: &Batch,
    cfg: &ObjectiveConfig,
) -> Result<(ObjectiveBreakdown, Gradients)> {
    let (b, g) = evaluate(model, batch, cfg, true)?;
    Ok((b, g.expect("gradients requested")))
}

fn evaluate(
    model: &AciaModel,
    batch: &Batch,
    cfg: &ObjectiveConfig,
    want_grad: bool,
) -> Result<(ObjectiveBreakdown, Option<Gradients>)> {
    batch.check()?;
    let n_envs = batch.env_ids.len();
    let cache = model.forward(batch.x.view())?;
    let (losses, d_loss) = per_row_loss(cache.output.view(), &batch.targets)?;

    let mut sums = vec![0.0; n_envs];
    let mut counts = vec![0usize; n_envs];
    for (i, &e) in batch.envs.iter().enumerate() {
        sums[e] += losses[i];
        counts[e] += 1;
    }
    let present: Vec<usize> = (0..n_envs).filter(|&e| counts[e] > 0).collect();
    let mut per_env_risk = BTreeMap::new();
    let mut worst: Option<(usize, f64)> = None;
    for &e in &present {
        let risk = sums[e] / counts[e] as f64;
        per_env_risk.insert(batch.env_ids[e], risk);
        if worst.is_none_or(|(_, r)| risk > r) {
            worst = Some((e, risk));
        }
    }
    let (worst_pos, worst_risk) = worst.expect("batch is non-empty");

    let r1v = if cfg.lambda1 != 0.0 {
        r1(cache.z_h.view(), &batch.label_keys, &batch.envs, n_envs)
    } else {
        R1Value { value: 0.0, skipped_cells: 0, grad: Array2::zeros(cache.z_h.raw_dim()) }
    };

    let mut r2_value = 0.0;
    let mut extra_grads: Option<Gradients> = None;
    if cfg.lambda2 != 0.0 {
        match &cfg.r2 {
            R2Mode::Off => {}
            R2Mode::Simulation => {
                let x_int = batch
                    .x_int
                    .as_ref()
                    .ok_or_else(|| Error::Config("simulated R2 needs intervened rows in the batch".into()))?;
                let cache_b = model.forward(x_int.view())?;
                let (v, ga, gb) = r2_simulation(
                    cache.output.view(),
                    cache_b.output.view(),
                    &batch.envs,
                    n_envs,
                    batch.targets.is_regression(),
                );
                r2_value = v;
                if want_grad {
                    let mut g = model.backward(&cache, (ga * cfg.lambda2).view(), None, None);
                    g.add_scaled(&model.backward(&cache_b, (gb * cfg.lambda2).view(), None, None), 1.0);
                    extra_grads = Some(g);
                }
            }
            R2Mode::Exact(spec) => {
                if batch.targets.is_regression() {
                    return Err(Error::FamilyMismatch("exact R2 needs class labels".into()));
                }
                let atoms = Array2::from_shape_vec(
                    (spec.atom_inputs.len(), model.arch.input_dim),
                    spec.atom_inputs.iter().flatten().copied().collect(),
                )
                .map_err(|_| Error::DimMismatch { expected: model.arch.input_dim, got: spec.atom_inputs[0].len() })?;
                let cache_atoms = model.forward(atoms.view())?;
                let (v, g_atoms) = r2_exact(cache_atoms.output.view(), spec, &present);
                r2_value = v;
                if want_grad {
                    extra_grads = Some(model.backward(&cache_atoms, (g_atoms * cfg.lambda2).view(), None, None));
                }
            }
        }
    }

    let total = worst_risk + cfg.lambda1 * r1v.value + cfg.lambda2 * r2_value;
    if !total.is_finite() {
        return Err(Error::NonFiniteObjective(total));
    }
    let breakdown = ObjectiveBreakdown {
        per_env_risk,
        worst_env: batch.env_ids[worst_pos],
        r1: r1v.value,
        r2: r2_value,
        total,
        lambda1: cfg.lambda1,
        lambda2: cfg.lambda2,
        r2_mode: if cfg.lambda2 != 0.0 { cfg.r2.name() } else { "off" }.to_string(),
        r1_skipped_cells: r1v.skipped_cells,
    };
    if !want_grad {
        return Ok((breakdown, None));
    }

    let mut d_out = Array2::zeros(cache.output.raw_dim());
    let inv = 1.0 / counts[worst_pos] as f64;
    for (i, &e) in batch.envs.iter().enumerate() {
        if e == worst_pos {
            d_out.row_mut(i).assign(&(&d_loss.row(i) * inv));
        }
    }
    let d_zh = (cfg.lambda1 != 0.0).then(|| r1v.grad * cfg.lambda1);
    let mut grads = model.backward(&cache, d_out.view(), d_zh.as_ref().map(|g| g.view()), None);
    if let Some(g) = extra_grads {
        grads.add_scaled(&g, 1.0);
    }
    if !grads.is_finite() {
        return Err(Error::NonFiniteObjective(f64::NAN));
    }
    Ok((breakdown, Some(grads)))
}

/// Mean representation per environment position.
pub fn env_means(z: ArrayView2<f64>, envs: &[usize], n_envs: usize) -> Vec<Array1<f64>> {
    let mut sums = vec![Array1::zeros(z.ncols()); n_envs];
    let mut counts = vec![0usize; n_envs];
    for (i, &e) in envs.iter().enumerate() {
        sums[e] += &z.row(i);
        counts[e] += 1;
    }
    sums.into_iter().zip(counts).map(|(s, c)| if c > 0 { s / c as f64 } else { s }).collect()
}
