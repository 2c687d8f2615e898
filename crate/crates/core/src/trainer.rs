//! Joint optimisation of `phi_L`, `phi_H` and the head under the
//! worst-environment objective, plus evaluation.
//!
//! Every step draws an equal-size sub-batch from each training environment so
//! the hard max and every `R1` environment pair are populated. Shuffles,
//! intervened counterparts and initialisation all draw from generators
//! derived from the configured seed, and reductions run in a fixed order, so a
//! run is bitwise reproducible.

use std::io::Write;
use std::time::Instant;

use ndarray::Array2;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::dataset::{EnvironmentDataset, Generator};
use crate::intervention::{intervene_dataset, DataIntervention};
use crate::metrics::{
    self, accuracy_from_scores, confidences, coordinate_edges, env_independence_grouped, forward_rows,
    intervention_robustness, label_groupings, low_level_invariance, sample_scores, Binning, EnvMetrics, LliMode,
    MetricsReport,
};
use crate::objective::{objective_and_gradients, task_loss, Batch, ExactR2, ObjectiveBreakdown, ObjectiveConfig, R2Mode, Targets};
use crate::representation::{to_matrix, AciaModel, Arch, ParamSet};
use crate::{rng, Error, Result};

const INIT_STREAM: u64 = 0x7a10_0001;
const SHUFFLE_STREAM: u64 = 0x7a10_0002;
const INTERVENE_STREAM: u64 = 0x7a10_0003;
const EVAL_STREAM: u64 = 0x7a10_0004;

fn d_batch() -> usize {
    32
}
fn d_lr() -> f64 {
    1e-4
}
fn d_epochs() -> usize {
    50
}
fn d_beta1() -> f64 {
    0.9
}
fn d_beta2() -> f64 {
    0.999
}
fn d_eps() -> f64 {
    1e-8
}

/// Adaptive-moment optimiser settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamConfig {
    #[serde(default = "d_beta1")]
    pub beta1: f64,
    #[serde(default = "d_beta2")]
    pub beta2: f64,
    #[serde(default = "d_eps")]
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { beta1: d_beta1(), beta2: d_beta2(), eps: d_eps() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum R2Choice {
    /// Exact on the toy family, simulated elsewhere.
    #[default]
    Auto,
    Simulation,
    Exact,
    Off,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    #[serde(default = "d_batch")]
    pub batch_size: usize,
    #[serde(default = "d_lr")]
    pub learning_rate: f64,
    #[serde(default)]
    pub optimizer: AdamConfig,
    #[serde(default = "d_epochs")]
    pub max_epochs: usize,
    /// Epochs without held-out improvement before stopping. Off when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub early_stop_patience: Option<usize>,
    /// Defaults to `0.1 / sqrt(batch_size)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda1: Option<f64>,
    /// Defaults to `0.5 / sqrt(batch_size)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda2: Option<f64>,
    #[serde(default)]
    pub r2_mode: R2Choice,
    #[serde(default)]
    pub seed: u64,
    /// Steps between metric evaluations; 0 evaluates only at the end.
    #[serde(default)]
    pub eval_every: usize,
    /// Override the family's default `phi_L` widths.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phi_l: Option<Vec<usize>>,
    /// Override the family's default `phi_H` widths.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phi_h: Option<Vec<usize>>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("every field has a default")
    }
}

impl TrainConfig {
    /// The same configuration with both regularizers disabled.
    pub fn erm(&self) -> Self {
        TrainConfig { lambda1: Some(0.0), lambda2: Some(0.0), ..self.clone() }
    }

    pub fn lambdas(&self) -> (f64, f64) {
        let (l1, l2) = ObjectiveConfig::default_lambdas(self.batch_size);
        (self.lambda1.unwrap_or(l1), self.lambda2.unwrap_or(l2))
    }

    pub fn validate(&self, n_envs: usize) -> Result<()> {
        if self.batch_size < 2 * n_envs.max(1) {
            return Err(Error::Config(format!(
                "batch_size: {} is below twice the number of environments ({n_envs})",
                self.batch_size
            )));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning_rate: {} must be positive", self.learning_rate)));
        }
        if self.max_epochs == 0 {
            return Err(Error::Config("max_epochs: must be positive".into()));
        }
        let (l1, l2) = self.lambdas();
        if !(l1 >= 0.0 && l1.is_finite()) {
            return Err(Error::Config(format!("lambda1: {l1} must be a finite non-negative number")));
        }
        if !(l2 >= 0.0 && l2.is_finite()) {
            return Err(Error::Config(format!("lambda2: {l2} must be a finite non-negative number")));
        }
        let o = &self.optimizer;
        if !(0.0..1.0).contains(&o.beta1) || !(0.0..1.0).contains(&o.beta2) {
            return Err(Error::Config("optimizer.beta1/beta2: must lie in [0, 1)".into()));
        }
        if !(o.eps > 0.0) {
            return Err(Error::Config("optimizer.eps: must be positive".into()));
        }
        if let Some(p) = self.early_stop_patience {
            if p == 0 {
                return Err(Error::Config("early_stop_patience: must be positive when set".into()));
            }
        }
        Ok(())
    }

    pub fn arch_for(&self, ds: &EnvironmentDataset) -> Arch {
        let mut arch = Arch::for_family(ds.family, ds.feature_dim, ds.output_dim());
        if let Some(l) = &self.phi_l {
            arch.phi_l = l.clone();
        }
        if let Some(h) = &self.phi_h {
            arch.phi_h = h.clone();
        }
        arch
    }
}

/// Adam with bias correction.
#[derive(Debug, Clone)]
pub struct Adam {
    cfg: AdamConfig,
    lr: f64,
    t: i32,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    pub fn new(lr: f64, cfg: AdamConfig, n_params: usize) -> Self {
        Adam { cfg, lr, t: 0, m: vec![0.0; n_params], v: vec![0.0; n_params] }
    }

    pub fn step(&mut self, params: &mut ParamSet, grads: &ParamSet) {
        self.t += 1;
        let (b1, b2) = (self.cfg.beta1, self.cfg.beta2);
        let c1 = 1.0 - b1.powi(self.t);
        let c2 = 1.0 - b2.powi(self.t);
        let mut p = params.to_flat();
        for (i, g) in grads.to_flat().into_iter().enumerate() {
            self.m[i] = b1 * self.m[i] + (1.0 - b1) * g;
            self.v[i] = b2 * self.v[i] + (1.0 - b2) * g * g;
            let mh = self.m[i] / c1;
            let vh = self.v[i] / c2;
            p[i] -= self.lr * mh / (vh.sqrt() + self.cfg.eps);
        }
        params.set_flat(&p).expect("same shape");
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub epoch: usize,
    #[serde(flatten)]
    pub breakdown: ObjectiveBreakdown,
    /// Seconds spent on the step. Not serialized so that histories stay byte-stable.
    #[serde(skip)]
    pub wall_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub step: usize,
    pub report: MetricsReport,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainHistory {
    pub steps: Vec<StepRecord>,
    pub evals: Vec<EvalRecord>,
    /// `(step, held-out worst-environment risk)` after each epoch, when early stopping is on.
    pub held_out: Vec<(usize, f64)>,
    /// Step whose parameters were returned.
    pub returned_step: usize,
    pub stopped_early: bool,
}

impl TrainHistory {
    /// One JSON object per line: step records, then evaluation records.
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        for s in &self.steps {
            serde_json::to_writer(&mut w, s)?;
            w.write_all(b"\n")?;
        }
        for e in &self.evals {
            serde_json::to_writer(&mut w, &serde_json::json!({"step": e.step, "eval": e.report}))?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn totals(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.breakdown.total).collect()
    }
}

/// Trailing moving average with the given window (shorter at the start).
pub fn smoothed(values: &[f64], window: usize) -> Vec<f64> {
    let w = window.max(1);
    let mut out = Vec::with_capacity(values.len());
    let mut acc = 0.0;
    for i in 0..values.len() {
        acc += values[i];
        if i >= w {
            acc -= values[i - w];
        }
        out.push(acc / (i + 1).min(w) as f64);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendReport {
    pub window: usize,
    pub first_step: usize,
    /// Largest rebound of the smoothed curve above its running minimum.
    pub max_rise: f64,
    /// Smoothed value at `first_step` and at the end.
    pub start: f64,
    pub end: f64,
}

impl TrendReport {
    pub fn non_increasing(&self, slack: f64) -> bool {
        self.max_rise <= slack
    }
}

/// Convergence diagnostic over the final `1 - skip_fraction` of the steps.
pub fn trend_diagnostic(values: &[f64], window: usize, skip_fraction: f64) -> TrendReport {
    let s = smoothed(values, window);
    let first = ((values.len() as f64) * skip_fraction) as usize;
    let first = first.max(window.min(values.len().saturating_sub(1)));
    let tail = &s[first.min(s.len())..];
    let mut min = f64::INFINITY;
    let mut rise = 0.0_f64;
    for &v in tail {
        min = min.min(v);
        rise = rise.max(v - min);
    }
    TrendReport {
        window,
        first_step: first,
        max_rise: rise,
        start: tail.first().copied().unwrap_or(f64::NAN),
        end: tail.last().copied().unwrap_or(f64::NAN),
    }
}

/// Environment ids in configuration order that have samples.
fn present_envs(ds: &EnvironmentDataset) -> Vec<i64> {
    ds.env_counts().into_iter().filter(|&(_, c)| c > 0).map(|(id, _)| id).collect()
}

fn targets_for(ds: &EnvironmentDataset, rows: &[usize]) -> Result<Targets> {
    if ds.family.is_regression() {
        let mut t = Array2::zeros((rows.len(), ds.label_dim));
        for (r, &i) in rows.iter().enumerate() {
            t.row_mut(r).iter_mut().zip(ds.label_of(i)).for_each(|(a, b)| *a = *b);
        }
        Ok(Targets::Coords(t))
    } else {
        Ok(Targets::Classes(rows.iter().map(|&i| ds.class_of(i)).collect::<Result<_>>()?))
    }
}

fn gather(features: &[f32], dim: usize, rows: &[usize]) -> Array2<f64> {
    let mut m = Array2::zeros((rows.len(), dim));
    for (r, &i) in rows.iter().enumerate() {
        m.row_mut(r).iter_mut().zip(&features[i * dim..(i + 1) * dim]).for_each(|(a, &b)| *a = b as f64);
    }
    m
}

/// Worst-environment task risk of `model` on `ds` restricted to `rows`.
fn worst_risk(model: &AciaModel, ds: &EnvironmentDataset, rows: &[usize], envs: &[i64]) -> Result<f64> {
    let mut worst = f64::NEG_INFINITY;
    for &id in envs {
        let r: Vec<usize> = rows.iter().copied().filter(|&i| ds.env_of(i) == id).collect();
        if r.is_empty() {
            continue;
        }
        let out = model.predict(gather(&ds.features, ds.feature_dim, &r).view())?;
        worst = worst.max(task_loss(out.view(), &targets_for(ds, &r)?)?);
    }
    Ok(worst)
}

/// Stratified batch order: every step takes `batch_size / |E|` rows from each
/// environment, walking a per-epoch shuffle and wrapping around smaller
/// environments.
#[derive(Debug, Clone)]
pub struct Schedule {
    pub envs: Vec<i64>,
    /// Training rows per environment position.
    pub per_env: Vec<Vec<usize>>,
    /// Rows held out for early stopping (empty when it is off).
    pub held_out: Vec<usize>,
    pub per_env_batch: usize,
    pub steps_per_epoch: usize,
    seed: u64,
}

impl Schedule {
    pub fn new(cfg: &TrainConfig, ds: &EnvironmentDataset) -> Result<Self> {
        let envs = present_envs(ds);
        let (train_rows, held_out) = if cfg.early_stop_patience.is_some() {
            ds.holdout_split()
        } else {
            ((0..ds.len()).collect(), Vec::new())
        };
        let per_env: Vec<Vec<usize>> =
            envs.iter().map(|&id| train_rows.iter().copied().filter(|&i| ds.env_of(i) == id).collect()).collect();
        if let Some(pos) = per_env.iter().position(Vec::is_empty) {
            return Err(Error::Config(format!("environment {} has no training samples", envs[pos])));
        }
        let per_env_batch = cfg.batch_size / envs.len().max(1);
        let steps_per_epoch = per_env.iter().map(|r| r.len().div_ceil(per_env_batch)).max().unwrap_or(1);
        Ok(Schedule { envs, per_env, held_out, per_env_batch, steps_per_epoch, seed: cfg.seed })
    }

    /// `(rows, environment positions)` for every step of `epoch`.
    pub fn epoch(&self, epoch: usize) -> Vec<(Vec<usize>, Vec<usize>)> {
        let n_envs = self.envs.len();
        let perms: Vec<Vec<usize>> = self
            .per_env
            .iter()
            .enumerate()
            .map(|(k, rows)| {
                let mut p = rows.clone();
                p.shuffle(&mut rng::rng_for(self.seed, SHUFFLE_STREAM, (epoch * n_envs + k) as u64));
                p
            })
            .collect();
        let sub = self.per_env_batch;
        (0..self.steps_per_epoch)
            .map(|s| {
                let mut rows = Vec::with_capacity(sub * n_envs);
                let mut env_pos = Vec::with_capacity(sub * n_envs);
                for (k, p) in perms.iter().enumerate() {
                    for j in 0..sub {
                        rows.push(p[(s * sub + j) % p.len()]);
                        env_pos.push(k);
                    }
                }
                (rows, env_pos)
            })
            .collect()
    }
}

fn r2_mode_for(cfg: &TrainConfig, ds: &EnvironmentDataset) -> Result<R2Mode> {
    let toy = ds.family == crate::dataset::Family::ToyScm;
    Ok(match cfg.r2_mode {
        R2Choice::Off => R2Mode::Off,
        R2Choice::Simulation => R2Mode::Simulation,
        R2Choice::Auto if !toy => R2Mode::Simulation,
        R2Choice::Auto | R2Choice::Exact => {
            let scm = ds.scm()?;
            R2Mode::Exact(ExactR2::for_scm(&scm, scm.p_label())?)
        }
    })
}

/// Train a fresh model on every environment of `ds`.
pub fn train(
    cfg: &TrainConfig,
    ds: &EnvironmentDataset,
    spec: &DataIntervention,
) -> Result<(AciaModel, TrainHistory)> {
    let envs = present_envs(ds);
    if envs.len() < 2 {
        return Err(Error::Config(format!("training needs at least two environments with samples, found {}", envs.len())));
    }
    cfg.validate(envs.len())?;
    spec.validate()?;
    let generator = Generator::new(&ds.gen_config)?;
    let arch = cfg.arch_for(ds);
    let mut model = AciaModel::init(&arch, rng::derive_seed(cfg.seed, INIT_STREAM, 0))?;
    let (lambda1, lambda2) = cfg.lambdas();
    let r2 = r2_mode_for(cfg, ds)?;
    let needs_x_int = lambda2 != 0.0 && r2 == R2Mode::Simulation;
    let ocfg = ObjectiveConfig { lambda1, lambda2, r2 };

    let schedule = Schedule::new(cfg, ds)?;
    let edges = ds.family.is_regression().then(|| coordinate_edges(ds));
    let groupings = label_groupings(ds, edges.as_deref())?;

    let mut adam = Adam::new(cfg.learning_rate, cfg.optimizer.clone(), model.params.n_params());
    let mut history = TrainHistory::default();
    let mut best: Option<(f64, AciaModel, usize)> = None;
    let mut since_best = 0;
    let mut step = 0;

    'epochs: for epoch in 0..cfg.max_epochs {
        let steps = schedule.epoch(epoch);
        let x_int = if needs_x_int {
            Some(intervene_dataset(&generator, ds, spec, rng::derive_seed(cfg.seed, INTERVENE_STREAM, epoch as u64))?)
        } else {
            None
        };
        for (rows, env_pos) in steps {
            let started = Instant::now();
            let batch = Batch {
                x: gather(&ds.features, ds.feature_dim, &rows),
                targets: targets_for(ds, &rows)?,
                envs: env_pos,
                env_ids: schedule.envs.clone(),
                label_keys: groupings.iter().map(|g| rows.iter().map(|&i| g[i]).collect()).collect(),
                x_int: x_int.as_ref().map(|xi| gather(xi, ds.feature_dim, &rows)),
            };
            let (breakdown, grads) = match objective_and_gradients(&model, &batch, &ocfg) {
                Ok(v) => v,
                Err(Error::NonFiniteObjective(value)) => return Err(Error::DivergenceDetected { step, value }),
                Err(e) => return Err(e),
            };
            adam.step(&mut model.params, &grads);
            if !model.params.is_finite() {
                return Err(Error::DivergenceDetected { step, value: f64::NAN });
            }
            history.steps.push(StepRecord { step, epoch, breakdown, wall_seconds: started.elapsed().as_secs_f64() });
            step += 1;
            if cfg.eval_every > 0 && step % cfg.eval_every == 0 {
                let report = evaluate(&model, ds, spec, rng::derive_seed(cfg.seed, EVAL_STREAM, step as u64))?;
                history.evals.push(EvalRecord { step, report });
            }
        }
        if cfg.early_stop_patience.is_some() && !schedule.held_out.is_empty() {
            let risk = worst_risk(&model, ds, &schedule.held_out, &schedule.envs)?;
            history.held_out.push((step, risk));
            if best.as_ref().is_none_or(|(b, _, _)| risk < *b) {
                best = Some((risk, model.clone(), step));
                since_best = 0;
            } else {
                since_best += 1;
                if since_best >= cfg.early_stop_patience.unwrap_or(usize::MAX) {
                    history.stopped_early = true;
                    break 'epochs;
                }
            }
        }
    }
    history.returned_step = step;
    if let Some((_, m, s)) = best {
        model = m;
        history.returned_step = s;
    }
    Ok((model, history))
}

/// Full metric report of `model` on `ds`. Intervened counterparts draw from `seed`.
///
/// EI and LLI need two environments; on single-environment data they are
/// reported as 0 with `ei_dims_used = 0`.
pub fn evaluate(model: &AciaModel, ds: &EnvironmentDataset, spec: &DataIntervention, seed: u64) -> Result<MetricsReport> {
    evaluate_with(model, ds, spec, seed, LliMode::default())
}

pub fn evaluate_with(
    model: &AciaModel,
    ds: &EnvironmentDataset,
    spec: &DataIntervention,
    seed: u64,
    lli_mode: LliMode,
) -> Result<MetricsReport> {
    if ds.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if model.arch.input_dim != ds.feature_dim || model.arch.output_dim != ds.output_dim() {
        return Err(Error::FamilyMismatch(format!(
            "model maps {} -> {}, {} dataset has {} features and {} targets",
            model.arch.input_dim,
            model.arch.output_dim,
            ds.family,
            ds.feature_dim,
            ds.output_dim()
        )));
    }
    let regression = ds.family.is_regression();
    let rep = forward_rows(model, &ds.features, ds.feature_dim)?;
    let scores = sample_scores(rep.output.view(), ds)?;
    let accuracy = accuracy_from_scores(&scores, regression)?;
    let position_error = regression.then(|| scores.iter().sum::<f64>() / scores.len() as f64);

    let env_pos: Vec<usize> = (0..ds.len()).map(|i| ds.env_position(ds.env_of(i)).expect("validated dataset")).collect();
    let per_env = ds
        .env_counts()
        .into_iter()
        .filter(|&(_, n)| n > 0)
        .map(|(id, n)| {
            let s: Vec<f64> = (0..ds.len()).filter(|&i| ds.env_of(i) == id).map(|i| scores[i]).collect();
            Ok(EnvMetrics { env: id, n, accuracy: accuracy_from_scores(&s, regression)? })
        })
        .collect::<Result<Vec<_>>>()?;

    let (ei, lli, dims) = if per_env.len() >= 2 {
        let groupings = label_groupings(ds, None)?;
        let (ei, dims) = env_independence_grouped(rep.z_h.view(), &groupings, &env_pos)?;
        (ei, low_level_invariance(rep.z_l.view(), &env_pos, lli_mode)?, dims)
    } else {
        (0.0, 0.0, 0)
    };

    let generator = Generator::new(&ds.gen_config)?;
    let x_int = intervene_dataset(&generator, ds, spec, seed)?;
    let rep_int = forward_rows(model, &x_int, ds.feature_dim)?;
    let ir = intervention_robustness(&confidences(rep.output.view(), ds), &confidences(rep_int.output.view(), ds));

    Ok(MetricsReport {
        accuracy,
        ei,
        lli,
        ir,
        n: ds.len(),
        family: ds.family.to_string(),
        binning: Binning::new(dims, regression, lli_mode),
        position_error,
        per_env,
    })
}

/// Representation matrices for external plotting: `(z_L, z_H)`.
pub fn export_representations(model: &AciaModel, ds: &EnvironmentDataset) -> Result<(Array2<f64>, Array2<f64>)> {
    let rep = metrics::forward_rows(model, &ds.features, ds.feature_dim)?;
    Ok((rep.z_l, rep.z_h))
}

/// Build an objective batch from explicit rows (all environments of `ds`).
pub fn batch_from_rows(ds: &EnvironmentDataset, rows: &[usize], x_int: Option<&[f32]>) -> Result<Batch> {
    let envs = present_envs(ds);
    let groupings = label_groupings(ds, None)?;
    Ok(Batch {
        x: to_matrix(
            &rows.iter().flat_map(|&i| ds.features_of(i).iter().copied()).collect::<Vec<_>>(),
            ds.feature_dim,
        ),
        targets: targets_for(ds, rows)?,
        envs: rows.iter().map(|&i| envs.iter().position(|&e| e == ds.env_of(i)).expect("present")).collect(),
        env_ids: envs,
        label_keys: groupings.iter().map(|g| rows.iter().map(|&i| g[i]).collect()).collect(),
        x_int: x_int.map(|xi| gather(xi, ds.feature_dim, rows)),
    })
}
