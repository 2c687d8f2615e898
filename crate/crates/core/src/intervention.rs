//! Hard and soft interventions on kernels and on raw samples.
//!
//! On a finite space the interventional kernel is a finite sum,
//! `K^do(w, A) = sum_{w'} K(w, {w'}) Q(A | w')`. Targeting `X` replaces (or
//! transforms) each observable row; targeting `Y` replaces the label
//! distribution the rows are averaged under.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::causal_space::{per_environment_kernel, total_variation, CausalKernel, FiniteScm, Omega};
use crate::dataset::{EnvironmentDataset, Family, Generator, SampleView};
use crate::{rng, tol, Error, Result};

const INTERVENE_STREAM: u64 = 0x1d70_0000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Target {
    Y,
    X,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InterventionKind {
    Hard,
    Soft,
}

/// An intervention on a kernel.
///
/// Hard interventions carry `hard_dist`. Soft ones either blend towards
/// `hard_dist` with strength `alpha`, or (target `X` only) apply a transition
/// table `conditional[x'][x] = Q({x} | x')`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Intervention {
    pub target: Target,
    pub kind: InterventionKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hard_dist: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub conditional: Option<Vec<Vec<f64>>>,
}

fn check_dist(name: &str, d: &[f64]) -> Result<()> {
    if d.iter().any(|p| !p.is_finite() || *p < 0.0 || *p > 1.0) {
        return Err(Error::Normalization(format!("{name} has entries outside [0, 1]")));
    }
    let total: f64 = d.iter().sum();
    if (total - 1.0).abs() > tol::NORMALIZATION {
        return Err(Error::Normalization(format!("{name} sums to {total}")));
    }
    Ok(())
}

impl Intervention {
    pub fn hard(target: Target, dist: Vec<f64>) -> Self {
        Intervention { target, kind: InterventionKind::Hard, hard_dist: Some(dist), alpha: None, conditional: None }
    }

    /// Hard intervention setting the target to outcome `index` of a support of size `n`.
    pub fn point(target: Target, index: usize, n: usize) -> Self {
        let mut dist = vec![0.0; n];
        dist[index] = 1.0;
        Self::hard(target, dist)
    }

    pub fn soft(target: Target, dist: Vec<f64>, alpha: f64) -> Self {
        Intervention {
            target,
            kind: InterventionKind::Soft,
            hard_dist: Some(dist),
            alpha: Some(alpha),
            conditional: None,
        }
    }

    /// General soft intervention on `X` through a transition table.
    pub fn transition(table: Vec<Vec<f64>>) -> Self {
        Intervention {
            target: Target::X,
            kind: InterventionKind::Soft,
            hard_dist: None,
            alpha: None,
            conditional: Some(table),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(a) = self.alpha {
            if !(0.0..=1.0).contains(&a) {
                return Err(Error::AlphaOutOfRange(a));
            }
        }
        match (self.kind, &self.hard_dist, self.alpha, &self.conditional) {
            (InterventionKind::Hard, Some(d), None, None) => check_dist("hard_dist", d),
            (InterventionKind::Soft, Some(d), Some(_), None) => check_dist("hard_dist", d),
            (InterventionKind::Soft, None, None, Some(t)) if self.target == Target::X => {
                t.iter().enumerate().try_for_each(|(i, row)| check_dist(&format!("conditional[{i}]"), row))
            }
            _ => Err(Error::Config(
                "an intervention needs hard_dist (hard), hard_dist with alpha (soft), or a conditional table on X".into(),
            )),
        }
    }

    /// Strength of the blend towards `hard_dist` (1 for hard interventions).
    fn strength(&self) -> f64 {
        match self.kind {
            InterventionKind::Hard => 1.0,
            InterventionKind::Soft => self.alpha.unwrap_or(1.0),
        }
    }
}

/// Apply `q` to `base`.
pub fn interventional_kernel(base: &CausalKernel, q: &Intervention) -> Result<CausalKernel> {
    q.validate()?;
    let done = match (q.target, &q.conditional) {
        (Target::X, Some(table)) => {
            if table.len() != base.n_obs() || table.iter().any(|r| r.len() != base.n_obs()) {
                return Err(Error::SupportMismatch("transition table does not match the observable support".into()));
            }
            return base.map_rows(|_, row| {
                Ok((0..row.len()).map(|x| row.iter().zip(table).map(|(k, t)| k * t[x]).sum()).collect())
            });
        }
        (Target::X, None) => {
            let dist = q.hard_dist.as_ref().expect("validated");
            if dist.len() != base.n_obs() {
                return Err(Error::SupportMismatch(format!(
                    "intervention has {} outcomes, observable support has {}",
                    dist.len(),
                    base.n_obs()
                )));
            }
            base.map_rows(|_, _| Ok(dist.clone()))?
        }
        (Target::Y, _) => {
            let dist = q.hard_dist.as_ref().expect("validated");
            if dist.len() != base.n_labels() {
                return Err(Error::SupportMismatch(format!(
                    "intervention has {} outcomes, label support has {}",
                    dist.len(),
                    base.n_labels()
                )));
            }
            let replaced = base.map_rows(|omega, _| {
                let mut acc = vec![0.0; base.n_obs()];
                for (y, &w) in dist.iter().enumerate() {
                    if w == 0.0 {
                        continue;
                    }
                    let row = base.row(Omega { y, e: omega.e })?;
                    acc.iter_mut().zip(row).for_each(|(a, r)| *a += w * r);
                }
                Ok(acc)
            })?;
            replaced.with_label_marginal(dist.clone())?
        }
    };
    soft_blend(base, &done, q.strength())
}

/// `(1 - alpha) K + alpha K^do`, entry-wise. The endpoints return their inputs unchanged.
pub fn soft_blend(base: &CausalKernel, hard_done: &CausalKernel, alpha: f64) -> Result<CausalKernel> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::AlphaOutOfRange(alpha));
    }
    if !base.same_shape(hard_done) {
        return Err(Error::SupportMismatch("blended kernels have different supports".into()));
    }
    if alpha == 0.0 {
        return Ok(base.clone());
    }
    if alpha == 1.0 {
        return Ok(hard_done.clone());
    }
    let mu: Vec<f64> = base
        .label_marginal()
        .iter()
        .zip(hard_done.label_marginal())
        .map(|(a, b)| (1.0 - alpha) * a + alpha * b)
        .collect();
    base.map_rows(|omega, row| {
        let other = hard_done.row(omega)?;
        Ok(row.iter().zip(other).map(|(a, b)| (1.0 - alpha) * a + alpha * b).collect())
    })?
    .with_label_marginal(mu)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvarianceReport {
    /// `max_B |P_do(X)(Y in B | E in S) - P(Y in B | E in S)|`.
    pub y_shift_under_do_x: f64,
    /// `max_{y, e, A} |P(X in A | do(Y = y), E = e) - P(X in A | E = e)|`.
    pub x_shift_under_do_y: f64,
    /// `y_shift <= 1e-12` and `x_shift > 1e-9`.
    pub verdict: bool,
}

/// Intervene on each side of `Y -> X` and measure how the other side moves.
///
/// `do(X)` replaces `P(X | Y, E)` by the uniform distribution and the label
/// marginal is recomputed by summing the post-intervention joint. `do(Y = y)`
/// is applied to the per-environment kernel for every `y`.
pub fn verify_invariance_criteria(scm: &FiniteScm, s: &[usize]) -> Result<InvarianceReport> {
    let base = per_environment_kernel(scm, s)?;
    let set = base.conditioning().to_vec();
    let (ny, nx) = (scm.n_labels(), scm.n_obs());

    let label_given_s = |p_obs: &dyn Fn(usize, usize, usize) -> f64| -> Vec<f64> {
        let mut m = vec![0.0; ny];
        for (y, slot) in m.iter_mut().enumerate() {
            for &e in &set {
                for x in 0..nx {
                    *slot += scm.p_label()[y] * scm.p_env()[e] * p_obs(y, e, x);
                }
            }
        }
        let total: f64 = m.iter().sum();
        m.iter().map(|v| v / total).collect()
    };
    let observed = label_given_s(&|y, e, x| scm.p_obs(y, e)[x]);
    let uniform = 1.0 / nx as f64;
    let after_do_x = label_given_s(&|_, _, _| uniform);
    let y_shift = total_variation(&observed, &after_do_x);

    let mut x_shift = 0.0_f64;
    for y in 0..ny {
        let done = interventional_kernel(&base, &Intervention::point(Target::Y, y, ny))?;
        for &e in &set {
            let marginal: Vec<f64> = (0..nx)
                .map(|x| (0..ny).map(|yy| scm.p_label()[yy] * scm.p_obs(yy, e)[x]).sum())
                .collect();
            x_shift = x_shift.max(total_variation(done.row(Omega::new(y, e))?, &marginal));
        }
    }
    Ok(InvarianceReport {
        y_shift_under_do_x: y_shift,
        x_shift_under_do_y: x_shift,
        verdict: y_shift <= tol::EXACT && x_shift > tol::CAUSAL_DEPENDENCE,
    })
}

/// A data-level operator replacing a mechanism of one family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "kebab-case")]
pub enum DataOp {
    Identity,
    /// Toy SCM: redraw `X` from `P(X | Y = label, E = e)`, or from the
    /// sample's own label when `label` is absent.
    ResampleX {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        label: Option<i64>,
    },
    /// Colored digits: redraw the colour as red with probability `p_red`,
    /// independent of digit and environment.
    Recolor { p_red: f64 },
    /// Rotated digits: re-render at an angle drawn uniformly from `angles`.
    Rerotate { angles: Vec<f64> },
    /// Ball agent: move intervened balls by `shift` instead of the
    /// environment's own displacement.
    ShiftPositions { shift: [f64; 2] },
}

fn one() -> f64 {
    1.0
}

/// A [`DataOp`] applied to each sample with probability `alpha`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataIntervention {
    #[serde(flatten)]
    pub op: DataOp,
    #[serde(default = "one")]
    pub alpha: f64,
}

impl DataIntervention {
    pub fn new(op: DataOp) -> Self {
        DataIntervention { op, alpha: 1.0 }
    }

    pub fn identity() -> Self {
        Self::new(DataOp::Identity)
    }

    /// The operator used for a family when none is configured.
    pub fn default_for(family: Family) -> Self {
        Self::new(match family {
            Family::ToyScm => DataOp::ResampleX { label: None },
            Family::ColoredDigit => DataOp::Recolor { p_red: 0.5 },
            Family::RotatedDigit => DataOp::Rerotate { angles: vec![0.0, 15.0, 30.0, 45.0, 60.0, 75.0, 90.0] },
            Family::BallAgent => DataOp::ShiftPositions { shift: [0.1, 0.1] },
        })
    }

    pub fn family(&self) -> Option<Family> {
        match self.op {
            DataOp::Identity => None,
            DataOp::ResampleX { .. } => Some(Family::ToyScm),
            DataOp::Recolor { .. } => Some(Family::ColoredDigit),
            DataOp::Rerotate { .. } => Some(Family::RotatedDigit),
            DataOp::ShiftPositions { .. } => Some(Family::BallAgent),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::AlphaOutOfRange(self.alpha));
        }
        match &self.op {
            DataOp::Recolor { p_red } if !(0.0..=1.0).contains(p_red) => {
                Err(Error::Config(format!("p_red: {p_red} is outside [0, 1]")))
            }
            DataOp::Rerotate { angles } if angles.is_empty() || angles.iter().any(|a| !(0.0..=90.0).contains(a)) => {
                Err(Error::Config("angles: need at least one angle, each in [0, 90]".into()))
            }
            DataOp::ShiftPositions { shift } if !shift.iter().all(|s| s.is_finite()) => {
                Err(Error::Config("shift: must be finite".into()))
            }
            _ => Ok(()),
        }
    }

    /// Whether this spec leaves every sample untouched.
    pub fn is_identity(&self) -> bool {
        self.alpha == 0.0 || self.op == DataOp::Identity
    }
}

/// Counterpart of one sample with the intervened mechanism swapped in.
pub fn intervene_sample<R: Rng + ?Sized>(
    generator: &Generator,
    sample: SampleView<'_>,
    spec: &DataIntervention,
    rng: &mut R,
) -> Result<Vec<f32>> {
    spec.validate()?;
    if let Some(f) = spec.family() {
        if f != generator.family() {
            return Err(Error::FamilyMismatch(format!("{f} operator applied to a {} sample", generator.family())));
        }
    }
    if spec.is_identity() || !rng.gen_bool(spec.alpha) {
        return Ok(sample.features.to_vec());
    }
    match &spec.op {
        DataOp::Identity => Ok(sample.features.to_vec()),
        DataOp::ResampleX { label } => {
            let scm = generator.scm().expect("toy family has an SCM");
            let y = scm.label_index(label.unwrap_or(sample.label[0] as i64))?;
            let e = scm.env_index(sample.env)?;
            Ok(vec![generator.sample_toy_x(y, e, rng)? as f32])
        }
        DataOp::Recolor { p_red } => {
            let green = !rng.gen_bool(*p_red);
            let was_green = sample.mechanism[0] != 0.0;
            let mut x = sample.features.to_vec();
            if green != was_green {
                let d = x.len() / 2;
                let (red, grn) = x.split_at_mut(d);
                red.swap_with_slice(grn);
            }
            Ok(x)
        }
        DataOp::Rerotate { angles } => {
            let theta = angles[rng.gen_range(0..angles.len())];
            Ok(generator.render_rotated(sample.label[0] as usize, theta, rng))
        }
        DataOp::ShiftPositions { shift } => {
            let cfg = generator.config();
            let n = cfg.n_balls;
            let mask: Vec<bool> = sample.mechanism[..n].iter().map(|&m| m != 0.0).collect();
            let obs = &sample.mechanism[n..3 * n];
            let pos = Generator::ball_positions(obs, &mask, *shift, cfg.alpha);
            let background = cfg.envs[generator.env_position(sample.env)?].background;
            Ok(generator.render_balls(&pos, background, rng))
        }
    }
}

/// Intervened features of every sample of `ds`, row-major. Sample `i` uses a
/// generator derived from `(seed, i)`.
pub fn intervene_dataset(
    generator: &Generator,
    ds: &EnvironmentDataset,
    spec: &DataIntervention,
    seed: u64,
) -> Result<Vec<f32>> {
    let mut out = Vec::with_capacity(ds.features.len());
    for i in 0..ds.len() {
        let mut r = rng::rng_for(seed, INTERVENE_STREAM, i as u64);
        out.extend(intervene_sample(generator, ds.sample(i), spec, &mut r)?);
    }
    Ok(out)
}
