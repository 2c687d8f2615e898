//! Seeded synthetic dataset generators with environment-specific mechanisms.
//!
//! Every family keeps the anti-causal shape `Y -> X <- E`: the label is drawn
//! first, the environment picks a nuisance mechanism (colour, rotation angle,
//! intervention shift), and the features are rendered from both.
//!
//! Each sample draws from its own generator seeded by
//! `(seed, environment id, sample index)`, so generation order never affects
//! the bytes produced.

use serde::{Deserialize, Serialize};

use crate::causal_space::FiniteScm;
use crate::{rng, Error, Result};

mod config;
mod generators;
mod io;
mod prototypes;

pub use config::{make_imperfect, EnvBlock, GenConfig, MaskDist, Mechanism};
pub use generators::{gen_ball_agent, gen_colored_digits, gen_rotated_digits, gen_toy_scm, generate, Generator};
pub use prototypes::{grid_prototypes, rotate_grid, vector_prototypes};

const SPLIT_STREAM: u64 = 0x5911_7000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    ToyScm,
    ColoredDigit,
    RotatedDigit,
    BallAgent,
}

impl Family {
    pub fn name(self) -> &'static str {
        match self {
            Family::ToyScm => "toy-scm",
            Family::ColoredDigit => "colored-digit",
            Family::RotatedDigit => "rotated-digit",
            Family::BallAgent => "ball-agent",
        }
    }

    pub fn is_regression(self) -> bool {
        self == Family::BallAgent
    }

    pub fn is_grid(self) -> bool {
        matches!(self, Family::RotatedDigit | Family::BallAgent)
    }
}

impl std::fmt::Display for Family {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Borrowed view of one sample.
#[derive(Debug, Clone, Copy)]
pub struct SampleView<'a> {
    pub index: usize,
    pub features: &'a [f32],
    pub label: &'a [f64],
    pub env: i64,
    /// Family-specific record of the mechanism that produced the sample:
    /// colour, rotation angle, ball mask and pre-intervention positions, or
    /// the observable value.
    pub mechanism: &'a [f64],
}

/// Samples from several environments, stored column-wise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvironmentDataset {
    pub family: Family,
    pub gen_config: GenConfig,
    pub seed: u64,
    pub feature_dim: usize,
    pub label_dim: usize,
    pub mech_dim: usize,
    pub features: Vec<f32>,
    pub labels: Vec<f64>,
    pub envs: Vec<i64>,
    pub mechanisms: Vec<f64>,
}

impl EnvironmentDataset {
    pub fn len(&self) -> usize {
        self.envs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.envs.is_empty()
    }

    pub fn features_of(&self, i: usize) -> &[f32] {
        &self.features[i * self.feature_dim..(i + 1) * self.feature_dim]
    }

    pub fn label_of(&self, i: usize) -> &[f64] {
        &self.labels[i * self.label_dim..(i + 1) * self.label_dim]
    }

    pub fn mechanism_of(&self, i: usize) -> &[f64] {
        &self.mechanisms[i * self.mech_dim..(i + 1) * self.mech_dim]
    }

    pub fn env_of(&self, i: usize) -> i64 {
        self.envs[i]
    }

    pub fn sample(&self, i: usize) -> SampleView<'_> {
        SampleView {
            index: i,
            features: self.features_of(i),
            label: self.label_of(i),
            env: self.envs[i],
            mechanism: self.mechanism_of(i),
        }
    }

    /// Environment ids in configuration order.
    pub fn env_ids(&self) -> Vec<i64> {
        self.gen_config.envs.iter().map(|b| b.id).collect()
    }

    /// Position of an environment id in configuration order.
    pub fn env_position(&self, id: i64) -> Option<usize> {
        self.gen_config.envs.iter().position(|b| b.id == id)
    }

    /// Number of prediction targets: classes for classification, coordinates for regression.
    pub fn output_dim(&self) -> usize {
        self.gen_config.output_dim()
    }

    /// Class index of sample `i`. Regression datasets have no classes.
    pub fn class_of(&self, i: usize) -> Result<usize> {
        let v = self.label_of(i)[0];
        match self.family {
            Family::BallAgent => Err(Error::FamilyMismatch("ball-agent labels are continuous".into())),
            Family::ToyScm => self.gen_config.scm_or_toy().label_index(v as i64),
            _ => Ok(v as usize),
        }
    }

    pub fn indices_for_env(&self, id: i64) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.envs[i] == id).collect()
    }

    pub fn env_counts(&self) -> Vec<(i64, usize)> {
        self.env_ids().into_iter().map(|id| (id, self.envs.iter().filter(|&&e| e == id).count())).collect()
    }

    /// New dataset holding the given samples, in the given order.
    pub fn subset(&self, indices: &[usize]) -> EnvironmentDataset {
        let mut out = EnvironmentDataset {
            features: Vec::with_capacity(indices.len() * self.feature_dim),
            labels: Vec::with_capacity(indices.len() * self.label_dim),
            envs: Vec::with_capacity(indices.len()),
            mechanisms: Vec::with_capacity(indices.len() * self.mech_dim),
            ..self.clone_header()
        };
        for &i in indices {
            out.features.extend_from_slice(self.features_of(i));
            out.labels.extend_from_slice(self.label_of(i));
            out.envs.push(self.envs[i]);
            out.mechanisms.extend_from_slice(self.mechanism_of(i));
        }
        out
    }

    fn clone_header(&self) -> EnvironmentDataset {
        EnvironmentDataset {
            family: self.family,
            gen_config: self.gen_config.clone(),
            seed: self.seed,
            feature_dim: self.feature_dim,
            label_dim: self.label_dim,
            mech_dim: self.mech_dim,
            features: Vec::new(),
            labels: Vec::new(),
            envs: Vec::new(),
            mechanisms: Vec::new(),
        }
    }

    /// Concatenate datasets generated from the same family and supports.
    /// Environment blocks are merged in order of first appearance.
    pub fn concat(parts: &[EnvironmentDataset]) -> Result<EnvironmentDataset> {
        let first = parts.first().ok_or(Error::EmptyDataset)?;
        let mut out = first.clone();
        for p in &parts[1..] {
            if p.family != first.family || p.feature_dim != first.feature_dim || p.label_dim != first.label_dim {
                return Err(Error::FamilyMismatch(format!("cannot merge {} with {}", first.family, p.family)));
            }
            for b in &p.gen_config.envs {
                if out.gen_config.envs.iter().any(|o| o.id == b.id) {
                    if p.envs.contains(&b.id) && out.envs.contains(&b.id) {
                        return Err(Error::DuplicateEnvironmentId(b.id));
                    }
                } else {
                    out.gen_config.envs.push(b.clone());
                }
            }
            out.features.extend_from_slice(&p.features);
            out.labels.extend_from_slice(&p.labels);
            out.envs.extend_from_slice(&p.envs);
            out.mechanisms.extend_from_slice(&p.mechanisms);
        }
        Ok(out)
    }

    /// Deterministic 90/10 split by hashed sample index: `(train, held_out)`.
    pub fn holdout_split(&self) -> (Vec<usize>, Vec<usize>) {
        (0..self.len()).partition(|&i| !rng::derive_seed(self.seed, SPLIT_STREAM, i as u64).is_multiple_of(10))
    }

    /// Structural invariants: column lengths agree and every environment id is configured.
    pub fn validate(&self) -> Result<()> {
        let n = self.envs.len();
        if self.features.len() != n * self.feature_dim
            || self.labels.len() != n * self.label_dim
            || self.mechanisms.len() != n * self.mech_dim
        {
            return Err(Error::Format("dataset columns have inconsistent lengths".into()));
        }
        if let Some(e) = self.envs.iter().find(|e| self.env_position(**e).is_none()) {
            return Err(Error::Format(format!("environment {e} is not in the generator config")));
        }
        Ok(())
    }

    /// The SCM behind a toy dataset.
    pub fn scm(&self) -> Result<FiniteScm> {
        if self.family != Family::ToyScm {
            return Err(Error::FamilyMismatch(format!("{} datasets have no finite SCM", self.family)));
        }
        Ok(self.gen_config.scm_or_toy())
    }
}
