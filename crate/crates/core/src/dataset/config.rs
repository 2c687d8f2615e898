use serde::{Deserialize, Serialize};

use super::Family;
use crate::causal_space::FiniteScm;
use crate::{Error, Result};

fn half() -> f64 {
    0.5
}

fn three_quarters() -> f64 {
    0.75
}

fn default_noise() -> f64 {
    0.1
}

fn default_classes() -> usize {
    10
}

fn default_proto_dim() -> usize {
    64
}

fn default_grid() -> usize {
    16
}

fn default_balls() -> usize {
    4
}

fn default_blob() -> f64 {
    1.0
}

/// How many balls of a sample are intervened on.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum MaskDist {
    /// Count uniform on `0..=n_balls`, then a uniform subset of that size.
    /// Each ball is intervened with probability one half.
    #[default]
    UniformCount,
    /// Each ball independently with probability `p`.
    Bernoulli { p: f64 },
}

/// Per-environment generator parameters. Fields irrelevant to a family are ignored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvBlock {
    pub id: i64,
    /// Colored digits: `P(red | even digit)`; odd digits use the flip.
    #[serde(default = "half")]
    pub p_red_even: f64,
    /// Rotated digits: base angle in degrees; the alternative angle is 45 degrees larger.
    #[serde(default)]
    pub theta_base: f64,
    /// Rotated digits: probability that an even digit gets the base angle
    /// (and an odd digit the alternative).
    #[serde(default = "three_quarters")]
    pub p_coupling: f64,
    /// Ball agent: displacement applied to intervened balls.
    #[serde(default)]
    pub shift: [f64; 2],
    /// Ball agent: constant added to every rendered pixel.
    #[serde(default)]
    pub background: f64,
    #[serde(default)]
    pub mask: MaskDist,
}

impl EnvBlock {
    pub fn new(id: i64) -> Self {
        EnvBlock {
            id,
            p_red_even: half(),
            theta_base: 0.0,
            p_coupling: three_quarters(),
            shift: [0.0, 0.0],
            background: 0.0,
            mask: MaskDist::default(),
        }
    }
}

/// Effective per-environment mechanism after applying the blend strength.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Mechanism {
    Toy,
    Color { p_red_even: f64, p_red_odd: f64 },
    Rotation { theta_base: f64, theta_alt: f64, p_coupling: f64, alpha: f64 },
    Ball { shift: [f64; 2], background: f64, mask: MaskDist, alpha: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenConfig {
    pub family: Family,
    #[serde(default)]
    pub n_per_env: usize,
    /// Toy family only: total number of joint draws, overriding
    /// `n_per_env * envs.len()`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_total: Option<usize>,
    pub envs: Vec<EnvBlock>,
    /// Blend between the observational mechanism (0) and the deterministic
    /// one (1).
    #[serde(default)]
    pub alpha: f64,
    #[serde(default = "default_noise")]
    pub noise_sigma: f64,
    #[serde(default)]
    pub prototype_seed: u64,
    #[serde(default = "default_classes")]
    pub n_classes: usize,
    #[serde(default = "default_proto_dim")]
    pub prototype_dim: usize,
    #[serde(default = "default_grid")]
    pub grid: usize,
    #[serde(default = "default_balls")]
    pub n_balls: usize,
    /// Ball agent: blob width in grid cells.
    #[serde(default = "default_blob")]
    pub blob_sigma: f64,
    /// Toy family: the SCM to sample. Defaults to [`FiniteScm::toy`].
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scm: Option<FiniteScm>,
}

fn in_unit(path: &str, v: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&v) {
        return Err(Error::Config(format!("{path}: {v} is outside [0, 1]")));
    }
    Ok(())
}

/// Deterministic counterpart of an observational colour probability.
fn perfect_color(p: f64) -> f64 {
    if p > 0.5 {
        1.0
    } else if p < 0.5 {
        0.0
    } else {
        p
    }
}

impl GenConfig {
    fn base(family: Family, n_per_env: usize, envs: Vec<EnvBlock>) -> Self {
        GenConfig {
            family,
            n_per_env,
            n_total: None,
            envs,
            alpha: 0.0,
            noise_sigma: default_noise(),
            prototype_seed: 0,
            n_classes: default_classes(),
            prototype_dim: default_proto_dim(),
            grid: default_grid(),
            n_balls: default_balls(),
            blob_sigma: default_blob(),
            scm: None,
        }
    }

    /// Two environments sampled from the built-in toy SCM.
    pub fn toy(n_per_env: usize) -> Self {
        Self::base(Family::ToyScm, n_per_env, vec![EnvBlock::new(0), EnvBlock::new(1)])
    }

    /// Training environments `e1` (even digits red 75% of the time) and `e2` (flipped).
    pub fn colored(n_per_env: usize) -> Self {
        let env = |id, p| EnvBlock { p_red_even: p, ..EnvBlock::new(id) };
        Self::base(Family::ColoredDigit, n_per_env, vec![env(1, 0.75), env(2, 0.25)])
    }

    /// A single environment with colour probability `p_red_even`.
    pub fn colored_env(n: usize, id: i64, p_red_even: f64) -> Self {
        Self::base(Family::ColoredDigit, n, vec![EnvBlock { p_red_even, ..EnvBlock::new(id) }])
    }

    /// Training environments at base angles 15 and 45 degrees with the 75/25 coupling.
    pub fn rotated(n_per_env: usize) -> Self {
        let env = |id, t| EnvBlock { theta_base: t, ..EnvBlock::new(id) };
        Self::base(Family::RotatedDigit, n_per_env, vec![env(1, 15.0), env(2, 45.0)])
    }

    /// Two environments with different shift directions and backgrounds; fully
    /// shifted interventions.
    pub fn ball(n_per_env: usize) -> Self {
        let env = |id, shift, background| EnvBlock { shift, background, ..EnvBlock::new(id) };
        let mut cfg =
            Self::base(Family::BallAgent, n_per_env, vec![env(1, [0.2, 0.0], 0.0), env(2, [0.0, 0.2], 0.1)]);
        cfg.alpha = 1.0;
        cfg.noise_sigma = 0.02;
        cfg
    }

    pub fn scm_or_toy(&self) -> FiniteScm {
        self.scm.clone().unwrap_or_else(FiniteScm::toy)
    }

    pub fn feature_dim(&self) -> usize {
        match self.family {
            Family::ToyScm => 1,
            Family::ColoredDigit => 2 * self.prototype_dim,
            Family::RotatedDigit => self.grid * self.grid,
            Family::BallAgent => self.n_balls * self.grid * self.grid,
        }
    }

    pub fn label_dim(&self) -> usize {
        match self.family {
            Family::BallAgent => 2 * self.n_balls,
            _ => 1,
        }
    }

    pub fn mech_dim(&self) -> usize {
        match self.family {
            Family::BallAgent => 3 * self.n_balls,
            _ => 1,
        }
    }

    pub fn output_dim(&self) -> usize {
        match self.family {
            Family::ToyScm => self.scm_or_toy().n_labels(),
            Family::ColoredDigit | Family::RotatedDigit => self.n_classes,
            Family::BallAgent => 2 * self.n_balls,
        }
    }

    /// Effective mechanism of the environment at position `pos`.
    pub fn mechanism(&self, pos: usize) -> Mechanism {
        let b = &self.envs[pos];
        let a = self.alpha;
        match self.family {
            Family::ToyScm => Mechanism::Toy,
            Family::ColoredDigit => {
                let p = (1.0 - a) * b.p_red_even + a * perfect_color(b.p_red_even);
                Mechanism::Color { p_red_even: p, p_red_odd: 1.0 - p }
            }
            Family::RotatedDigit => Mechanism::Rotation {
                theta_base: b.theta_base,
                theta_alt: b.theta_base + 45.0,
                p_coupling: b.p_coupling,
                alpha: a,
            },
            Family::BallAgent => Mechanism::Ball { shift: b.shift, background: b.background, mask: b.mask, alpha: a },
        }
    }

    /// Check every field, reporting the offending path.
    pub fn validate(&self) -> Result<()> {
        if self.envs.is_empty() {
            return Err(Error::Config("envs: at least one environment is required".into()));
        }
        for (i, b) in self.envs.iter().enumerate() {
            if self.envs[..i].iter().any(|o| o.id == b.id) {
                return Err(Error::DuplicateEnvironmentId(b.id));
            }
        }
        in_unit("alpha", self.alpha)?;
        if !self.noise_sigma.is_finite() || self.noise_sigma < 0.0 {
            return Err(Error::Config(format!("noise_sigma: {} must be a finite non-negative number", self.noise_sigma)));
        }
        match self.family {
            Family::ToyScm => {
                let scm = self.scm_or_toy();
                let ids: Vec<i64> = self.envs.iter().map(|b| b.id).collect();
                if ids != scm.env_support() {
                    return Err(Error::Config("envs: ids must equal the SCM environment support".into()));
                }
            }
            Family::ColoredDigit => {
                if self.n_classes < 2 {
                    return Err(Error::Config("n_classes: at least two classes are required".into()));
                }
                if self.prototype_dim == 0 {
                    return Err(Error::Config("prototype_dim: must be positive".into()));
                }
                for (i, b) in self.envs.iter().enumerate() {
                    in_unit(&format!("envs[{i}].p_red_even"), b.p_red_even)?;
                }
            }
            Family::RotatedDigit => {
                if self.n_classes < 2 {
                    return Err(Error::Config("n_classes: at least two classes are required".into()));
                }
                if self.grid < 2 || !self.grid.is_multiple_of(2) {
                    return Err(Error::Config(format!("grid: {} must be even and at least 2", self.grid)));
                }
                for (i, b) in self.envs.iter().enumerate() {
                    if !(0.0..=45.0).contains(&b.theta_base) {
                        return Err(Error::Config(format!(
                            "envs[{i}].theta_base: {} keeps both angles in [0, 90] only within [0, 45]",
                            b.theta_base
                        )));
                    }
                    in_unit(&format!("envs[{i}].p_coupling"), b.p_coupling)?;
                }
            }
            Family::BallAgent => {
                if self.n_balls == 0 {
                    return Err(Error::Config("n_balls: at least one ball is required".into()));
                }
                if self.grid < 8 {
                    return Err(Error::Config(format!("grid: {} is below the minimum resolution 8", self.grid)));
                }
                if !(self.blob_sigma > 0.0) {
                    return Err(Error::Config("blob_sigma: must be positive".into()));
                }
                for (i, b) in self.envs.iter().enumerate() {
                    if !b.shift.iter().all(|s| s.is_finite()) || !b.background.is_finite() {
                        return Err(Error::Config(format!("envs[{i}]: shift and background must be finite")));
                    }
                    if let MaskDist::Bernoulli { p } = b.mask {
                        in_unit(&format!("envs[{i}].mask.p"), p)?;
                    }
                }
            }
        }
        Ok(())
    }

    /// Same generator with blend strength `alpha`.
    pub fn make_imperfect(&self, alpha: f64) -> Result<GenConfig> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::AlphaOutOfRange(alpha));
        }
        Ok(GenConfig { alpha, ..self.clone() })
    }
}

/// Free-function form of [`GenConfig::make_imperfect`].
pub fn make_imperfect(cfg: &GenConfig, alpha: f64) -> Result<GenConfig> {
    cfg.make_imperfect(alpha)
}
