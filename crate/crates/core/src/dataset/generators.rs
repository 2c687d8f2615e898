use rand::seq::index::sample as choose_subset;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal, WeightedIndex};

use super::{grid_prototypes, rotate_grid, vector_prototypes, EnvironmentDataset, Family, GenConfig, MaskDist, Mechanism};
use crate::causal_space::FiniteScm;
use crate::{rng, Error, Result};

const TOY_STREAM: u64 = 0x7059_0000;
const MIN_BALL_DISTANCE: f64 = 0.2;
const REJECTION_BUDGET: usize = 10_000;
const BALL_LO: f64 = 0.1;
const BALL_HI: f64 = 0.9;

/// Draw an index from a probability vector.
pub(crate) fn draw_index<R: Rng + ?Sized>(rng: &mut R, probs: &[f64]) -> usize {
    WeightedIndex::new(probs).expect("validated distribution").sample(rng)
}

/// Wrap a coordinate back into the ball range.
pub(crate) fn wrap_coord(v: f64) -> f64 {
    BALL_LO + (v - BALL_LO).rem_euclid(BALL_HI - BALL_LO)
}

/// A validated config plus everything derived from it (prototypes, SCM).
#[derive(Debug, Clone)]
pub struct Generator {
    cfg: GenConfig,
    prototypes: Vec<Vec<f64>>,
    scm: Option<FiniteScm>,
}

impl Generator {
    pub fn new(cfg: &GenConfig) -> Result<Self> {
        cfg.validate()?;
        let noise_norm = |d: usize| 3.0 * cfg.noise_sigma * (d as f64).sqrt();
        let prototypes = match cfg.family {
            Family::ColoredDigit => {
                vector_prototypes(cfg.n_classes, cfg.prototype_dim, cfg.prototype_seed, noise_norm(cfg.prototype_dim))
            }
            Family::RotatedDigit => {
                grid_prototypes(cfg.n_classes, cfg.grid, cfg.prototype_seed, noise_norm(cfg.grid * cfg.grid))
            }
            _ => Vec::new(),
        };
        let scm = (cfg.family == Family::ToyScm).then(|| cfg.scm_or_toy());
        Ok(Generator { cfg: cfg.clone(), prototypes, scm })
    }

    pub fn config(&self) -> &GenConfig {
        &self.cfg
    }

    pub fn family(&self) -> Family {
        self.cfg.family
    }

    pub fn prototype(&self, y: usize) -> &[f64] {
        &self.prototypes[y]
    }

    pub fn scm(&self) -> Option<&FiniteScm> {
        self.scm.as_ref()
    }

    /// Position of environment `id` in the config.
    pub fn env_position(&self, id: i64) -> Result<usize> {
        self.cfg
            .envs
            .iter()
            .position(|b| b.id == id)
            .ok_or_else(|| Error::UnknownOutcome(format!("environment {id}")))
    }

    fn noise<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let z: f64 = StandardNormal.sample(rng);
        self.cfg.noise_sigma * z
    }

    /// Prototype of `y` plus noise in the red (block 0) or green (block 1) channel block.
    pub fn render_colored<R: Rng + ?Sized>(&self, y: usize, green: bool, rng: &mut R) -> Vec<f32> {
        let d = self.cfg.prototype_dim;
        let mut x = vec![0.0f32; 2 * d];
        let off = if green { d } else { 0 };
        for (k, p) in self.prototypes[y].iter().enumerate() {
            x[off + k] = (p + self.noise(rng)) as f32;
        }
        x
    }

    /// Prototype of `y` rotated by `theta` degrees, plus noise.
    pub fn render_rotated<R: Rng + ?Sized>(&self, y: usize, theta: f64, rng: &mut R) -> Vec<f32> {
        rotate_grid(&self.prototypes[y], self.cfg.grid, theta)
            .into_iter()
            .map(|v| (v + self.noise(rng)) as f32)
            .collect()
    }

    /// One Gaussian blob per ball channel at `positions = [x0, y0, x1, y1, ...]`.
    pub fn render_balls<R: Rng + ?Sized>(&self, positions: &[f64], background: f64, rng: &mut R) -> Vec<f32> {
        let g = self.cfg.grid;
        let s2 = 2.0 * self.cfg.blob_sigma * self.cfg.blob_sigma;
        let mut out = Vec::with_capacity(self.cfg.n_balls * g * g);
        for b in 0..self.cfg.n_balls {
            let (cx, cy) = (positions[2 * b] * g as f64, positions[2 * b + 1] * g as f64);
            for i in 0..g {
                for j in 0..g {
                    let (dx, dy) = (j as f64 + 0.5 - cx, i as f64 + 0.5 - cy);
                    let v = (-(dx * dx + dy * dy) / s2).exp() + background + self.noise(rng);
                    out.push(v as f32);
                }
            }
        }
        out
    }

    /// Final ball positions: intervened balls move toward their shifted,
    /// wrapped position by `alpha`.
    pub fn ball_positions(obs: &[f64], mask: &[bool], shift: [f64; 2], alpha: f64) -> Vec<f64> {
        let mut out = obs.to_vec();
        for (b, &m) in mask.iter().enumerate() {
            if m {
                for k in 0..2 {
                    let moved = wrap_coord(obs[2 * b + k] + shift[k]);
                    out[2 * b + k] = (1.0 - alpha) * obs[2 * b + k] + alpha * moved;
                }
            }
        }
        out
    }

    pub fn min_pairwise_distance(positions: &[f64]) -> f64 {
        let n = positions.len() / 2;
        let mut best = f64::INFINITY;
        for a in 0..n {
            for b in a + 1..n {
                let (dx, dy) = (positions[2 * a] - positions[2 * b], positions[2 * a + 1] - positions[2 * b + 1]);
                best = best.min((dx * dx + dy * dy).sqrt());
            }
        }
        best
    }

    /// Draw the intervention mask for one sample.
    pub fn draw_mask<R: Rng + ?Sized>(&self, dist: MaskDist, rng: &mut R) -> Vec<bool> {
        let n = self.cfg.n_balls;
        let mut mask = vec![false; n];
        match dist {
            MaskDist::UniformCount => {
                let k = rng.gen_range(0..=n);
                for i in choose_subset(rng, n, k) {
                    mask[i] = true;
                }
            }
            MaskDist::Bernoulli { p } => mask.iter_mut().for_each(|m| *m = rng.gen_bool(p)),
        }
        mask
    }

    /// Features, label and mechanism record of sample `index` in environment `pos`.
    fn sample(&self, pos: usize, index: usize, seed: u64) -> Result<(Vec<f32>, Vec<f64>, Vec<f64>)> {
        let id = self.cfg.envs[pos].id;
        let mut r = rng::rng_for(seed, id as u64, index as u64);
        match self.cfg.mechanism(pos) {
            Mechanism::Toy => unreachable!("toy samples are drawn jointly"),
            Mechanism::Color { p_red_even, p_red_odd } => {
                let y = r.gen_range(0..self.cfg.n_classes);
                let p_red = if y % 2 == 0 { p_red_even } else { p_red_odd };
                let green = !r.gen_bool(p_red);
                let x = self.render_colored(y, green, &mut r);
                Ok((x, vec![y as f64], vec![green as u8 as f64]))
            }
            Mechanism::Rotation { theta_base, theta_alt, p_coupling, alpha } => {
                let y = r.gen_range(0..self.cfg.n_classes);
                let even = y % 2 == 0;
                let coupled = r.gen_bool(p_coupling);
                let observed = if even == coupled { theta_base } else { theta_alt };
                let perfect = if even { theta_base } else { theta_alt };
                let theta = (1.0 - alpha) * observed + alpha * perfect;
                let x = self.render_rotated(y, theta, &mut r);
                Ok((x, vec![y as f64], vec![theta]))
            }
            Mechanism::Ball { shift, background, mask, alpha } => {
                let m = self.draw_mask(mask, &mut r);
                let n = self.cfg.n_balls;
                for _ in 0..REJECTION_BUDGET {
                    let obs: Vec<f64> = (0..2 * n).map(|_| r.gen_range(BALL_LO..BALL_HI)).collect();
                    let pos = Self::ball_positions(&obs, &m, shift, alpha);
                    if Self::min_pairwise_distance(&pos) >= MIN_BALL_DISTANCE {
                        let x = self.render_balls(&pos, background, &mut r);
                        let mech = m.iter().map(|&b| b as u8 as f64).chain(obs).collect();
                        return Ok((x, pos, mech));
                    }
                }
                Err(Error::RejectionBudgetExceeded(REJECTION_BUDGET))
            }
        }
    }

    /// `P(X | y, e)` draw for the toy family, returning the observable value.
    pub fn sample_toy_x<R: Rng + ?Sized>(&self, y: usize, e: usize, rng: &mut R) -> Result<i64> {
        let scm = self.scm.as_ref().ok_or_else(|| Error::FamilyMismatch(format!("{} has no SCM", self.family())))?;
        Ok(scm.obs_support()[draw_index(rng, scm.p_obs(y, e))])
    }

    pub fn generate(&self, seed: u64) -> Result<EnvironmentDataset> {
        let cfg = &self.cfg;
        let mut ds = EnvironmentDataset {
            family: cfg.family,
            gen_config: cfg.clone(),
            seed,
            feature_dim: cfg.feature_dim(),
            label_dim: cfg.label_dim(),
            mech_dim: cfg.mech_dim(),
            features: Vec::new(),
            labels: Vec::new(),
            envs: Vec::new(),
            mechanisms: Vec::new(),
        };
        if let Some(scm) = &self.scm {
            for i in 0..cfg.n_total.unwrap_or(cfg.n_per_env * cfg.envs.len()) {
                let mut r = rng::rng_for(seed, TOY_STREAM, i as u64);
                let y = draw_index(&mut r, scm.p_label());
                let e = draw_index(&mut r, scm.p_env());
                let x = self.sample_toy_x(y, e, &mut r)?;
                ds.features.push(x as f32);
                ds.labels.push(scm.label_support()[y] as f64);
                ds.envs.push(scm.env_support()[e]);
                ds.mechanisms.push(x as f64);
            }
            return Ok(ds);
        }
        for pos in 0..cfg.envs.len() {
            for i in 0..cfg.n_per_env {
                let (x, y, m) = self.sample(pos, i, seed)?;
                ds.features.extend(x);
                ds.labels.extend(y);
                ds.envs.push(cfg.envs[pos].id);
                ds.mechanisms.extend(m);
            }
        }
        Ok(ds)
    }
}

/// Generate a dataset for any family.
pub fn generate(cfg: &GenConfig, seed: u64) -> Result<EnvironmentDataset> {
    Generator::new(cfg)?.generate(seed)
}

fn expect_family(cfg: &GenConfig, family: Family) -> Result<()> {
    if cfg.family != family {
        return Err(Error::ConfigMismatch(format!("expected a {family} config, got {}", cfg.family)));
    }
    Ok(())
}

/// `n` joint draws of `(Y, E, X)` from the built-in toy SCM. The environment is
/// drawn from `P(E)`, so pooled frequencies estimate the pooled kernel.
pub fn gen_toy_scm(n: usize, seed: u64) -> EnvironmentDataset {
    let cfg = GenConfig { n_total: Some(n), ..GenConfig::toy(0) };
    generate(&cfg, seed).expect("toy config is valid")
}

pub fn gen_colored_digits(cfg: &GenConfig, seed: u64) -> Result<EnvironmentDataset> {
    expect_family(cfg, Family::ColoredDigit)?;
    generate(cfg, seed)
}

pub fn gen_rotated_digits(cfg: &GenConfig, seed: u64) -> Result<EnvironmentDataset> {
    expect_family(cfg, Family::RotatedDigit)?;
    generate(cfg, seed)
}

pub fn gen_ball_agent(cfg: &GenConfig, seed: u64) -> Result<EnvironmentDataset> {
    expect_family(cfg, Family::BallAgent)?;
    generate(cfg, seed)
}
