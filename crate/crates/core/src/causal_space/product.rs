//! Product of single-environment causal spaces.
//!
//! Component `i` contributes the outcome space `Y_i x X_i` with measure
//! `P_i(y, x) = p_label(y) P(x | y, e_i)`. The joint measure is the product. For a
//! set `S` of components the kernel conditions on `Y_i = y_i` for `i in S`; the
//! remaining components keep their observable marginals.

use super::{all_events, build_finite_scm, Event, FiniteScm, ScmSpec};
use crate::{Error, Result};

const MAX_JOINT: usize = 1 << 22;
const MAX_COMPONENTS: usize = 8;

/// Kernel of a product space for one conditioning set of components.
#[derive(Debug, Clone, PartialEq)]
pub struct ProductKernel {
    conditioning: Vec<usize>,
    /// `factors[i][y]` is the distribution of `X_i` given `Y_i = y` (or the
    /// marginal of `X_i` for every `y` when `i` is not conditioned on).
    factors: Vec<Vec<Vec<f64>>>,
}

impl ProductKernel {
    pub fn conditioning(&self) -> &[usize] {
        &self.conditioning
    }

    fn check_labels(&self, labels: &[usize]) -> Result<()> {
        if labels.len() != self.factors.len() {
            return Err(Error::Shape(format!("{} labels for {} components", labels.len(), self.factors.len())));
        }
        for (i, &y) in labels.iter().enumerate() {
            if y >= self.factors[i].len() {
                return Err(Error::UnknownOutcome(format!("label index {y} in component {i}")));
            }
        }
        Ok(())
    }

    /// `K(w, A_1 x ... x A_k) = prod_i K_i(w_i, A_i)`.
    pub fn eval_rectangle(&self, labels: &[usize], rect: &[Event]) -> Result<f64> {
        self.check_labels(labels)?;
        if rect.len() != self.factors.len() {
            return Err(Error::Shape(format!("{} factors for {} components", rect.len(), self.factors.len())));
        }
        let mut p = 1.0;
        for (i, a) in rect.iter().enumerate() {
            let row = &self.factors[i][labels[i]];
            a.check_within(row.len())?;
            p *= a.measure(row);
        }
        Ok(p)
    }

    /// Kernel value of an arbitrary product event given as a list of
    /// observable tuples.
    pub fn eval_tuples(&self, labels: &[usize], tuples: &[Vec<usize>]) -> Result<f64> {
        self.check_labels(labels)?;
        let mut total = 0.0;
        for t in tuples {
            if t.len() != self.factors.len() {
                return Err(Error::Shape("tuple length differs from component count".into()));
            }
            let mut p = 1.0;
            for (i, &x) in t.iter().enumerate() {
                let row = &self.factors[i][labels[i]];
                p *= *row.get(x).ok_or_else(|| Error::UnknownOutcome(format!("observable {x} in component {i}")))?;
            }
            total += p;
        }
        Ok(total)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProductCausalSpace {
    components: Vec<FiniteScm>,
    weights: Vec<f64>,
    radices: Vec<usize>,
    joint: Vec<f64>,
    kernels: Vec<ProductKernel>,
}

/// Build the product of single-environment slices. Weights for the mixture
/// identity default to uniform.
pub fn product_space(components: Vec<FiniteScm>) -> Result<ProductCausalSpace> {
    let k = components.len();
    ProductCausalSpace::with_weights(components, vec![1.0 / k.max(1) as f64; k])
}

fn component_marginal(scm: &FiniteScm) -> Vec<f64> {
    let mut m = vec![0.0; scm.n_obs()];
    for y in 0..scm.n_labels() {
        for (acc, p) in m.iter_mut().zip(scm.p_obs(y, 0)) {
            *acc += scm.p_label()[y] * p;
        }
    }
    m
}

impl ProductCausalSpace {
    pub fn with_weights(components: Vec<FiniteScm>, weights: Vec<f64>) -> Result<Self> {
        if components.len() < 2 {
            return Err(Error::Shape("a product space needs at least two components".into()));
        }
        if components.len() > MAX_COMPONENTS {
            return Err(Error::Shape(format!("at most {MAX_COMPONENTS} components are supported")));
        }
        if weights.len() != components.len() {
            return Err(Error::Shape("one weight per component is required".into()));
        }
        let mut seen = Vec::new();
        for c in &components {
            if c.n_envs() != 1 {
                return Err(Error::Shape("product components must be single-environment slices".into()));
            }
            let id = c.env_support()[0];
            if seen.contains(&id) {
                return Err(Error::DuplicateEnvironmentId(id));
            }
            seen.push(id);
        }
        let radices: Vec<usize> = components.iter().map(|c| c.n_labels() * c.n_obs()).collect();
        let size = radices.iter().try_fold(1usize, |acc, &r| acc.checked_mul(r).filter(|&v| v <= MAX_JOINT));
        let size = size.ok_or_else(|| Error::Shape("joint outcome space is too large to tabulate".into()))?;

        let atoms: Vec<Vec<f64>> = components
            .iter()
            .map(|c| {
                (0..c.n_labels())
                    .flat_map(|y| c.p_obs(y, 0).iter().map(move |p| c.p_label()[y] * p))
                    .collect()
            })
            .collect();
        let mut joint = vec![1.0; size];
        let mut stride = size;
        for (i, r) in radices.iter().enumerate() {
            stride /= r;
            for (idx, v) in joint.iter_mut().enumerate() {
                *v *= atoms[i][(idx / stride) % r];
            }
        }

        let marginals: Vec<Vec<f64>> = components.iter().map(component_marginal).collect();
        let kernels = (1u32..1 << components.len())
            .map(|mask| {
                let conditioning: Vec<usize> = (0..components.len()).filter(|i| mask >> i & 1 == 1).collect();
                let factors = components
                    .iter()
                    .enumerate()
                    .map(|(i, c)| {
                        (0..c.n_labels())
                            .map(|y| {
                                if conditioning.contains(&i) {
                                    c.p_obs(y, 0).to_vec()
                                } else {
                                    marginals[i].clone()
                                }
                            })
                            .collect()
                    })
                    .collect();
                ProductKernel { conditioning, factors }
            })
            .collect();
        Ok(ProductCausalSpace { components, weights, radices, joint, kernels })
    }

    /// Split a multi-environment SCM into per-environment slices, weighted by `P(E)`.
    pub fn from_scm(scm: &FiniteScm) -> Result<Self> {
        let slices = (0..scm.n_envs()).map(|e| scm.env_slice(e)).collect::<Result<Vec<_>>>()?;
        Self::with_weights(slices, scm.p_env().to_vec())
    }

    pub fn components(&self) -> &[FiniteScm] {
        &self.components
    }

    pub fn n_components(&self) -> usize {
        self.components.len()
    }

    pub fn env_ids(&self) -> Vec<i64> {
        self.components.iter().map(|c| c.env_support()[0]).collect()
    }

    pub fn joint(&self) -> &[f64] {
        &self.joint
    }

    /// Per-component `(y, x)` indices of a joint table position.
    pub fn decode(&self, mut idx: usize) -> Vec<(usize, usize)> {
        let mut out = vec![(0, 0); self.radices.len()];
        for i in (0..self.radices.len()).rev() {
            let a = idx % self.radices[i];
            idx /= self.radices[i];
            let nx = self.components[i].n_obs();
            out[i] = (a / nx, a % nx);
        }
        out
    }

    /// Kernel for a set of component indices.
    pub fn kernel(&self, s: &[usize]) -> Result<&ProductKernel> {
        if s.is_empty() {
            return Err(Error::EmptyConditioningSet);
        }
        let mut mask = 0usize;
        for &i in s {
            if i >= self.components.len() {
                return Err(Error::UnknownOutcome(format!("component {i}")));
            }
            mask |= 1 << i;
        }
        Ok(&self.kernels[mask - 1])
    }

    /// Joint probability of the outcomes accepted by `pred`.
    pub fn joint_measure(&self, pred: impl Fn(&[(usize, usize)]) -> bool) -> f64 {
        self.joint.iter().enumerate().filter(|(i, _)| pred(&self.decode(*i))).map(|(_, p)| p).sum()
    }

    /// `P(X in A | Y_i = labels_i for i in S)` computed by enumerating the joint
    /// table, where `A` is the set of observable tuples accepted by `pred`.
    pub fn conditional_from_joint(
        &self,
        s: &[usize],
        labels: &[usize],
        pred: impl Fn(&[usize]) -> bool,
    ) -> Result<f64> {
        let (mut num, mut den) = (0.0, 0.0);
        for (idx, &p) in self.joint.iter().enumerate() {
            let out = self.decode(idx);
            if s.iter().any(|&i| out[i].0 != labels[i]) {
                continue;
            }
            den += p;
            let xs: Vec<usize> = out.iter().map(|o| o.1).collect();
            if pred(&xs) {
                num += p;
            }
        }
        if den <= 0.0 {
            return Err(Error::EmptyCell("zero-probability label assignment".into()));
        }
        Ok(num / den)
    }

    /// Largest gap between the joint measure and the product of component
    /// measures over rectangles `B_1 x ... x B_k`, `B_i` a subset of `Y_i x X_i`.
    ///
    /// Every rectangle is enumerated when there are at most 2^12 of them;
    /// otherwise atom rectangles are used, which determine the rest by additivity.
    pub fn rectangle_gap(&self) -> f64 {
        let exhaustive = self.radices.iter().map(|&r| r as u32).sum::<u32>() <= 12;
        let choices: Vec<Vec<Event>> = self
            .radices
            .iter()
            .map(|&r| if exhaustive { all_events(r).collect() } else { (0..r).map(Event::singleton).collect() })
            .collect();
        let atoms: Vec<Vec<f64>> = self
            .components
            .iter()
            .map(|c| {
                (0..c.n_labels())
                    .flat_map(|y| c.p_obs(y, 0).iter().map(move |p| c.p_label()[y] * p))
                    .collect()
            })
            .collect();
        let mut worst = 0.0_f64;
        for_each_combo(&choices, &mut |rect| {
            let product: f64 = rect.iter().enumerate().map(|(i, b)| b.measure(&atoms[i])).product();
            let joint = self.joint_measure(|out| {
                out.iter().enumerate().all(|(i, &(y, x))| rect[i].contains(y * self.components[i].n_obs() + x))
            });
            worst = worst.max((joint - product).abs());
        });
        worst
    }

    /// Largest gap between `K_{S2}` restricted to `S1`-measurable rectangles and
    /// `K_{S1}`, over every label assignment. Requires `S1` to be a subset of `S2`.
    pub fn restriction_gap(&self, s1: &[usize], s2: &[usize]) -> Result<f64> {
        if let Some(bad) = s1.iter().find(|i| !s2.contains(i)) {
            return Err(Error::SupportMismatch(format!("component {bad} is in S1 but not S2")));
        }
        let k1 = self.kernel(s1)?;
        let k2 = self.kernel(s2)?;
        let bits: u32 = s1.iter().map(|&i| self.components[i].n_obs() as u32).sum();
        let rect_choices: Vec<Vec<Event>> = self
            .components
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let n = c.n_obs();
                if !s1.contains(&i) {
                    vec![Event::full(n)]
                } else if bits <= 16 {
                    all_events(n).collect()
                } else {
                    (0..n).map(Event::singleton).collect()
                }
            })
            .collect();
        let label_choices: Vec<Vec<Event>> = self
            .components
            .iter()
            .enumerate()
            .map(|(i, c)| {
                if s2.contains(&i) {
                    (0..c.n_labels()).map(Event::singleton).collect()
                } else {
                    vec![Event::singleton(0)]
                }
            })
            .collect();
        let mut worst = 0.0_f64;
        let mut err = None;
        for_each_combo(&label_choices, &mut |ls| {
            let labels: Vec<usize> = ls.iter().map(|e| e.indices()[0]).collect();
            for_each_combo(&rect_choices, &mut |rect| {
                match (k1.eval_rectangle(&labels, rect), k2.eval_rectangle(&labels, rect)) {
                    (Ok(a), Ok(b)) => worst = worst.max((a - b).abs()),
                    (Err(e), _) | (_, Err(e)) => err = Some(e),
                }
            });
        });
        match err {
            Some(e) => Err(e),
            None => Ok(worst),
        }
    }

    /// `sum_{i in S} w_i K_S(y, cylinder_i(A)) / sum_{i in S} w_i` with the same
    /// label at every component: the product-space route to the pooled kernel.
    pub fn mixture_value(&self, s: &[usize], y: usize, event: &Event) -> Result<f64> {
        let k = self.kernel(s)?;
        let labels = vec![y; self.components.len()];
        let mass: f64 = s.iter().map(|&i| self.weights[i]).sum();
        let mut total = 0.0;
        for &i in k.conditioning() {
            let rect: Vec<Event> = self
                .components
                .iter()
                .enumerate()
                .map(|(j, c)| if j == i { event.clone() } else { Event::full(c.n_obs()) })
                .collect();
            total += self.weights[i] * k.eval_rectangle(&labels, &rect)?;
        }
        Ok(total / mass)
    }

    /// Recombine the components into one multi-environment SCM weighted by the
    /// mixture weights. Components must share label and observable supports.
    pub fn merged_scm(&self) -> Result<FiniteScm> {
        let first = &self.components[0];
        for c in &self.components[1..] {
            if c.label_support() != first.label_support() || c.obs_support() != first.obs_support() {
                return Err(Error::SupportMismatch("components have different supports".into()));
            }
            if c.p_label() != first.p_label() {
                return Err(Error::SupportMismatch("components have different label marginals".into()));
            }
        }
        build_finite_scm(ScmSpec {
            label_support: first.label_support().to_vec(),
            env_support: self.env_ids(),
            obs_support: first.obs_support().to_vec(),
            p_label: first.p_label().to_vec(),
            p_env: self.weights.clone(),
            p_obs_given: (0..first.n_labels())
                .map(|y| self.components.iter().map(|c| c.p_obs(y, 0).to_vec()).collect())
                .collect(),
        })
    }
}

fn for_each_combo(choices: &[Vec<Event>], f: &mut dyn FnMut(&[Event])) {
    fn go(choices: &[Vec<Event>], acc: &mut Vec<Event>, f: &mut dyn FnMut(&[Event])) {
        if acc.len() == choices.len() {
            f(acc);
            return;
        }
        for c in &choices[acc.len()] {
            acc.push(c.clone());
            go(choices, acc, f);
            acc.pop();
        }
    }
    go(choices, &mut Vec::with_capacity(choices.len()), f)
}
