//! Finite causal spaces over a label `Y`, an environment `E` and an observable `X`.
//!
//! Sample spaces are finite, so every sigma-algebra is a power set and every
//! event is an index set into a support. Kernels are stored as one probability
//! vector over the observable support per conditioning cell; evaluating an event
//! sums the atoms it contains, which makes finite additivity exact.
//!
//! Two conditioning modes exist:
//!
//! - [`KernelMode::Marginalized`]: `K_S(w, A) = P(X in A | Y = y, E in S)`. The
//!   environment component of `w` is ignored, so the kernel is constant in `E`.
//! - [`KernelMode::PerEnvironment`]: one row per `(y, e)` with `e in S`, i.e. the
//!   raw environment-specific mechanism.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::{tol, Error, Result};

mod checks;
mod empirical;
mod product;

pub use checks::{
    check_measure, marginal_e_invariance_gap, verify_anti_causal_independence,
    verify_event_properties, EnvPairDiscrepancy, EventClassReport, ViolationReport,
};
pub use empirical::{empirical_kernel, empirical_kernel_with_mode, undefined_cells};
pub use product::{product_space, ProductCausalSpace, ProductKernel};

/// Raw probability tables as read from an SCM spec file.
///
/// `p_obs_given` is row-major `[y][e][x]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScmSpec {
    pub label_support: Vec<i64>,
    pub env_support: Vec<i64>,
    pub obs_support: Vec<i64>,
    pub p_label: Vec<f64>,
    pub p_env: Vec<f64>,
    pub p_obs_given: Vec<Vec<Vec<f64>>>,
}

/// A validated finite anti-causal SCM `Y -> X <- E`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ScmSpec", into = "ScmSpec")]
pub struct FiniteScm {
    spec: ScmSpec,
}

impl TryFrom<ScmSpec> for FiniteScm {
    type Error = Error;

    fn try_from(spec: ScmSpec) -> Result<Self> {
        build_finite_scm(spec)
    }
}

impl From<FiniteScm> for ScmSpec {
    fn from(scm: FiniteScm) -> Self {
        scm.spec
    }
}

fn check_support(name: &str, support: &[i64]) -> Result<()> {
    if support.is_empty() {
        return Err(Error::Shape(format!("{name} is empty")));
    }
    let mut sorted = support.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.len() != support.len() {
        return Err(Error::Shape(format!("{name} has repeated values")));
    }
    Ok(())
}

fn check_distribution(name: &str, dist: &[f64]) -> Result<()> {
    if let Some(p) = dist.iter().find(|p| !p.is_finite() || **p < 0.0 || **p > 1.0) {
        return Err(Error::Normalization(format!("{name} has entry {p} outside [0, 1]")));
    }
    let total: f64 = dist.iter().sum();
    if (total - 1.0).abs() > tol::NORMALIZATION {
        return Err(Error::Normalization(format!("{name} sums to {total}")));
    }
    Ok(())
}

/// Validate raw tables into a [`FiniteScm`].
pub fn build_finite_scm(spec: ScmSpec) -> Result<FiniteScm> {
    check_support("label_support", &spec.label_support)?;
    check_support("env_support", &spec.env_support)?;
    check_support("obs_support", &spec.obs_support)?;
    let (ny, ne, nx) = (spec.label_support.len(), spec.env_support.len(), spec.obs_support.len());
    if spec.p_label.len() != ny {
        return Err(Error::Shape(format!("p_label has {} entries for {ny} labels", spec.p_label.len())));
    }
    if spec.p_env.len() != ne {
        return Err(Error::Shape(format!("p_env has {} entries for {ne} environments", spec.p_env.len())));
    }
    if spec.p_obs_given.len() != ny {
        return Err(Error::Shape(format!("p_obs_given has {} label rows, expected {ny}", spec.p_obs_given.len())));
    }
    for (y, by_env) in spec.p_obs_given.iter().enumerate() {
        if by_env.len() != ne {
            return Err(Error::Shape(format!("p_obs_given[{y}] has {} env rows, expected {ne}", by_env.len())));
        }
        for (e, row) in by_env.iter().enumerate() {
            if row.len() != nx {
                return Err(Error::Shape(format!("p_obs_given[{y}][{e}] has {} entries, expected {nx}", row.len())));
            }
        }
    }
    check_distribution("p_label", &spec.p_label)?;
    check_distribution("p_env", &spec.p_env)?;
    for (y, by_env) in spec.p_obs_given.iter().enumerate() {
        for (e, row) in by_env.iter().enumerate() {
            check_distribution(&format!("p_obs_given[{y}][{e}]"), row)?;
        }
    }
    Ok(FiniteScm { spec })
}

impl FiniteScm {
    /// The two-label, two-environment binary SCM used throughout the docs and tests:
    /// `Y, E ~ Bernoulli(0.5)` and `P(X=1 | y, e)` = 0.2, 0.4, 0.6, 0.8 for
    /// `(y, e)` = (0,0), (0,1), (1,0), (1,1).
    pub fn toy() -> Self {
        let p1 = [[0.2, 0.4], [0.6, 0.8]];
        let p_obs_given = p1
            .iter()
            .map(|by_env| by_env.iter().map(|&p| vec![1.0 - p, p]).collect())
            .collect();
        build_finite_scm(ScmSpec {
            label_support: vec![0, 1],
            env_support: vec![0, 1],
            obs_support: vec![0, 1],
            p_label: vec![0.5, 0.5],
            p_env: vec![0.5, 0.5],
            p_obs_given,
        })
        .expect("toy tables are normalized")
    }

    /// Random SCM with strictly positive tables. Each distribution is a
    /// normalized vector of uniform draws.
    pub fn random<R: Rng + ?Sized>(rng: &mut R, n_labels: usize, n_envs: usize, n_obs: usize) -> Self {
        fn simplex<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<f64> {
            let raw: Vec<f64> = (0..n).map(|_| rng.gen_range(0.05..1.0)).collect();
            let total: f64 = raw.iter().sum();
            raw.into_iter().map(|v| v / total).collect()
        }
        let p_label = simplex(rng, n_labels);
        let p_env = simplex(rng, n_envs);
        let p_obs_given = (0..n_labels)
            .map(|_| (0..n_envs).map(|_| simplex(rng, n_obs)).collect())
            .collect();
        build_finite_scm(ScmSpec {
            label_support: (0..n_labels as i64).collect(),
            env_support: (0..n_envs as i64).collect(),
            obs_support: (0..n_obs as i64).collect(),
            p_label,
            p_env,
            p_obs_given,
        })
        .expect("random tables are normalized")
    }

    pub fn spec(&self) -> &ScmSpec {
        &self.spec
    }

    pub fn n_labels(&self) -> usize {
        self.spec.label_support.len()
    }

    pub fn n_envs(&self) -> usize {
        self.spec.env_support.len()
    }

    pub fn n_obs(&self) -> usize {
        self.spec.obs_support.len()
    }

    pub fn label_support(&self) -> &[i64] {
        &self.spec.label_support
    }

    pub fn env_support(&self) -> &[i64] {
        &self.spec.env_support
    }

    pub fn obs_support(&self) -> &[i64] {
        &self.spec.obs_support
    }

    pub fn p_label(&self) -> &[f64] {
        &self.spec.p_label
    }

    pub fn p_env(&self) -> &[f64] {
        &self.spec.p_env
    }

    /// `P(X = . | Y = y, E = e)` by index.
    pub fn p_obs(&self, y: usize, e: usize) -> &[f64] {
        &self.spec.p_obs_given[y][e]
    }

    /// Joint probability `P(Y=y, E=e, X=x)`.
    pub fn joint(&self, y: usize, e: usize, x: usize) -> f64 {
        self.spec.p_label[y] * self.spec.p_env[e] * self.spec.p_obs_given[y][e][x]
    }

    fn index_of(support: &[i64], value: i64, what: &str) -> Result<usize> {
        support
            .iter()
            .position(|&v| v == value)
            .ok_or_else(|| Error::UnknownOutcome(format!("{what} value {value}")))
    }

    pub fn label_index(&self, value: i64) -> Result<usize> {
        Self::index_of(&self.spec.label_support, value, "label")
    }

    pub fn env_index(&self, value: i64) -> Result<usize> {
        Self::index_of(&self.spec.env_support, value, "environment")
    }

    pub fn obs_index(&self, value: i64) -> Result<usize> {
        Self::index_of(&self.spec.obs_support, value, "observable")
    }

    /// The single-environment slice at environment index `e`.
    pub fn env_slice(&self, e: usize) -> Result<FiniteScm> {
        if e >= self.n_envs() {
            return Err(Error::UnknownOutcome(format!("environment index {e}")));
        }
        build_finite_scm(ScmSpec {
            label_support: self.spec.label_support.clone(),
            env_support: vec![self.spec.env_support[e]],
            obs_support: self.spec.obs_support.clone(),
            p_label: self.spec.p_label.clone(),
            p_env: vec![1.0],
            p_obs_given: self.spec.p_obs_given.iter().map(|by_env| vec![by_env[e].clone()]).collect(),
        })
    }

    /// Total variation between `P(X | y, e)` rows, maximised over label pairs
    /// and environments. Zero when `X` does not depend on `Y`.
    pub fn label_dependence(&self) -> f64 {
        let mut best = 0.0_f64;
        for e in 0..self.n_envs() {
            for a in 0..self.n_labels() {
                for b in a + 1..self.n_labels() {
                    best = best.max(total_variation(self.p_obs(a, e), self.p_obs(b, e)));
                }
            }
        }
        best
    }
}

/// `sup_A |P(A) - Q(A)|` over all events of a finite space.
pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    let (pos, neg) = p.iter().zip(q).fold((0.0, 0.0), |(pos, neg), (a, b)| {
        let d = a - b;
        if d > 0.0 {
            (pos + d, neg)
        } else {
            (pos, neg - d)
        }
    });
    f64::max(pos, neg)
}

/// An event of a finite support: a sorted set of atom indices.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Event(Vec<usize>);

impl Event {
    pub fn new(indices: impl IntoIterator<Item = usize>) -> Self {
        let mut v: Vec<usize> = indices.into_iter().collect();
        v.sort_unstable();
        v.dedup();
        Event(v)
    }

    pub fn empty() -> Self {
        Event(Vec::new())
    }

    pub fn full(n: usize) -> Self {
        Event((0..n).collect())
    }

    pub fn singleton(i: usize) -> Self {
        Event(vec![i])
    }

    /// Bit `i` of `mask` selects atom `i`.
    pub fn from_mask(mask: u64) -> Self {
        Event((0..64).filter(|i| mask >> i & 1 == 1).collect())
    }

    pub fn indices(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, i: usize) -> bool {
        self.0.binary_search(&i).is_ok()
    }

    pub fn is_disjoint(&self, other: &Event) -> bool {
        self.0.iter().all(|i| !other.contains(*i))
    }

    pub fn union(&self, other: &Event) -> Event {
        Event::new(self.0.iter().chain(other.0.iter()).copied())
    }

    pub fn complement(&self, n: usize) -> Event {
        Event((0..n).filter(|i| !self.contains(*i)).collect())
    }

    pub fn check_within(&self, n: usize) -> Result<()> {
        match self.0.last() {
            Some(&last) if last >= n => Err(Error::UnknownOutcome(format!("atom {last} outside support of size {n}"))),
            _ => Ok(()),
        }
    }

    /// Measure of the event under an atom distribution.
    pub fn measure(&self, dist: &[f64]) -> f64 {
        self.0.iter().map(|&i| dist[i]).sum()
    }
}

/// Every event of an `n`-atom support, in bitmask order.
pub fn all_events(n: usize) -> impl Iterator<Item = Event> {
    assert!(n <= 24, "refusing to enumerate 2^{n} events");
    (0u64..1 << n).map(Event::from_mask)
}

/// A conditioning outcome: label index plus optional environment index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Omega {
    pub y: usize,
    pub e: Option<usize>,
}

impl Omega {
    pub fn new(y: usize, e: usize) -> Self {
        Omega { y, e: Some(e) }
    }

    pub fn label(y: usize) -> Self {
        Omega { y, e: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KernelMode {
    Marginalized,
    PerEnvironment,
}

/// Conditional probability table `K_S(w, A)` over the observable support.
///
/// Rows that condition on a zero-probability (or unobserved) cell are `None`
/// and evaluate to [`Error::EmptyCell`].
#[derive(Debug, Clone, PartialEq)]
pub struct CausalKernel {
    mode: KernelMode,
    conditioning: Vec<usize>,
    n_labels: usize,
    n_envs: usize,
    n_obs: usize,
    label_marginal: Vec<f64>,
    rows: Vec<Option<Vec<f64>>>,
}

impl CausalKernel {
    /// Assemble a kernel from rows, validating each defined row as a distribution.
    ///
    /// Rows are indexed by `y` (marginalized) or `y * |S| + position of e in S`.
    pub fn from_rows(
        mode: KernelMode,
        conditioning: Vec<usize>,
        n_envs: usize,
        n_obs: usize,
        label_marginal: Vec<f64>,
        rows: Vec<Option<Vec<f64>>>,
    ) -> Result<Self> {
        if conditioning.is_empty() {
            return Err(Error::EmptyConditioningSet);
        }
        let n_labels = label_marginal.len();
        let expected = match mode {
            KernelMode::Marginalized => n_labels,
            KernelMode::PerEnvironment => n_labels * conditioning.len(),
        };
        if rows.len() != expected {
            return Err(Error::Shape(format!("kernel has {} rows, expected {expected}", rows.len())));
        }
        for row in rows.iter().flatten() {
            if row.len() != n_obs {
                return Err(Error::Shape("kernel rows have different lengths".into()));
            }
            check_distribution("kernel row", row)?;
        }
        Ok(CausalKernel { mode, conditioning, n_labels, n_envs, n_obs, label_marginal, rows })
    }

    pub fn mode(&self) -> KernelMode {
        self.mode
    }

    /// The environment index set `S`.
    pub fn conditioning(&self) -> &[usize] {
        &self.conditioning
    }

    pub fn n_labels(&self) -> usize {
        self.n_labels
    }

    pub fn n_envs(&self) -> usize {
        self.n_envs
    }

    pub fn n_obs(&self) -> usize {
        self.n_obs
    }

    pub fn label_marginal(&self) -> &[f64] {
        &self.label_marginal
    }

    fn row_index(&self, omega: Omega) -> Result<usize> {
        if omega.y >= self.n_labels {
            return Err(Error::UnknownOutcome(format!("label index {}", omega.y)));
        }
        if let Some(e) = omega.e {
            if e >= self.n_envs {
                return Err(Error::UnknownOutcome(format!("environment index {e}")));
            }
        }
        match self.mode {
            KernelMode::Marginalized => Ok(omega.y),
            KernelMode::PerEnvironment => {
                let e = omega
                    .e
                    .ok_or_else(|| Error::UnknownOutcome("per-environment kernel needs an environment".into()))?;
                let pos = self
                    .conditioning
                    .iter()
                    .position(|&s| s == e)
                    .ok_or_else(|| Error::UnknownOutcome(format!("environment {e} is not in S")))?;
                Ok(omega.y * self.conditioning.len() + pos)
            }
        }
    }

    /// The atom distribution `K_S(w, .)`.
    pub fn row(&self, omega: Omega) -> Result<&[f64]> {
        let idx = self.row_index(omega)?;
        self.rows[idx]
            .as_deref()
            .ok_or_else(|| Error::EmptyCell(format!("y={} e={:?}", omega.y, omega.e)))
    }

    pub fn is_defined(&self, omega: Omega) -> bool {
        self.row(omega).is_ok()
    }

    /// `K_S(w, A)`.
    pub fn eval(&self, omega: Omega, event: &Event) -> Result<f64> {
        event.check_within(self.n_obs)?;
        Ok(event.measure(self.row(omega)?))
    }

    /// The label-integrated value `sum_y mu_Y(y) K_S((y, e), A)`.
    ///
    /// Per-environment kernels need `e`; marginalized kernels ignore it.
    pub fn integrated(&self, event: &Event, e: Option<usize>) -> Result<f64> {
        let mut total = 0.0;
        for (y, &w) in self.label_marginal.iter().enumerate() {
            if w > 0.0 {
                total += w * self.eval(Omega { y, e }, event)?;
            }
        }
        Ok(total)
    }

    /// Every conditioning cell of the table, in row order.
    pub fn cells(&self) -> Vec<Omega> {
        match self.mode {
            KernelMode::Marginalized => (0..self.n_labels).map(Omega::label).collect(),
            KernelMode::PerEnvironment => (0..self.n_labels)
                .flat_map(|y| self.conditioning.iter().map(move |&e| Omega::new(y, e)))
                .collect(),
        }
    }

    /// Apply `f` to every defined row. Structure is preserved.
    pub(crate) fn map_rows(&self, mut f: impl FnMut(Omega, &[f64]) -> Result<Vec<f64>>) -> Result<CausalKernel> {
        let cells = self.cells();
        let rows = cells
            .iter()
            .zip(&self.rows)
            .map(|(&omega, row)| row.as_deref().map(|r| f(omega, r)).transpose())
            .collect::<Result<Vec<_>>>()?;
        CausalKernel::from_rows(self.mode, self.conditioning.clone(), self.n_envs, self.n_obs, self.label_marginal.clone(), rows)
    }

    /// Same table with a different label marginal `mu_Y`.
    pub(crate) fn with_label_marginal(mut self, mu: Vec<f64>) -> Result<CausalKernel> {
        if mu.len() != self.n_labels {
            return Err(Error::Shape("label marginal has the wrong length".into()));
        }
        check_distribution("label marginal", &mu)?;
        self.label_marginal = mu;
        Ok(self)
    }

    /// Same conditioning structure and supports.
    pub fn same_shape(&self, other: &CausalKernel) -> bool {
        self.mode == other.mode
            && self.conditioning == other.conditioning
            && self.n_labels == other.n_labels
            && self.n_envs == other.n_envs
            && self.n_obs == other.n_obs
    }

    /// `sup_{w, A} |K(w, A) - truth(w, A)|` over cells defined in `truth`.
    ///
    /// Fails with [`Error::EmptyCell`] when this kernel is undefined on a cell the
    /// reference defines.
    pub fn sup_deviation(&self, truth: &CausalKernel) -> Result<f64> {
        if !self.same_shape(truth) {
            return Err(Error::SupportMismatch("kernels condition on different cells".into()));
        }
        let mut worst = 0.0_f64;
        for omega in truth.cells() {
            let Ok(reference) = truth.row(omega) else { continue };
            worst = worst.max(total_variation(self.row(omega)?, reference));
        }
        Ok(worst)
    }

    /// Atom-level JSON dump with support values taken from `scm`.
    pub fn dump(&self, scm: &FiniteScm) -> Result<KernelDump> {
        if scm.n_labels() != self.n_labels || scm.n_envs() != self.n_envs || scm.n_obs() != self.n_obs {
            return Err(Error::SupportMismatch("kernel and SCM supports differ".into()));
        }
        let mut entries = Vec::new();
        for omega in self.cells() {
            let Ok(row) = self.row(omega) else { continue };
            for (x, &p) in row.iter().enumerate() {
                entries.push(KernelEntry {
                    y: scm.label_support()[omega.y],
                    e: omega.e.map(|e| scm.env_support()[e]),
                    event: vec![scm.obs_support()[x]],
                    p,
                });
            }
        }
        Ok(KernelDump {
            s: self.conditioning.iter().map(|&e| scm.env_support()[e]).collect(),
            mode: self.mode,
            entries,
        })
    }
}

/// Serialized kernel table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelDump {
    #[serde(rename = "S")]
    pub s: Vec<i64>,
    pub mode: KernelMode,
    pub entries: Vec<KernelEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelEntry {
    pub y: i64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub e: Option<i64>,
    pub event: Vec<i64>,
    pub p: f64,
}

fn normalize_envs(scm: &FiniteScm, s: &[usize]) -> Result<Vec<usize>> {
    if s.is_empty() {
        return Err(Error::EmptyConditioningSet);
    }
    let mut set = s.to_vec();
    set.sort_unstable();
    set.dedup();
    if let Some(&bad) = set.iter().find(|&&e| e >= scm.n_envs()) {
        return Err(Error::UnknownOutcome(format!("environment index {bad}")));
    }
    Ok(set)
}

/// `K_S(w, A) = P(X in A | Y = y, E in S)`, mixing environments of `S` by `P(E)`.
///
/// If `P(E in S) = 0` every row is undefined.
pub fn observational_kernel(scm: &FiniteScm, s: &[usize]) -> Result<CausalKernel> {
    let set = normalize_envs(scm, s)?;
    let mass: f64 = set.iter().map(|&e| scm.p_env()[e]).sum();
    let rows = (0..scm.n_labels())
        .map(|y| {
            (mass > 0.0).then(|| {
                (0..scm.n_obs())
                    .map(|x| set.iter().map(|&e| scm.p_obs(y, e)[x] * scm.p_env()[e]).sum::<f64>() / mass)
                    .collect()
            })
        })
        .collect();
    CausalKernel::from_rows(KernelMode::Marginalized, set, scm.n_envs(), scm.n_obs(), scm.p_label().to_vec(), rows)
}

/// One row per `(y, e)` with `e in S`: the environment-specific mechanisms.
pub fn per_environment_kernel(scm: &FiniteScm, s: &[usize]) -> Result<CausalKernel> {
    let set = normalize_envs(scm, s)?;
    let rows = (0..scm.n_labels())
        .flat_map(|y| set.iter().map(move |&e| Some(scm.p_obs(y, e).to_vec())))
        .collect();
    CausalKernel::from_rows(KernelMode::PerEnvironment, set, scm.n_envs(), scm.n_obs(), scm.p_label().to_vec(), rows)
}

/// Free-function form of [`CausalKernel::eval`].
pub fn kernel_eval(kernel: &CausalKernel, omega: Omega, event: &Event) -> Result<f64> {
    kernel.eval(omega, event)
}

/// Integrate marginalized kernels against a weight measure:
/// `K(w, A) = sum_k mu_k K_k(w, A)`.
///
/// Integrating the single-environment kernels against `P(E)` recovers the
/// pooled kernel over all environments, which is how a high-level kernel
/// averages away environment-specific mechanisms.
pub fn integrate_kernels(parts: &[(f64, &CausalKernel)]) -> Result<CausalKernel> {
    let (_, first) = parts.first().ok_or(Error::EmptyConditioningSet)?;
    let total: f64 = parts.iter().map(|(w, _)| w).sum();
    if parts.iter().any(|(w, _)| *w < 0.0) || (total - 1.0).abs() > tol::NORMALIZATION {
        return Err(Error::Normalization(format!("integration weights sum to {total}")));
    }
    let mut conditioning = Vec::new();
    for (_, k) in parts {
        if k.mode != KernelMode::Marginalized || k.n_labels != first.n_labels || k.n_obs != first.n_obs {
            return Err(Error::SupportMismatch("can only integrate marginalized kernels over equal supports".into()));
        }
        conditioning.extend_from_slice(&k.conditioning);
    }
    conditioning.sort_unstable();
    conditioning.dedup();
    let rows = (0..first.n_labels)
        .map(|y| {
            let mut acc = vec![0.0; first.n_obs];
            for (w, k) in parts {
                let row = k.rows[y].as_ref()?;
                for (a, r) in acc.iter_mut().zip(row) {
                    *a += w * r;
                }
            }
            Some(acc)
        })
        .collect();
    CausalKernel::from_rows(
        KernelMode::Marginalized,
        conditioning,
        first.n_envs,
        first.n_obs,
        first.label_marginal.clone(),
        rows,
    )
}
