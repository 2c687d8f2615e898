//! Report-only checks over kernels: measure axioms, anti-causal independence
//! and the invariant-versus-varying classification of events.

use serde::{Deserialize, Serialize};

use super::{all_events, observational_kernel, total_variation, CausalKernel, Event, FiniteScm, KernelMode, Omega};
use crate::{tol, Error, Result};

/// Largest violation of the finite-measure axioms over every defined row.
///
/// Up to 8 atoms every pair of disjoint events is enumerated; above that the
/// check falls back to each event paired with its complement.
pub fn check_measure(kernel: &CausalKernel) -> Result<f64> {
    let n = kernel.n_obs();
    let mut worst = 0.0_f64;
    for omega in kernel.cells() {
        if !kernel.is_defined(omega) {
            continue;
        }
        worst = worst.max(kernel.eval(omega, &Event::empty())?.abs());
        worst = worst.max((kernel.eval(omega, &Event::full(n))? - 1.0).abs());
        for &p in kernel.row(omega)? {
            worst = worst.max(-p).max(p - 1.0);
        }
        if n <= 8 {
            // Each atom goes to A, B or neither.
            for code in 0..3usize.pow(n as u32) {
                let (mut a, mut b, mut c) = (Vec::new(), Vec::new(), code);
                for i in 0..n {
                    match c % 3 {
                        1 => a.push(i),
                        2 => b.push(i),
                        _ => {}
                    }
                    c /= 3;
                }
                let (a, b) = (Event::new(a), Event::new(b));
                let lhs = kernel.eval(omega, &a.union(&b))?;
                let rhs = kernel.eval(omega, &a)? + kernel.eval(omega, &b)?;
                worst = worst.max((lhs - rhs).abs());
            }
        } else {
            for a in all_events(n.min(16)) {
                let ac = a.complement(n);
                let sum = kernel.eval(omega, &a)? + kernel.eval(omega, &ac)?;
                worst = worst.max((sum - 1.0).abs());
            }
        }
    }
    Ok(worst)
}

/// Largest difference between `K((y, e), A)` and `K((y, e'), A)` for a
/// marginalized kernel. Zero by construction.
pub fn marginal_e_invariance_gap(kernel: &CausalKernel) -> Result<f64> {
    if kernel.mode() != KernelMode::Marginalized {
        return Err(Error::SupportMismatch("expected a marginalized kernel".into()));
    }
    let mut worst = 0.0_f64;
    for y in 0..kernel.n_labels() {
        let Ok(base) = kernel.row(Omega::label(y)) else { continue };
        for e in 0..kernel.n_envs() {
            worst = worst.max(total_variation(kernel.row(Omega::new(y, e))?, base));
        }
    }
    Ok(worst)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvPairDiscrepancy {
    pub env_a: usize,
    pub env_b: usize,
    pub max_discrepancy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViolationReport {
    pub max_discrepancy: f64,
    pub pass: bool,
    pub per_env_pair: Vec<EnvPairDiscrepancy>,
    /// Number of `(w, w', B)` comparisons made; each covers every `A`.
    pub comparisons: usize,
}

/// Label events `B` to condition on: all non-empty subsets for up to 12 labels,
/// otherwise singletons plus the full set.
fn label_events(n: usize) -> Vec<Event> {
    if n <= 12 {
        all_events(n).filter(|b| !b.is_empty()).collect()
    } else {
        (0..n).map(Event::singleton).chain([Event::full(n)]).collect()
    }
}

/// `K(w, . | Y in B)`: label rows averaged by `mu_Y` restricted to `B`.
fn conditioned_row(kernel: &CausalKernel, e: usize, b: &Event) -> Option<Vec<f64>> {
    let mu = kernel.label_marginal();
    let mass: f64 = b.indices().iter().map(|&y| mu[y]).sum();
    if mass <= 0.0 {
        return None;
    }
    let mut acc = vec![0.0; kernel.n_obs()];
    for &y in b.indices() {
        if mu[y] == 0.0 {
            continue;
        }
        let row = kernel.row(Omega::new(y, e)).ok()?;
        for (a, r) in acc.iter_mut().zip(row) {
            *a += mu[y] * r / mass;
        }
    }
    Some(acc)
}

/// Compare `K(w, {A | B})` against `K(w', {A | B})` for every pair of
/// conditionings that share the label component and differ in environment.
///
/// The supremum over `A` is taken in closed form as the total variation of the
/// two rows, which equals the maximum over all events.
pub fn verify_anti_causal_independence(kernel: &CausalKernel, scm: &FiniteScm) -> ViolationReport {
    let envs: Vec<usize> = match kernel.mode() {
        KernelMode::Marginalized => (0..scm.n_envs().min(kernel.n_envs())).collect(),
        KernelMode::PerEnvironment => kernel.conditioning().to_vec(),
    };
    let events = label_events(kernel.n_labels());
    let mut per_env_pair = Vec::new();
    let mut comparisons = 0;
    for (i, &a) in envs.iter().enumerate() {
        for &b in &envs[i + 1..] {
            let mut worst = 0.0_f64;
            for ev in &events {
                if let (Some(ra), Some(rb)) = (conditioned_row(kernel, a, ev), conditioned_row(kernel, b, ev)) {
                    worst = worst.max(total_variation(&ra, &rb));
                    comparisons += 1;
                }
            }
            per_env_pair.push(EnvPairDiscrepancy { env_a: a, env_b: b, max_discrepancy: worst });
        }
    }
    let max_discrepancy = per_env_pair.iter().map(|p| p.max_discrepancy).fold(0.0, f64::max);
    ViolationReport { max_discrepancy, pass: max_discrepancy <= tol::EXACT, per_env_pair, comparisons }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventClassReport {
    pub event: Event,
    /// `max_w |K_S(w, A) - K_{S \ U}(w, A)| <= 1e-12`.
    pub invariant_under_u: bool,
    /// Kernel values differ across `w` by more than 1e-12.
    pub omega_dependent: bool,
    pub removal_gap: f64,
    pub omega_spread: f64,
}

/// Classify `event` by whether dropping `U` from the conditioning set changes
/// the kernel, and whether the kernel varies with the conditioning outcome.
pub fn verify_event_properties(scm: &FiniteScm, event: &Event, s: &[usize], u: &[usize]) -> Result<EventClassReport> {
    if let Some(&bad) = u.iter().find(|e| !s.contains(e)) {
        return Err(Error::SupportMismatch(format!("environment {bad} is in U but not in S")));
    }
    let rest: Vec<usize> = s.iter().copied().filter(|e| !u.contains(e)).collect();
    if rest.is_empty() {
        return Err(Error::EmptyConditioningSet);
    }
    let full = observational_kernel(scm, s)?;
    let reduced = observational_kernel(scm, &rest)?;
    let (mut gap, mut lo, mut hi) = (0.0_f64, f64::INFINITY, f64::NEG_INFINITY);
    for y in 0..scm.n_labels() {
        let omega = Omega::label(y);
        let Ok(v) = full.eval(omega, event) else { continue };
        lo = lo.min(v);
        hi = hi.max(v);
        if let Ok(w) = reduced.eval(omega, event) {
            gap = gap.max((v - w).abs());
        }
    }
    let spread = if hi >= lo { hi - lo } else { 0.0 };
    Ok(EventClassReport {
        event: event.clone(),
        invariant_under_u: gap <= tol::EXACT,
        omega_dependent: spread > tol::EXACT,
        removal_gap: gap,
        omega_spread: spread,
    })
}
