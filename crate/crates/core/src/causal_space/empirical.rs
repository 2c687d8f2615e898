use super::{CausalKernel, KernelMode};
use crate::dataset::EnvironmentDataset;
use crate::{Error, Result};

/// Empirical frequencies `P_n(X in A | Y = y, E in S)` from a toy dataset.
///
/// Cells with no samples are left undefined, never filled in.
pub fn empirical_kernel(dataset: &EnvironmentDataset, s: &[usize]) -> Result<CausalKernel> {
    empirical_kernel_with_mode(dataset, s, KernelMode::Marginalized)
}

/// As [`empirical_kernel`], optionally with one row per `(y, e)` cell.
pub fn empirical_kernel_with_mode(dataset: &EnvironmentDataset, s: &[usize], mode: KernelMode) -> Result<CausalKernel> {
    let scm = dataset.scm()?;
    if s.is_empty() {
        return Err(Error::EmptyConditioningSet);
    }
    let mut set = s.to_vec();
    set.sort_unstable();
    set.dedup();
    if let Some(&bad) = set.iter().find(|&&e| e >= scm.n_envs()) {
        return Err(Error::UnknownOutcome(format!("environment index {bad}")));
    }
    let (ny, nx) = (scm.n_labels(), scm.n_obs());
    let n_rows = match mode {
        KernelMode::Marginalized => ny,
        KernelMode::PerEnvironment => ny * set.len(),
    };
    let mut counts = vec![vec![0usize; nx]; n_rows];
    for i in 0..dataset.len() {
        let e = scm.env_index(dataset.env_of(i))?;
        let Some(pos) = set.iter().position(|&v| v == e) else { continue };
        let y = scm.label_index(dataset.label_of(i)[0] as i64)?;
        let x = scm.obs_index(dataset.mechanism_of(i)[0] as i64)?;
        let row = match mode {
            KernelMode::Marginalized => y,
            KernelMode::PerEnvironment => y * set.len() + pos,
        };
        counts[row][x] += 1;
    }
    let rows = counts
        .into_iter()
        .map(|c| {
            let total: usize = c.iter().sum();
            (total > 0).then(|| c.iter().map(|&k| k as f64 / total as f64).collect())
        })
        .collect();
    CausalKernel::from_rows(mode, set, scm.n_envs(), nx, scm.p_label().to_vec(), rows)
}

/// Conditioning cells of `kernel` that have no samples.
pub fn undefined_cells(kernel: &CausalKernel) -> Vec<super::Omega> {
    kernel.cells().into_iter().filter(|&w| !kernel.is_defined(w)).collect()
}
