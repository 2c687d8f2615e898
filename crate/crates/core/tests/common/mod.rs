#![allow(dead_code)]

use acia_core::causal_space::{Event, FiniteScm};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Every atom `(y, e, x)` of the SCM with its joint probability.
pub fn atoms(scm: &FiniteScm) -> Vec<(usize, usize, usize, f64)> {
    let s = scm.spec();
    let mut out = Vec::new();
    for y in 0..s.label_support.len() {
        for e in 0..s.env_support.len() {
            for x in 0..s.obs_support.len() {
                out.push((y, e, x, s.p_label[y] * s.p_env[e] * s.p_obs_given[y][e][x]));
            }
        }
    }
    out
}

/// `P(X in A | Y = y, E in envs)` by summing joint atoms. `None` on zero mass.
pub fn brute_conditional(scm: &FiniteScm, y: usize, envs: &[usize], a: &Event) -> Option<f64> {
    let (mut num, mut den) = (0.0, 0.0);
    for (yy, e, x, p) in atoms(scm) {
        if yy == y && envs.contains(&e) {
            den += p;
            if a.contains(x) {
                num += p;
            }
        }
    }
    (den > 0.0).then(|| num / den)
}

/// `P(Y = y)` by summing joint atoms.
pub fn brute_label(scm: &FiniteScm, y: usize) -> f64 {
    atoms(scm).iter().filter(|a| a.0 == y).map(|a| a.3).sum()
}

/// Nonempty proper subsets of `0..n` plus the full set, as sorted index lists.
pub fn subsets(n: usize) -> Vec<Vec<usize>> {
    (1u32..(1 << n)).map(|m| (0..n).filter(|&i| m >> i & 1 == 1).collect()).collect()
}

pub fn random_scm(seed: u64, ny: usize, ne: usize, nx: usize) -> FiniteScm {
    FiniteScm::random(&mut rng(seed), ny, ne, nx)
}

pub fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}
