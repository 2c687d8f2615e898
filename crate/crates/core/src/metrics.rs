//! Accuracy, environment independence (EI), low-level invariance (LLI) and
//! intervention robustness (IR).
//!
//! - EI: `z_H` is reduced to a binary code by a median split on its (at most)
//!   8 highest-variance dimensions; EI is the plug-in conditional mutual
//!   information `sum_k freq(k) I(code; E | Y = k)` in nats.
//! - LLI: per dimension, the variance of the per-environment means of `z_L`,
//!   averaged over dimensions. The pooled mode averages within-environment
//!   variances instead.
//! - IR: confidences before and after intervention are histogrammed into 10
//!   uniform bins on `[0, 1]` with add-one smoothing; IR is
//!   `KL(original || intervened)` in nats.

use std::collections::BTreeMap;

use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::dataset::EnvironmentDataset;
use crate::representation::{to_matrix, AciaModel};
use crate::{Error, Result};

pub const EI_MAX_DIMS: usize = 8;
pub const IR_BINS: usize = 10;
pub const LABEL_BINS: usize = 8;
const CHUNK: usize = 2048;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LliMode {
    #[default]
    BetweenEnvMeans,
    PooledWithinEnv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Binning {
    pub ei_max_dims: usize,
    pub ei_dims_used: usize,
    pub ei_label_bins: Option<usize>,
    pub ir_bins: usize,
    pub ir_smoothing: f64,
    pub ir_direction: String,
    pub lli_mode: LliMode,
}

impl Binning {
    pub fn new(ei_dims_used: usize, regression: bool, lli_mode: LliMode) -> Self {
        Binning {
            ei_max_dims: EI_MAX_DIMS,
            ei_dims_used,
            ei_label_bins: regression.then_some(LABEL_BINS),
            ir_bins: IR_BINS,
            ir_smoothing: 1.0,
            ir_direction: "original||intervened".into(),
            lli_mode,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvMetrics {
    pub env: i64,
    pub n: usize,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub ei: f64,
    pub lli: f64,
    pub ir: f64,
    pub n: usize,
    pub family: String,
    pub binning: Binning,
    /// Regression only: mean Euclidean distance between predicted and true positions.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub position_error: Option<f64>,
    #[serde(default)]
    pub per_env: Vec<EnvMetrics>,
}

/// Outputs, `z_L` and `z_H` of every sample, in sample order.
pub struct Representations {
    pub z_l: Array2<f64>,
    pub z_h: Array2<f64>,
    pub output: Array2<f64>,
}

/// Forward a feature block (row-major `f32`) through the model in chunks.
pub fn forward_rows(model: &AciaModel, features: &[f32], dim: usize) -> Result<Representations> {
    let n = features.len().checked_div(dim).unwrap_or(0);
    let arch = &model.arch;
    let mut rep = Representations {
        z_l: Array2::zeros((0, arch.z_l_dim())),
        z_h: Array2::zeros((0, arch.z_h_dim())),
        output: Array2::zeros((0, arch.output_dim)),
    };
    for start in (0..n).step_by(CHUNK) {
        let end = (start + CHUNK).min(n);
        let c = model.forward(to_matrix(&features[start * dim..end * dim], dim).view())?;
        rep.z_l.append(Axis(0), c.z_l.view()).expect("widths agree");
        rep.z_h.append(Axis(0), c.z_h.view()).expect("widths agree");
        rep.output.append(Axis(0), c.output.view()).expect("widths agree");
    }
    Ok(rep)
}

fn check_head(model: &AciaModel, ds: &EnvironmentDataset) -> Result<()> {
    if model.arch.output_dim != ds.output_dim() || model.arch.input_dim != ds.feature_dim {
        return Err(Error::FamilyMismatch(format!(
            "model maps {} -> {}, dataset has {} features and {} targets",
            model.arch.input_dim,
            model.arch.output_dim,
            ds.feature_dim,
            ds.output_dim()
        )));
    }
    Ok(())
}

pub fn argmax(row: ndarray::ArrayView1<f64>) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Per-sample correctness (classification) or position error (regression).
pub fn sample_scores(output: ArrayView2<f64>, ds: &EnvironmentDataset) -> Result<Vec<f64>> {
    (0..ds.len())
        .map(|i| {
            if ds.family.is_regression() {
                Ok(position_error(output.row(i), ds.label_of(i)))
            } else {
                Ok((argmax(output.row(i)) == ds.class_of(i)?) as u8 as f64)
            }
        })
        .collect()
}

/// Mean over balls of the Euclidean distance between predicted and true positions.
pub fn position_error(pred: ndarray::ArrayView1<f64>, label: &[f64]) -> f64 {
    let balls = label.len() / 2;
    (0..balls)
        .map(|b| {
            let (dx, dy) = (pred[2 * b] - label[2 * b], pred[2 * b + 1] - label[2 * b + 1]);
            (dx * dx + dy * dy).sqrt()
        })
        .sum::<f64>()
        / balls as f64
}

/// Argmax match rate, or `1 - mean position error` for regression (clamped to `[0, 1]`).
pub fn accuracy(model: &AciaModel, ds: &EnvironmentDataset) -> Result<f64> {
    if ds.is_empty() {
        return Err(Error::EmptyDataset);
    }
    check_head(model, ds)?;
    let rep = forward_rows(model, &ds.features, ds.feature_dim)?;
    accuracy_from_scores(&sample_scores(rep.output.view(), ds)?, ds.family.is_regression())
}

pub fn accuracy_from_scores(scores: &[f64], regression: bool) -> Result<f64> {
    if scores.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mean = scores.iter().sum::<f64>() / scores.len() as f64;
    Ok(if regression { (1.0 - mean).clamp(0.0, 1.0) } else { mean })
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.total_cmp(b));
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Binary codes from a median split on the highest-variance dimensions.
/// Returns the codes and the number of dimensions used.
pub fn median_codes(z: ArrayView2<f64>, max_dims: usize) -> (Vec<u32>, usize) {
    let (n, d) = z.dim();
    if n == 0 {
        return (Vec::new(), 0);
    }
    let var = z.var_axis(Axis(0), 0.0);
    let mut dims: Vec<usize> = (0..d).collect();
    dims.sort_by(|&a, &b| var[b].total_cmp(&var[a]).then(a.cmp(&b)));
    dims.truncate(max_dims.min(d));
    let mut codes = vec![0u32; n];
    for (bit, &k) in dims.iter().enumerate() {
        let col = z.column(k);
        let m = median(&mut col.to_vec());
        for (c, &v) in codes.iter_mut().zip(col.iter()) {
            if v > m {
                *c |= 1 << bit;
            }
        }
    }
    (codes, dims.len())
}

/// Plug-in `sum_k freq(k) I(code; E | Y = k)` in nats.
pub fn conditional_mi(codes: &[u32], y: &[usize], e: &[usize]) -> f64 {
    let n = codes.len();
    if n == 0 {
        return 0.0;
    }
    let mut by_label: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for i in 0..n {
        by_label.entry(y[i]).or_default().push(i);
    }
    let mut total = 0.0;
    for rows in by_label.values() {
        let m = rows.len() as f64;
        let mut joint: BTreeMap<(u32, usize), f64> = BTreeMap::new();
        let mut pc: BTreeMap<u32, f64> = BTreeMap::new();
        let mut pe: BTreeMap<usize, f64> = BTreeMap::new();
        for &i in rows {
            *joint.entry((codes[i], e[i])).or_default() += 1.0;
            *pc.entry(codes[i]).or_default() += 1.0;
            *pe.entry(e[i]).or_default() += 1.0;
        }
        let mut mi = 0.0;
        for (&(c, env), &count) in &joint {
            mi += count / m * (count * m / (pc[&c] * pe[&env])).ln();
        }
        total += m / n as f64 * mi.max(0.0);
    }
    total
}

fn distinct(values: &[usize]) -> usize {
    let mut v = values.to_vec();
    v.sort_unstable();
    v.dedup();
    v.len()
}

/// EI of a representation matrix against class keys and environment positions.
pub fn env_independence(z_h: ArrayView2<f64>, y: &[usize], e: &[usize]) -> Result<f64> {
    if distinct(e) < 2 {
        return Err(Error::SingleEnvironment);
    }
    let (codes, _) = median_codes(z_h, EI_MAX_DIMS);
    Ok(conditional_mi(&codes, y, e))
}

/// Interior quantile edges splitting `values` into `n_bins` groups.
pub fn quantile_edges(values: &[f64], n_bins: usize) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    if v.is_empty() {
        return Vec::new();
    }
    (1..n_bins).map(|k| v[(k * v.len() / n_bins).min(v.len() - 1)]).collect()
}

pub fn bin_of(value: f64, edges: &[f64]) -> usize {
    edges.partition_point(|&edge| edge <= value)
}

/// Label groupings for a dataset: the class index, or one quantile-bin key
/// per coordinate for regression.
pub fn label_groupings(ds: &EnvironmentDataset, edges: Option<&[Vec<f64>]>) -> Result<Vec<Vec<usize>>> {
    if !ds.family.is_regression() {
        return Ok(vec![(0..ds.len()).map(|i| ds.class_of(i)).collect::<Result<_>>()?]);
    }
    let owned;
    let edges = match edges {
        Some(e) => e,
        None => {
            owned = coordinate_edges(ds);
            &owned
        }
    };
    Ok((0..ds.label_dim).map(|c| (0..ds.len()).map(|i| bin_of(ds.label_of(i)[c], &edges[c])).collect()).collect())
}

/// Per-coordinate quantile edges of a regression dataset's labels.
pub fn coordinate_edges(ds: &EnvironmentDataset) -> Vec<Vec<f64>> {
    (0..ds.label_dim)
        .map(|c| quantile_edges(&(0..ds.len()).map(|i| ds.label_of(i)[c]).collect::<Vec<_>>(), LABEL_BINS))
        .collect()
}

/// EI averaged over label groupings.
pub fn env_independence_grouped(z_h: ArrayView2<f64>, groupings: &[Vec<usize>], e: &[usize]) -> Result<(f64, usize)> {
    if distinct(e) < 2 {
        return Err(Error::SingleEnvironment);
    }
    let (codes, used) = median_codes(z_h, EI_MAX_DIMS);
    let total: f64 = groupings.iter().map(|y| conditional_mi(&codes, y, e)).sum();
    Ok((total / groupings.len().max(1) as f64, used))
}

/// LLI of a representation matrix given environment positions.
pub fn low_level_invariance(z_l: ArrayView2<f64>, e: &[usize], mode: LliMode) -> Result<f64> {
    let n_envs = distinct(e);
    if n_envs < 2 {
        return Err(Error::SingleEnvironment);
    }
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &env) in e.iter().enumerate() {
        groups.entry(env).or_default().push(i);
    }
    let mut keys: Vec<usize> = groups.keys().copied().collect();
    keys.sort_unstable();
    let d = z_l.ncols();
    if d == 0 {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for k in 0..d {
        let col = z_l.column(k);
        match mode {
            LliMode::BetweenEnvMeans => {
                let means: Vec<f64> =
                    keys.iter().map(|g| groups[g].iter().map(|&i| col[i]).sum::<f64>() / groups[g].len() as f64).collect();
                let mu = means.iter().sum::<f64>() / means.len() as f64;
                total += means.iter().map(|m| (m - mu) * (m - mu)).sum::<f64>() / means.len() as f64;
            }
            LliMode::PooledWithinEnv => {
                let mut v = 0.0;
                for g in &keys {
                    let rows = &groups[g];
                    let mu = rows.iter().map(|&i| col[i]).sum::<f64>() / rows.len() as f64;
                    v += rows.iter().map(|&i| (col[i] - mu) * (col[i] - mu)).sum::<f64>() / rows.len() as f64;
                }
                total += v / keys.len() as f64;
            }
        }
    }
    Ok(total / d as f64)
}

/// Add-one-smoothed 10-bin histogram of confidences in `[0, 1]`.
pub fn confidence_histogram(conf: &[f64]) -> Vec<f64> {
    let mut counts = [1.0; IR_BINS];
    for &c in conf {
        let b = ((c.clamp(0.0, 1.0) * IR_BINS as f64) as usize).min(IR_BINS - 1);
        counts[b] += 1.0;
    }
    let total: f64 = counts.iter().sum();
    counts.iter().map(|c| c / total).collect()
}

/// `KL(hist(original) || hist(intervened))` in nats.
pub fn intervention_robustness(original: &[f64], intervened: &[f64]) -> f64 {
    let (p, q) = (confidence_histogram(original), confidence_histogram(intervened));
    p.iter().zip(&q).map(|(a, b)| a * (a / b).ln()).sum::<f64>().max(0.0)
}

/// Confidence of each output row: the largest softmax probability, or
/// `exp(-||output - label||)` for regression.
pub fn confidences(output: ArrayView2<f64>, ds: &EnvironmentDataset) -> Vec<f64> {
    if ds.family.is_regression() {
        (0..output.nrows())
            .map(|i| {
                let d2: f64 = output.row(i).iter().zip(ds.label_of(i)).map(|(a, b)| (a - b) * (a - b)).sum();
                (-d2.sqrt()).exp()
            })
            .collect()
    } else {
        crate::objective::softmax(output).rows().into_iter().map(|r| r.fold(0.0, |m: f64, &v| m.max(v))).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn env_one_hot_code_gives_log_two() {
        let n = 1000;
        let e: Vec<usize> = (0..n).map(|i| i % 2).collect();
        let y: Vec<usize> = (0..n).map(|i| (i / 2) % 5).collect();
        let z = Array2::from_shape_fn((n, 2), |(i, k)| (e[i] == k) as u8 as f64);
        let ei = env_independence(z.view(), &y, &e).unwrap();
        assert!((ei - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn label_code_gives_zero() {
        let n = 1000;
        let e: Vec<usize> = (0..n).map(|i| i % 2).collect();
        let y: Vec<usize> = (0..n).map(|i| (i / 2) % 4).collect();
        let z = Array2::from_shape_fn((n, 3), |(i, k)| ((y[i] >> k) & 1) as f64);
        assert!(env_independence(z.view(), &y, &e).unwrap().abs() < 1e-12);
    }

    #[test]
    fn single_environment_errors() {
        let z = Array2::zeros((4, 2));
        assert!(matches!(env_independence(z.view(), &[0; 4], &[1; 4]), Err(Error::SingleEnvironment)));
        assert!(matches!(low_level_invariance(z.view(), &[1; 4], LliMode::default()), Err(Error::SingleEnvironment)));
    }

    #[test]
    fn lli_closed_forms() {
        let z = array![[0.0], [0.0], [2.0], [2.0]];
        let e = [0, 0, 1, 1];
        assert!((low_level_invariance(z.view(), &e, LliMode::BetweenEnvMeans).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(low_level_invariance(z.view(), &e, LliMode::PooledWithinEnv).unwrap(), 0.0);
        let same = array![[1.0, 3.0], [1.0, 3.0]];
        assert_eq!(low_level_invariance(same.view(), &[0, 1], LliMode::BetweenEnvMeans).unwrap(), 0.0);
        let swapped = [1, 1, 0, 0];
        assert_eq!(
            low_level_invariance(z.view(), &swapped, LliMode::BetweenEnvMeans).unwrap(),
            low_level_invariance(z.view(), &e, LliMode::BetweenEnvMeans).unwrap()
        );
    }

    #[test]
    fn ir_of_identical_confidences_is_zero() {
        let c: Vec<f64> = (0..100).map(|i| i as f64 / 100.0).collect();
        assert_eq!(intervention_robustness(&c, &c), 0.0);
    }

    #[test]
    fn ir_of_disjoint_bins_is_large() {
        let n = 1000;
        let high = vec![0.99; n];
        let mid = vec![0.45; n];
        let ir = intervention_robustness(&high, &mid);
        // p = (n+1)/(n+10) in the top bin, q = 1/(n+10) there.
        let p_top = (n as f64 + 1.0) / (n as f64 + 10.0);
        let p_low = 1.0 / (n as f64 + 10.0);
        let expected = p_top * (p_top / p_low).ln() + p_low * (p_low / p_top).ln();
        assert!((ir - expected).abs() < 1e-12);
        assert!(ir > 1.0);
    }

    #[test]
    fn quantile_bins_partition() {
        let v: Vec<f64> = (0..80).map(|i| i as f64).collect();
        let edges = quantile_edges(&v, 8);
        assert_eq!(edges.len(), 7);
        let mut counts = [0; 8];
        v.iter().for_each(|&x| counts[bin_of(x, &edges)] += 1);
        assert_eq!(counts, [10; 8]);
    }
}
