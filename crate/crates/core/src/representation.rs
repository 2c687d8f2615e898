//! The two-level model `f = C . phi_H . phi_L` as dense rectifier layers.
//!
//! `phi_L` maps inputs to the low-level representation `z_L`, `phi_H` maps
//! `z_L` to the high-level representation `z_H`, and the linear head `C` maps
//! `z_H` to logits (or coordinates for regression). Every layer of `phi_L` and
//! `phi_H` is followed by a rectifier whose derivative at 0 is taken as 0.

use std::io::{Read, Write};

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::Family;
use crate::{rng, Error, Result};

const CKPT_MAGIC: &[u8; 8] = b"ACIACK1\n";
const INIT_STREAM: u64 = 0x1417_0000;

/// Layer widths. Empty `phi_l` or `phi_h` makes that stage the identity.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Arch {
    pub input_dim: usize,
    pub phi_l: Vec<usize>,
    pub phi_h: Vec<usize>,
    pub output_dim: usize,
}

impl Arch {
    /// Defaults: `z_L` of 32 for vector families and 256 for grid families,
    /// two 128-wide abstraction layers.
    pub fn for_family(family: Family, input_dim: usize, output_dim: usize) -> Self {
        let phi_l = if family.is_grid() { vec![256, 256] } else { vec![128, 32] };
        Arch { input_dim, phi_l, phi_h: vec![128, 128], output_dim }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.output_dim == 0 || self.phi_l.iter().chain(&self.phi_h).any(|&d| d == 0) {
            return Err(Error::BadDims(format!("all layer widths must be positive: {self:?}")));
        }
        Ok(())
    }

    pub fn z_l_dim(&self) -> usize {
        self.phi_l.last().copied().unwrap_or(self.input_dim)
    }

    pub fn z_h_dim(&self) -> usize {
        self.phi_h.last().copied().unwrap_or_else(|| self.z_l_dim())
    }
}

/// `y = x W + b` with `W` of shape `(in, out)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

impl Dense {
    pub fn zeros(d_in: usize, d_out: usize) -> Self {
        Dense { w: Array2::zeros((d_in, d_out)), b: Array1::zeros(d_out) }
    }

    fn apply(&self, x: &ArrayView2<f64>) -> Array2<f64> {
        x.dot(&self.w) + &self.b
    }
}

/// Parameters of all three stages. Also used for gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSet {
    pub phi_l: Vec<Dense>,
    pub phi_h: Vec<Dense>,
    pub head: Dense,
}

/// Per-parameter partial derivatives, shaped like the model parameters.
pub type Gradients = ParamSet;

fn chain(d_in: usize, widths: &[usize]) -> Vec<(usize, usize)> {
    let mut prev = d_in;
    widths
        .iter()
        .map(|&w| {
            let pair = (prev, w);
            prev = w;
            pair
        })
        .collect()
}

impl ParamSet {
    pub fn zeros(arch: &Arch) -> Self {
        ParamSet {
            phi_l: chain(arch.input_dim, &arch.phi_l).into_iter().map(|(i, o)| Dense::zeros(i, o)).collect(),
            phi_h: chain(arch.z_l_dim(), &arch.phi_h).into_iter().map(|(i, o)| Dense::zeros(i, o)).collect(),
            head: Dense::zeros(arch.z_h_dim(), arch.output_dim),
        }
    }

    pub fn zeros_like(&self) -> Self {
        let z = |d: &Dense| Dense { w: Array2::zeros(d.w.raw_dim()), b: Array1::zeros(d.b.raw_dim()) };
        ParamSet { phi_l: self.phi_l.iter().map(z).collect(), phi_h: self.phi_h.iter().map(z).collect(), head: z(&self.head) }
    }

    pub fn layers(&self) -> impl Iterator<Item = &Dense> {
        self.phi_l.iter().chain(&self.phi_h).chain(std::iter::once(&self.head))
    }

    pub fn layers_mut(&mut self) -> impl Iterator<Item = &mut Dense> {
        self.phi_l.iter_mut().chain(self.phi_h.iter_mut()).chain(std::iter::once(&mut self.head))
    }

    pub fn n_params(&self) -> usize {
        self.layers().map(|d| d.w.len() + d.b.len()).sum()
    }

    /// All parameters in a fixed order: per layer, weights row-major then biases.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_params());
        for d in self.layers() {
            out.extend(d.w.iter());
            out.extend(d.b.iter());
        }
        out
    }

    pub fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.n_params() {
            return Err(Error::DimMismatch { expected: self.n_params(), got: flat.len() });
        }
        let mut it = flat.iter();
        for d in self.layers_mut() {
            d.w.iter_mut().chain(d.b.iter_mut()).for_each(|v| *v = *it.next().expect("length checked"));
        }
        Ok(())
    }

    /// `self += scale * other`.
    pub fn add_scaled(&mut self, other: &ParamSet, scale: f64) {
        for (a, b) in self.layers_mut().zip(other.layers()) {
            a.w.scaled_add(scale, &b.w);
            a.b.scaled_add(scale, &b.b);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.layers().all(|d| d.w.iter().chain(d.b.iter()).all(|v| v.is_finite()))
    }

    pub fn max_abs(&self) -> f64 {
        self.layers().flat_map(|d| d.w.iter().chain(d.b.iter())).fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Intermediate values of a forward pass, kept for backpropagation.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub input: Array2<f64>,
    /// Pre-activations of each `phi_L` then each `phi_H` layer.
    pre: Vec<Array2<f64>>,
    /// Inputs of each `phi_L` layer, each `phi_H` layer and the head.
    acts: Vec<Array2<f64>>,
    pub z_l: Array2<f64>,
    pub z_h: Array2<f64>,
    pub output: Array2<f64>,
}

impl ForwardCache {
    pub fn pre_activations(&self) -> &[Array2<f64>] {
        &self.pre
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AciaModel {
    pub arch: Arch,
    pub params: ParamSet,
    pub init_seed: u64,
}

fn relu(mut a: Array2<f64>) -> Array2<f64> {
    a.mapv_inplace(|v| if v > 0.0 { v } else { 0.0 });
    a
}

/// Row-major `f32` rows as an `f64` matrix.
pub fn to_matrix(rows: &[f32], dim: usize) -> Array2<f64> {
    let n = rows.len().checked_div(dim).unwrap_or(0);
    Array2::from_shape_vec((n, dim), rows.iter().map(|&v| v as f64).collect()).expect("rows divide evenly")
}

impl AciaModel {
    /// Fan-in scaled uniform initialisation `U(-sqrt(6 / fan_in), sqrt(6 / fan_in))`,
    /// whose standard deviation is `sqrt(2 / fan_in)`. Biases start at zero.
    pub fn init(arch: &Arch, seed: u64) -> Result<Self> {
        arch.validate()?;
        let mut params = ParamSet::zeros(arch);
        for (k, layer) in params.layers_mut().enumerate() {
            let mut r = rng::rng_for(seed, INIT_STREAM, k as u64);
            let bound = (6.0 / layer.w.nrows() as f64).sqrt();
            layer.w.iter_mut().for_each(|v| *v = r.gen_range(-bound..bound));
        }
        Ok(AciaModel { arch: arch.clone(), params, init_seed: seed })
    }

    /// Model with every parameter zero.
    pub fn zeros(arch: &Arch) -> Result<Self> {
        arch.validate()?;
        Ok(AciaModel { arch: arch.clone(), params: ParamSet::zeros(arch), init_seed: 0 })
    }

    pub fn forward(&self, x: ArrayView2<f64>) -> Result<ForwardCache> {
        if x.ncols() != self.arch.input_dim {
            return Err(Error::DimMismatch { expected: self.arch.input_dim, got: x.ncols() });
        }
        let mut pre = Vec::new();
        let mut acts = Vec::new();
        let mut cur = x.to_owned();
        for layer in &self.params.phi_l {
            let p = layer.apply(&cur.view());
            acts.push(cur);
            cur = relu(p.clone());
            pre.push(p);
        }
        let z_l = cur.clone();
        for layer in &self.params.phi_h {
            let p = layer.apply(&cur.view());
            acts.push(cur);
            cur = relu(p.clone());
            pre.push(p);
        }
        let z_h = cur.clone();
        let output = self.params.head.apply(&cur.view());
        acts.push(cur);
        Ok(ForwardCache { input: x.to_owned(), pre, acts, z_l, z_h, output })
    }

    /// Outputs only.
    pub fn predict(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        Ok(self.forward(x)?.output)
    }

    /// Backpropagate upstream gradients on the output and, optionally, on `z_H`
    /// and `z_L`.
    pub fn backward(
        &self,
        cache: &ForwardCache,
        d_output: ArrayView2<f64>,
        d_zh: Option<ArrayView2<f64>>,
        d_zl: Option<ArrayView2<f64>>,
    ) -> Gradients {
        let mut grads = self.params.zeros_like();
        let n_l = self.params.phi_l.len();
        let n_layers = n_l + self.params.phi_h.len();

        let head_in = &cache.acts[n_layers];
        grads.head.w = head_in.t().dot(&d_output);
        grads.head.b = d_output.sum_axis(Axis(0));
        let mut delta = d_output.dot(&self.params.head.w.t());
        if let Some(g) = d_zh {
            delta += &g;
        }
        for k in (0..n_layers).rev() {
            if k + 1 == n_l {
                if let Some(g) = d_zl {
                    delta += &g;
                }
            }
            let layer = if k < n_l { &self.params.phi_l[k] } else { &self.params.phi_h[k - n_l] };
            ndarray::Zip::from(&mut delta).and(&cache.pre[k]).for_each(|d, &p| {
                if p <= 0.0 {
                    *d = 0.0
                }
            });
            let g = if k < n_l { &mut grads.phi_l[k] } else { &mut grads.phi_h[k - n_l] };
            g.w = cache.acts[k].t().dot(&delta);
            g.b = delta.sum_axis(Axis(0));
            delta = delta.dot(&layer.w.t());
        }
        grads
    }

    /// Checkpoint: magic bytes, `u64` header length, JSON header, then every
    /// parameter as little-endian `f32` in [`ParamSet::to_flat`] order.
    pub fn write_checkpoint<W: Write>(&self, mut w: W, step: usize, meta: serde_json::Value) -> Result<()> {
        let header = CheckpointHeader {
            arch: self.arch.clone(),
            init_seed: self.init_seed,
            step,
            n_params: self.params.n_params(),
            meta,
        };
        let json = serde_json::to_vec(&header)?;
        w.write_all(CKPT_MAGIC)?;
        w.write_all(&(json.len() as u64).to_le_bytes())?;
        w.write_all(&json)?;
        let blob: Vec<u8> = self.params.to_flat().iter().flat_map(|&v| (v as f32).to_le_bytes()).collect();
        w.write_all(&blob)?;
        Ok(())
    }

    pub fn read_checkpoint<R: Read>(mut r: R) -> Result<(Self, CheckpointHeader)> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(|e| Error::Format(format!("truncated checkpoint: {e}")))?;
        if &magic != CKPT_MAGIC {
            return Err(Error::Format("not a checkpoint file".into()));
        }
        let mut len = [0u8; 8];
        r.read_exact(&mut len).map_err(|e| Error::Format(format!("truncated checkpoint: {e}")))?;
        let len = u64::from_le_bytes(len) as usize;
        if len > 1 << 30 {
            return Err(Error::Format("checkpoint header is implausibly large".into()));
        }
        let mut json = vec![0u8; len];
        r.read_exact(&mut json).map_err(|e| Error::Format(format!("truncated checkpoint: {e}")))?;
        let header: CheckpointHeader = serde_json::from_slice(&json)?;
        let mut model = AciaModel::zeros(&header.arch)?;
        model.init_seed = header.init_seed;
        if header.n_params != model.params.n_params() {
            return Err(Error::Format("parameter count disagrees with architecture".into()));
        }
        let mut blob = Vec::new();
        r.read_to_end(&mut blob)?;
        if blob.len() != 4 * header.n_params {
            return Err(Error::Format(format!("expected {} parameter bytes, found {}", 4 * header.n_params, blob.len())));
        }
        let flat: Vec<f64> = blob.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64).collect();
        model.params.set_flat(&flat)?;
        if !model.params.is_finite() {
            return Err(Error::Format("checkpoint holds non-finite parameters".into()));
        }
        Ok((model, header))
    }

    /// Round every parameter through `f32`, as a checkpoint would.
    pub fn quantized(&self) -> Self {
        let mut out = self.clone();
        let flat: Vec<f64> = self.params.to_flat().iter().map(|&v| v as f32 as f64).collect();
        out.params.set_flat(&flat).expect("same shape");
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub arch: Arch,
    pub init_seed: u64,
    pub step: usize,
    pub n_params: usize,
    #[serde(default)]
    pub meta: serde_json::Value,
}
