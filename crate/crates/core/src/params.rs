//! Trainable parameters of the refiner and their checkpoint format.

use std::collections::BTreeMap;
use std::path::Path;

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{EdgeKind, NodeClass, STATS_WIDTH};

/// Number of graph-convolution blocks; the last one reads every earlier output.
pub const BLOCKS: usize = 4;

/// Layer widths.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDims {
    /// Global descriptor width `D`.
    pub descriptor: usize,
    /// Hidden width `h` of every block output.
    pub hidden: usize,
    /// Query/key width of the attention projections.
    pub attention: usize,
}

impl Default for ModelDims {
    fn default() -> Self {
        Self {
            descriptor: 64,
            hidden: 64,
            attention: 32,
        }
    }
}

impl ModelDims {
    pub fn validate(&self) -> Result<()> {
        if self.descriptor == 0 || self.hidden == 0 || self.attention == 0 {
            return Err(Error::InvalidParameter(format!(
                "all widths must be positive: {self:?}"
            )));
        }
        Ok(())
    }

    /// Node feature width `3 + D`.
    pub fn node_width(&self) -> usize {
        3 + self.descriptor
    }

    /// Width of the features entering block `k` (0-based).
    pub fn block_input_width(&self, k: usize) -> usize {
        match k {
            0 => self.node_width(),
            k if k + 1 < BLOCKS => self.hidden,
            _ => self.node_width() + (BLOCKS - 1) * self.hidden,
        }
    }
}

/// `y = x · weight + bias`
#[derive(Debug, Clone, PartialEq)]
pub struct Affine {
    pub weight: Array2<f64>,
    pub bias: Array2<f64>,
}

impl Affine {
    fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            weight: Array2::zeros((inputs, outputs)),
            bias: Array2::zeros((1, outputs)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionParams {
    pub query: Array2<f64>,
    pub key: Array2<f64>,
}

/// Everything the optimizer updates.
#[derive(Debug, Clone, PartialEq)]
pub struct RefinerParams {
    pub dims: ModelDims,
    /// Descriptor encoders, indexed by [`NodeClass::index`].
    pub encoder: [Affine; 2],
    /// Attention projections, indexed by [`EdgeKind::index`].
    pub attention: [AttentionParams; 4],
    /// Per block, per class update maps.
    pub blocks: Vec<[Affine; 2]>,
    /// Displacement heads (`h x 3`), per class.
    pub heads: [Array2<f64>; 2],
}

/// Standard deviations used by [`RefinerParams::init`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InitScales {
    pub encoder: f64,
    pub attention: f64,
    /// Multiplies `1/sqrt(fan_in)` for block weights.
    pub block_gain: f64,
    /// Zero gives an identity refiner at initialization.
    pub head: f64,
}

impl Default for InitScales {
    fn default() -> Self {
        Self {
            encoder: 0.01,
            attention: 0.02,
            block_gain: 0.25,
            head: 0.0,
        }
    }
}

impl RefinerParams {
    pub fn zeros(dims: ModelDims) -> Self {
        let nw = dims.node_width();
        let att = || AttentionParams {
            query: Array2::zeros((nw, dims.attention)),
            key: Array2::zeros((nw, dims.attention)),
        };
        let blocks = (0..BLOCKS)
            .map(|k| {
                let input = 2 * dims.block_input_width(k);
                [Affine::zeros(input, dims.hidden), Affine::zeros(input, dims.hidden)]
            })
            .collect();
        Self {
            dims,
            encoder: [
                Affine::zeros(STATS_WIDTH, dims.descriptor),
                Affine::zeros(STATS_WIDTH, dims.descriptor),
            ],
            attention: [att(), att(), att(), att()],
            blocks,
            heads: [Array2::zeros((dims.hidden, 3)), Array2::zeros((dims.hidden, 3))],
        }
    }

    /// Gaussian initialization, deterministic in `seed`. Biases start at zero.
    pub fn init(dims: ModelDims, seed: u64, scales: InitScales) -> Result<Self> {
        dims.validate()?;
        let mut p = Self::zeros(dims);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut fill = |m: &mut Array2<f64>, std: f64| {
            if std > 0.0 {
                let dist = Normal::new(0.0, std).expect("positive std");
                m.mapv_inplace(|_| dist.sample(&mut rng));
            }
        };
        for e in &mut p.encoder {
            fill(&mut e.weight, scales.encoder);
        }
        for a in &mut p.attention {
            fill(&mut a.query, scales.attention);
            fill(&mut a.key, scales.attention);
        }
        for block in &mut p.blocks {
            for u in block.iter_mut() {
                let std = scales.block_gain / (u.weight.nrows() as f64).sqrt();
                fill(&mut u.weight, std);
            }
        }
        for h in &mut p.heads {
            fill(h, scales.head);
        }
        Ok(p)
    }

    /// Named tensors in a fixed canonical order.
    pub fn tensors(&self) -> Vec<(String, &Array2<f64>)> {
        let mut out = Vec::new();
        for class in NodeClass::ALL {
            let e = &self.encoder[class.index()];
            out.push((format!("encoder.{}.weight", class.tag()), &e.weight));
            out.push((format!("encoder.{}.bias", class.tag()), &e.bias));
        }
        for kind in EdgeKind::ALL {
            let a = &self.attention[kind.index()];
            out.push((format!("attention.{}.query", kind.tag()), &a.query));
            out.push((format!("attention.{}.key", kind.tag()), &a.key));
        }
        for (k, block) in self.blocks.iter().enumerate() {
            for class in NodeClass::ALL {
                let u = &block[class.index()];
                out.push((format!("block{}.{}.weight", k + 1, class.tag()), &u.weight));
                out.push((format!("block{}.{}.bias", k + 1, class.tag()), &u.bias));
            }
        }
        for class in NodeClass::ALL {
            out.push((format!("head.{}", class.tag()), &self.heads[class.index()]));
        }
        out
    }

    /// Mutable tensors in the same order as [`RefinerParams::tensors`].
    pub fn tensors_mut(&mut self) -> Vec<&mut Array2<f64>> {
        let mut out: Vec<&mut Array2<f64>> = Vec::new();
        let [eh, eo] = &mut self.encoder;
        for e in [eh, eo] {
            out.push(&mut e.weight);
            out.push(&mut e.bias);
        }
        for a in &mut self.attention {
            out.push(&mut a.query);
            out.push(&mut a.key);
        }
        for block in &mut self.blocks {
            for u in block.iter_mut() {
                out.push(&mut u.weight);
                out.push(&mut u.bias);
            }
        }
        let [hh, ho] = &mut self.heads;
        out.push(hh);
        out.push(ho);
        out
    }

    pub fn shapes(&self) -> Vec<(usize, usize)> {
        self.tensors().into_iter().map(|(_, t)| t.dim()).collect()
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    /// Rebuilds parameters from named tensors, checking every shape against `dims`.
    pub fn from_named(dims: ModelDims, mut named: BTreeMap<String, Array2<f64>>) -> Result<Self> {
        dims.validate()?;
        let mut p = Self::zeros(dims);
        let names: Vec<(String, (usize, usize))> = p.tensors().into_iter().map(|(n, t)| (n, t.dim())).collect();
        for ((name, expected), slot) in names.into_iter().zip(p.tensors_mut()) {
            let t = named
                .remove(&name)
                .ok_or_else(|| Error::InvalidParameter(format!("checkpoint is missing `{name}`")))?;
            if t.dim() != expected {
                return Err(Error::ShapeMismatch {
                    name,
                    expected,
                    found: t.dim(),
                });
            }
            *slot = t;
        }
        if let Some(extra) = named.keys().next() {
            return Err(Error::InvalidParameter(format!(
                "unexpected tensor `{extra}` in checkpoint"
            )));
        }
        Ok(p)
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            dims: self.dims,
            tensors: self
                .tensors()
                .into_iter()
                .map(|(name, t)| NamedTensor {
                    name,
                    shape: [t.nrows(), t.ncols()],
                    data: t.iter().copied().collect(),
                })
                .collect(),
        }
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        if ckpt.format != CHECKPOINT_FORMAT {
            return Err(Error::InvalidParameter(format!(
                "unknown checkpoint format `{}`",
                ckpt.format
            )));
        }
        let mut named = BTreeMap::new();
        for t in &ckpt.tensors {
            let arr = Array2::from_shape_vec((t.shape[0], t.shape[1]), t.data.clone()).map_err(|_| {
                Error::InvalidParameter(format!(
                    "tensor `{}` has {} values for shape {:?}",
                    t.name,
                    t.data.len(),
                    t.shape
                ))
            })?;
            named.insert(t.name.clone(), arr);
        }
        Self::from_named(ckpt.dims, named)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string(&self.to_checkpoint()).map_err(|e| Error::json(path, e))?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let ckpt: Checkpoint = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
        Self::from_checkpoint(&ckpt)
    }
}

pub const CHECKPOINT_FORMAT: &str = "hoi-refine-checkpoint-v1";

/// JSON checkpoint: widths plus row-major named tensors with shape headers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub dims: ModelDims,
    pub tensors: Vec<NamedTensor>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedTensor {
    pub name: String,
    pub shape: [usize; 2],
    pub data: Vec<f64>,
}
