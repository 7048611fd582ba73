//! Run configuration: optional JSON file, then command-line overrides.

use std::path::Path;

use anyhow::{bail, Context, Result};
use hoi_refine::params::InitScales;
use hoi_refine::{GraphConfig, ModelDims, NoiseParams, SceneParams, TrainConfig};
use serde::{Deserialize, Serialize};

/// Every field is optional; unset fields keep the library defaults.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub count: Option<usize>,
    pub noise: Option<NoiseParams>,
    pub object_resolution: Option<usize>,
    pub epochs: Option<usize>,
    pub lr: Option<f64>,
    pub lr_drop_epoch: Option<usize>,
    pub lr_after_drop: Option<f64>,
    pub gamma: Option<f64>,
    pub use_common: Option<bool>,
    pub use_attention: Option<bool>,
    pub dims: Option<ModelDims>,
    pub init: Option<InitScales>,
    pub surface_samples: Option<usize>,
    pub threads: Option<usize>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }
}

/// Flags shared by the commands that build graphs.
#[derive(Debug, Clone, Copy, Default)]
pub struct GraphFlags {
    pub gamma: Option<f64>,
    pub no_ec: bool,
    pub no_ea: bool,
}

pub fn graph_config(file: &FileConfig, flags: GraphFlags) -> Result<GraphConfig> {
    let mut g = GraphConfig::default();
    if let Some(v) = file.gamma {
        g.gamma = v;
    }
    if let Some(v) = file.use_common {
        g.use_common = v;
    }
    if let Some(v) = file.use_attention {
        g.use_attention = v;
    }
    if let Some(v) = flags.gamma {
        g.gamma = v;
    }
    g.use_common &= !flags.no_ec;
    g.use_attention &= !flags.no_ea;
    g.validate()?;
    Ok(g)
}

pub fn scene_params(
    file: &FileConfig,
    vertex_sigma: Option<f64>,
    translation: Option<f64>,
    rotation_deg: Option<f64>,
) -> Result<SceneParams> {
    let mut p = SceneParams::default();
    if let Some(n) = file.noise {
        p.noise = n;
    }
    if let Some(r) = file.object_resolution {
        p.object_resolution = r;
    }
    if let Some(v) = vertex_sigma {
        p.noise.vertex_sigma = v;
    }
    if let Some(v) = translation {
        p.noise.translation = v;
    }
    if let Some(v) = rotation_deg {
        p.noise.rotation_deg = v;
    }
    p.validate()?;
    Ok(p)
}

#[derive(Debug, Clone, Copy, Default)]
pub struct TrainFlags {
    pub seed: Option<u64>,
    pub epochs: Option<usize>,
    pub lr: Option<f64>,
    pub lr_drop_epoch: Option<usize>,
    pub graph: GraphFlags,
}

pub fn train_config(file: &FileConfig, flags: TrainFlags) -> Result<TrainConfig> {
    let mut c = TrainConfig {
        graph: graph_config(file, flags.graph)?,
        ..TrainConfig::default()
    };
    c.seed = flags.seed.or(file.seed).unwrap_or(c.seed);
    c.epochs = flags.epochs.or(file.epochs).unwrap_or(c.epochs);
    c.lr = flags.lr.or(file.lr).unwrap_or(c.lr);
    c.lr_drop_epoch = flags.lr_drop_epoch.or(file.lr_drop_epoch).or(c.lr_drop_epoch);
    c.lr_after_drop = file.lr_after_drop.unwrap_or(c.lr_after_drop);
    c.dims = file.dims.unwrap_or(c.dims);
    c.init = file.init.unwrap_or(c.init);
    c.surface_samples = file.surface_samples.unwrap_or(c.surface_samples);
    if c.epochs == 0 {
        bail!("epochs must be ≥ 1");
    }
    c.validate()?;
    Ok(c)
}
