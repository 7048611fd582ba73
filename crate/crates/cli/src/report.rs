//! Output files. Nothing here depends on wall-clock time or absolute paths,
//! so reruns are byte-identical.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use anyhow::{Context, Result};
use hoi_refine::graph::KindSummary;
use hoi_refine::train::{EpochRecord, SceneEvaluation};
use hoi_refine::{EdgeKind, GraphConfig, MetricsReport, TrainConfig};
use serde::Serialize;

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

pub fn write_loss_csv(path: &Path, curve: &[EpochRecord]) -> Result<()> {
    let mut s = String::from("epoch,loss_total,loss_hand,loss_obj\n");
    for r in curve {
        writeln!(s, "{},{},{},{}", r.epoch, r.loss_total, r.loss_hand, r.loss_obj)?;
    }
    std::fs::write(path, s).with_context(|| format!("writing {}", path.display()))
}

#[derive(Debug, Serialize)]
pub struct SceneRecord {
    pub scene: String,
    #[serde(flatten)]
    pub metrics: MetricsReport,
}

#[derive(Debug, Serialize)]
pub struct MetricsBlock {
    pub scenes: Vec<SceneRecord>,
    pub mean: MetricsReport,
}

impl MetricsBlock {
    fn new(names: &[String], reports: impl Iterator<Item = MetricsReport>) -> Self {
        let scenes: Vec<SceneRecord> = names
            .iter()
            .zip(reports)
            .map(|(n, m)| SceneRecord {
                scene: n.clone(),
                metrics: m,
            })
            .collect();
        let all: Vec<MetricsReport> = scenes.iter().map(|s| s.metrics).collect();
        Self {
            mean: MetricsReport::mean(&all),
            scenes,
        }
    }
}

/// Paired metrics for the initial and refined meshes.
#[derive(Debug, Serialize)]
pub struct MetricsFile {
    pub seed: u64,
    pub initial: MetricsBlock,
    pub refine: MetricsBlock,
}

impl MetricsFile {
    pub fn new(seed: u64, names: &[String], evals: &[SceneEvaluation]) -> Self {
        Self {
            seed,
            initial: MetricsBlock::new(names, evals.iter().map(|e| e.initial)),
            refine: MetricsBlock::new(names, evals.iter().map(|e| e.refine)),
        }
    }

    pub fn print(&self) {
        println!(
            "{:<8} {:>10} {:>10} {:>10} {:>10} {:>10}",
            "", "joint mm", "mesh mm", "object", "pen mm", "vol cm3"
        );
        for (label, m) in [("initial", self.initial.mean), ("refine", self.refine.mean)] {
            let m = m.rounded();
            println!(
                "{label:<8} {:>10.2} {:>10.2} {:>10.2} {:>10.2} {:>10.2}",
                m.hand_joint_error_mm, m.hand_mesh_error_mm, m.object_error_mm, m.max_pen_mm, m.inter_vol_cm3
            );
        }
    }
}

#[derive(Debug, Serialize)]
struct GraphsFile<'a> {
    config: &'a GraphConfig,
    totals: BTreeMap<EdgeKind, KindSummary>,
    scenes: Vec<GraphScene<'a>>,
}

#[derive(Debug, Serialize)]
struct GraphScene<'a> {
    scene: &'a str,
    kinds: &'a BTreeMap<EdgeKind, KindSummary>,
}

/// Edge counts by kind and origin, per scene and summed.
pub fn write_graphs(path: &Path, config: &GraphConfig, names: &[String], evals: &[SceneEvaluation]) -> Result<()> {
    let mut totals: BTreeMap<EdgeKind, KindSummary> = BTreeMap::new();
    for e in evals {
        for (k, s) in &e.graphs {
            let t = totals.entry(*k).or_insert(KindSummary {
                common: 0,
                attention: 0,
                merged: 0,
            });
            t.common += s.common;
            t.attention += s.attention;
            t.merged += s.merged;
        }
    }
    let scenes = names
        .iter()
        .zip(evals)
        .map(|(n, e)| GraphScene {
            scene: n,
            kinds: &e.graphs,
        })
        .collect();
    write_json(path, &GraphsFile { config, totals, scenes })
}

/// The resolved configuration of a run, seed included.
#[derive(Debug, Serialize)]
pub struct RunRecord<'a> {
    pub command: &'static str,
    pub seed: u64,
    pub dataset_seed: u64,
    pub config: &'a TrainConfig,
}

impl<'a> RunRecord<'a> {
    pub fn train(config: &'a TrainConfig, dataset_seed: u64) -> Self {
        Self {
            command: "train",
            seed: config.seed,
            dataset_seed,
            config,
        }
    }
}
