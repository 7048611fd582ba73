//! Full-batch training, scene evaluation, and the end-to-end gradient check.

use nalgebra::{Point3, Vector3};
use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autodiff::gradcheck::{directional_check, DirectionalReport};
use crate::autodiff::{AdamConfig, AdamState, Fault, Tape};
use crate::error::{Error, Result};
use crate::graph::{build_final_graphs, EdgeKind, GraphConfig, GraphInputs, KindSummary};
use crate::losses::{refine_loss_on_tape, LossBreakdown, LossTargets, SURFACE_SAMPLES};
use crate::mesh::{Mesh, SurfaceSample};
use crate::metrics::{evaluate, MetricsReport};
use crate::params::{InitScales, ModelDims, RefinerParams};
use crate::refine::{forward_scene, refine, ParamVars};
use crate::synth::{
    make_box, perturb_mesh, GraspScene, HandPose, JointRegressor, NoiseParams, ObjectKind, SceneMeta, SceneParams,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub seed: u64,
    pub epochs: usize,
    pub lr: f64,
    /// 1-based epoch from which `lr_after_drop` applies.
    pub lr_drop_epoch: Option<usize>,
    pub lr_after_drop: f64,
    pub graph: GraphConfig,
    pub dims: ModelDims,
    pub init: InitScales,
    pub surface_samples: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            epochs: 200,
            lr: 1e-4,
            lr_drop_epoch: None,
            lr_after_drop: 1e-5,
            graph: GraphConfig::default(),
            dims: ModelDims::default(),
            init: InitScales::default(),
            surface_samples: SURFACE_SAMPLES,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.graph.validate()?;
        self.dims.validate()?;
        let ok = |v: f64| v.is_finite() && v >= 0.0;
        if !ok(self.lr) || !ok(self.lr_after_drop) {
            return Err(Error::InvalidParameter(format!(
                "learning rates must be finite and non-negative: {} / {}",
                self.lr, self.lr_after_drop
            )));
        }
        if self.surface_samples == 0 {
            return Err(Error::InvalidParameter("surface_samples must be ≥ 1".into()));
        }
        if self.lr_drop_epoch == Some(0) {
            return Err(Error::InvalidParameter("lr_drop_epoch is 1-based".into()));
        }
        Ok(())
    }

    pub fn lr_at(&self, epoch: usize) -> f64 {
        match self.lr_drop_epoch {
            Some(d) if epoch >= d => self.lr_after_drop,
            _ => self.lr,
        }
    }
}

/// One row of the loss curve; losses are scene means before that epoch's step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss_total: f64,
    pub loss_hand: f64,
    pub loss_obj: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: RefinerParams,
    pub curve: Vec<EpochRecord>,
}

/// The fixed object surface sample of a scene.
pub fn scene_sample(scene: &GraspScene, count: usize) -> Result<SurfaceSample> {
    SurfaceSample::draw(&scene.obj_gt, count, scene.meta.seed)
}

/// Parameter-independent per-scene data.
#[derive(Debug, Clone)]
pub struct PreparedScene {
    pub inputs: GraphInputs,
    pub targets: LossTargets,
}

impl PreparedScene {
    pub fn new(scene: &GraspScene, surface_samples: usize) -> Result<Self> {
        scene.validate()?;
        let sample = scene_sample(scene, surface_samples)?;
        Ok(Self {
            inputs: GraphInputs::new(&scene.hand_init, &scene.obj_init, &scene.contact_indices)?,
            targets: LossTargets::new(&scene.hand_gt, &scene.obj_gt, &scene.joint_regressor, &sample)?,
        })
    }
}

/// Loss of one scene and its gradient for every tensor, in
/// [`RefinerParams::tensors`] order.
pub fn scene_gradient(
    params: &RefinerParams,
    scene: &PreparedScene,
    graph: &GraphConfig,
    fault: Option<Fault>,
) -> Result<(LossBreakdown, Vec<Array2<f64>>)> {
    let mut tape = Tape::new();
    if let Some(f) = fault {
        tape.inject_fault(f);
    }
    let pv = ParamVars::record(&mut tape, params, true);
    let fwd = forward_scene(&mut tape, &pv, &scene.inputs, graph)?;
    let loss = refine_loss_on_tape(&mut tape, fwd.refined[0], fwd.refined[1], &scene.targets)?;
    let grads = tape.backward(loss.total)?;
    let g = pv
        .all()
        .into_iter()
        .zip(params.shapes())
        .map(|(v, shape)| grads.get_or_zeros(v, shape))
        .collect();
    Ok((loss.breakdown(&tape), g))
}

/// Loss of one scene without gradients.
pub fn scene_loss(params: &RefinerParams, scene: &PreparedScene, graph: &GraphConfig) -> Result<LossBreakdown> {
    let mut tape = Tape::new();
    let pv = ParamVars::record(&mut tape, params, false);
    let fwd = forward_scene(&mut tape, &pv, &scene.inputs, graph)?;
    Ok(refine_loss_on_tape(&mut tape, fwd.refined[0], fwd.refined[1], &scene.targets)?.breakdown(&tape))
}

/// Mean loss and mean gradient over scenes. Scenes run in parallel; the
/// reduction always follows scene order.
pub fn batch_gradient(
    params: &RefinerParams,
    scenes: &[PreparedScene],
    graph: &GraphConfig,
) -> Result<(LossBreakdown, Vec<Array2<f64>>)> {
    let per_scene: Vec<(LossBreakdown, Vec<Array2<f64>>)> = scenes
        .par_iter()
        .map(|s| scene_gradient(params, s, graph, None))
        .collect::<Result<_>>()?;
    let n = per_scene.len() as f64;
    let mut grads: Vec<Array2<f64>> = params.shapes().into_iter().map(Array2::zeros).collect();
    let mut loss = LossBreakdown::default();
    for (l, g) in &per_scene {
        loss.l_v += l.l_v;
        loss.l_j += l.l_j;
        loss.l_cd += l.l_cd;
        loss.l_e += l.l_e;
        loss.l_l += l.l_l;
        loss.hand += l.hand;
        loss.obj += l.obj;
        loss.total += l.total;
        for (acc, gi) in grads.iter_mut().zip(g) {
            *acc += gi;
        }
    }
    for v in [
        &mut loss.l_v,
        &mut loss.l_j,
        &mut loss.l_cd,
        &mut loss.l_e,
        &mut loss.l_l,
        &mut loss.hand,
        &mut loss.obj,
        &mut loss.total,
    ] {
        *v /= n;
    }
    grads.iter_mut().for_each(|g| *g /= n);
    Ok((loss, grads))
}

pub fn train(scenes: &[GraspScene], config: &TrainConfig) -> Result<TrainOutcome> {
    train_with(scenes, config, |_| {})
}

/// Full-batch Adam on the mean scene loss, one step per epoch.
/// `on_epoch` sees every curve row as it is produced.
pub fn train_with(
    scenes: &[GraspScene],
    config: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome> {
    config.validate()?;
    if scenes.is_empty() {
        return Err(Error::InvalidParameter("training needs at least one scene".into()));
    }
    let prepared = scenes
        .par_iter()
        .map(|s| PreparedScene::new(s, config.surface_samples))
        .collect::<Result<Vec<_>>>()?;
    let mut params = RefinerParams::init(config.dims, config.seed, config.init)?;
    let mut adam = AdamState::new(params.shapes(), AdamConfig::default());
    let mut curve = Vec::with_capacity(config.epochs);
    for epoch in 1..=config.epochs {
        let (loss, grads) = batch_gradient(&params, &prepared, &config.graph)?;
        if !loss.total.is_finite() || grads.iter().any(|g| g.iter().any(|v| !v.is_finite())) {
            return Err(Error::Diverged {
                epoch,
                loss: loss.total,
            });
        }
        let record = EpochRecord {
            epoch,
            loss_total: loss.total,
            loss_hand: loss.hand,
            loss_obj: loss.obj,
        };
        log::info!(
            "epoch {epoch}: loss {:.6} (hand {:.6}, object {:.6})",
            loss.total,
            loss.hand,
            loss.obj
        );
        on_epoch(&record);
        curve.push(record);
        adam.step(&mut params.tensors_mut(), &grads, config.lr_at(epoch))?;
    }
    Ok(TrainOutcome { params, curve })
}

/// Metrics of the initial and refined meshes of one scene.
#[derive(Debug, Clone)]
pub struct SceneEvaluation {
    pub initial: MetricsReport,
    pub refine: MetricsReport,
    pub refined_hand: Mesh,
    pub refined_obj: Mesh,
    pub graphs: std::collections::BTreeMap<EdgeKind, KindSummary>,
}

pub fn evaluate_scene(
    scene: &GraspScene,
    params: &RefinerParams,
    graph: &GraphConfig,
    surface_samples: usize,
) -> Result<SceneEvaluation> {
    let sample = scene_sample(scene, surface_samples)?;
    let inputs = GraphInputs::new(&scene.hand_init, &scene.obj_init, &scene.contact_indices)?;
    let graphs = build_final_graphs(&inputs, params, graph)?;
    let r = refine(&graphs, params)?;
    let refined_hand = scene.hand_init.with_vertex_matrix(&r.refined_hand)?;
    let refined_obj = scene.obj_init.with_vertex_matrix(&r.refined_obj)?;
    let metrics = |h: &Mesh, o: &Mesh| evaluate(h, o, &scene.hand_gt, &scene.obj_gt, &scene.joint_regressor, &sample);
    Ok(SceneEvaluation {
        initial: metrics(&scene.hand_init, &scene.obj_init)?,
        refine: metrics(&refined_hand, &refined_obj)?,
        refined_hand,
        refined_obj,
        graphs: graphs.summary(),
    })
}

/// Scenes evaluated in parallel, returned in input order.
pub fn evaluate_scenes(
    scenes: &[GraspScene],
    params: &RefinerParams,
    graph: &GraphConfig,
    surface_samples: usize,
) -> Result<Vec<SceneEvaluation>> {
    scenes
        .par_iter()
        .map(|s| evaluate_scene(s, params, graph, surface_samples))
        .collect()
}

fn octahedron(radius: f64) -> Mesh {
    let v = [
        [radius, 0.0, 0.0],
        [-radius, 0.0, 0.0],
        [0.0, radius, 0.0],
        [0.0, -radius, 0.0],
        [0.0, 0.0, radius],
        [0.0, 0.0, -radius],
    ]
    .map(|p| Point3::new(p[0], p[1], p[2]))
    .to_vec();
    let faces = vec![
        [0, 2, 4],
        [2, 1, 4],
        [1, 3, 4],
        [3, 0, 4],
        [2, 0, 5],
        [1, 2, 5],
        [3, 1, 5],
        [0, 3, 5],
    ];
    Mesh::new(v, faces).expect("static octahedron")
}

/// A 6-vertex hand (octahedron) and an 8-vertex object (cube) with
/// perturbed initial meshes, for gradient checks.
pub fn gradcheck_scene(seed: u64) -> Result<GraspScene> {
    let hand_gt = octahedron(12.0);
    let obj_gt = make_box(Vector3::new(16.0, 16.0, 16.0), 1)?.translated(Vector3::new(22.0, 3.0, -2.0));
    let noise = NoiseParams {
        vertex_sigma: 1.5,
        translation: 3.0,
        rotation_deg: 5.0,
    };
    let regressor = JointRegressor::from_groups(6, &[vec![0, 1, 2, 3, 4, 5], vec![0, 2, 4], vec![1], vec![3, 5]])?;
    let scene = GraspScene {
        hand_init: perturb_mesh(&hand_gt, &noise, seed)?,
        obj_init: perturb_mesh(&obj_gt, &noise, seed.wrapping_add(1))?,
        hand_gt,
        obj_gt,
        contact_indices: vec![0, 2, 4],
        joint_regressor: regressor,
        meta: SceneMeta {
            index: 0,
            seed,
            pose: HandPose::default(),
            object: ObjectKind::Box { extents: [16.0; 3] },
            object_offset: [22.0, 3.0, -2.0],
            params: SceneParams {
                noise,
                object_resolution: 8,
            },
        },
    };
    scene.validate()?;
    Ok(scene)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GradcheckConfig {
    pub seed: u64,
    pub dims: ModelDims,
    pub directions: usize,
    pub step: f64,
    pub tolerance: f64,
}

impl Default for GradcheckConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            dims: ModelDims {
                descriptor: 8,
                hidden: 8,
                attention: 4,
            },
            directions: 20,
            step: 1e-5,
            tolerance: 1e-4,
        }
    }
}

/// Directional finite-difference check of the full forward pass (descriptor,
/// attention, blocks, loss) on [`gradcheck_scene`] with random parameters.
pub fn full_pipeline_gradcheck(config: &GradcheckConfig, fault: Option<Fault>) -> Result<DirectionalReport> {
    let scene = gradcheck_scene(config.seed)?;
    let prepared = PreparedScene::new(&scene, 64)?;
    let scales = InitScales {
        encoder: 0.05,
        attention: 0.05,
        block_gain: 1.0,
        head: 0.1,
    };
    let params = RefinerParams::init(config.dims, config.seed, scales)?;
    // random biases too, so every tensor is exercised away from zero
    let mut params = params;
    {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5eed);
        use rand_distr::{Distribution, Normal};
        let n = Normal::new(0.0, 0.1).expect("valid std");
        for e in &mut params.encoder {
            e.bias.mapv_inplace(|_| n.sample(&mut rng));
        }
        for b in &mut params.blocks {
            for u in b.iter_mut() {
                u.bias.mapv_inplace(|_| n.sample(&mut rng));
            }
        }
    }
    let graph = GraphConfig::default();
    let (_, grads) = scene_gradient(&params, &prepared, &graph, fault)?;
    let x: Vec<Array2<f64>> = params.tensors().into_iter().map(|(_, t)| t.clone()).collect();
    let f = |theta: &[Array2<f64>]| -> f64 {
        let mut p = params.clone();
        for (slot, t) in p.tensors_mut().into_iter().zip(theta) {
            slot.assign(t);
        }
        scene_loss(&p, &prepared, &graph).map(|l| l.total).unwrap_or(f64::NAN)
    };
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    Ok(directional_check(
        f,
        &x,
        &grads,
        config.directions,
        config.step,
        &mut rng,
    ))
}
