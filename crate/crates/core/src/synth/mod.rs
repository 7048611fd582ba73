//! Synthetic grasp scenes: procedural hand and object ground truth plus
//! perturbed initial estimates.

mod hand;
mod io;
mod perturb;
mod primitives;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::{ClosedMesh, Mesh};
use crate::metrics::intersection_volume;

pub use hand::{make_hand, HandModel, HandPose, JointRegressor, JOINT_COUNT};
pub use io::{export_scene, load_dataset, load_scene, write_dataset, Manifest};
pub use perturb::{perturb_mesh, NoiseParams};
pub use primitives::{
    icosphere_vertex_count, make_box, make_cylinder, make_icosphere, make_object, ObjectKind, MIN_RESOLUTION,
};

/// Scene generation settings shared by a whole dataset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SceneParams {
    pub noise: NoiseParams,
    /// Minimum object vertex count.
    pub object_resolution: usize,
}

impl Default for SceneParams {
    fn default() -> Self {
        Self {
            noise: NoiseParams::default(),
            object_resolution: 150,
        }
    }
}

impl SceneParams {
    pub fn validate(&self) -> Result<()> {
        self.noise.validate()?;
        if !(8..=20_000).contains(&self.object_resolution) {
            return Err(Error::InvalidParameter(format!(
                "object_resolution must lie in [8, 20000], got {}",
                self.object_resolution
            )));
        }
        Ok(())
    }
}

/// What produced a scene, enough to regenerate it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneMeta {
    pub index: usize,
    pub seed: u64,
    pub pose: HandPose,
    pub object: ObjectKind,
    pub object_offset: [f64; 3],
    pub params: SceneParams,
}

#[derive(Debug, Clone)]
pub struct GraspScene {
    pub hand_gt: Mesh,
    pub obj_gt: Mesh,
    pub hand_init: Mesh,
    pub obj_init: Mesh,
    pub contact_indices: Vec<usize>,
    pub joint_regressor: JointRegressor,
    pub meta: SceneMeta,
}

impl GraspScene {
    /// Checks the cross-field invariants.
    pub fn validate(&self) -> Result<()> {
        if self.hand_gt.faces() != self.hand_init.faces() {
            return Err(Error::InvalidMesh(
                "hand ground truth and initial meshes differ in topology".into(),
            ));
        }
        if self.obj_gt.faces() != self.obj_init.faces() {
            return Err(Error::InvalidMesh(
                "object ground truth and initial meshes differ in topology".into(),
            ));
        }
        let n = self.hand_gt.vertex_count();
        if let Some(&i) = self.contact_indices.iter().find(|&&i| i >= n) {
            return Err(Error::IndexOutOfRange {
                what: "contact index",
                index: i,
                len: n,
            });
        }
        if self.joint_regressor.n_vertices() != n {
            return Err(Error::InvalidParameter(format!(
                "regressor expects {} vertices, hand has {n}",
                self.joint_regressor.n_vertices()
            )));
        }
        Ok(())
    }
}

/// Seed of scene `index` within a dataset seeded by `base`.
pub fn scene_seed(base: u64, index: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(base);
    rng.set_stream(index as u64 + 1);
    rng.random()
}

const PLACEMENT_STEP: f64 = 1.25;
const PLACEMENT_STEPS: usize = 120;
const PLACEMENT_ATTEMPTS: usize = 16;

/// Generates scene `index` of the dataset seeded by `base`. The object is
/// pushed out from the palm along +z until the pair is collision-free;
/// draws that never separate are redrawn with less finger curl.
pub fn generate_scene(base: u64, index: usize, params: &SceneParams) -> Result<GraspScene> {
    params.validate()?;
    let seed = scene_seed(base, index);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for attempt in 0..PLACEMENT_ATTEMPTS {
        let damp = 1.0 - attempt as f64 / PLACEMENT_ATTEMPTS as f64;
        let pose = HandPose {
            curl: std::array::from_fn(|_| rng.random_range(0.05..0.45) * damp),
            spread: rng.random_range(0.0..0.6),
            thumb_opposition: rng.random_range(0.2..0.9),
        };
        let object = match rng.random_range(0..3) {
            0 => ObjectKind::Sphere {
                radius: rng.random_range(22.0..32.0),
            },
            1 => ObjectKind::Box {
                extents: std::array::from_fn(|_| rng.random_range(30.0..50.0)),
            },
            _ => ObjectKind::Cylinder {
                radius: rng.random_range(15.0..22.0),
                height: rng.random_range(55.0..80.0),
            },
        };
        let object_seed: u64 = rng.random();
        let lateral = Vector3::new(rng.random_range(-6.0..6.0), rng.random_range(38.0..52.0), 0.0);
        let (hand_seed, obj_seed): (u64, u64) = (rng.random(), rng.random());

        let model = make_hand(&pose, seed)?;
        let obj = make_object(object, params.object_resolution, object_seed)?;
        let Some((obj_gt, offset)) = place_object(&model.mesh, &obj, lateral)? else {
            log::debug!("scene {index}: placement attempt {attempt} failed, redrawing");
            continue;
        };
        let scene = GraspScene {
            hand_init: perturb_mesh(&model.mesh, &params.noise, hand_seed)?,
            obj_init: perturb_mesh(&obj_gt, &params.noise, obj_seed)?,
            hand_gt: model.mesh,
            obj_gt,
            contact_indices: model.contact_indices,
            joint_regressor: model.regressor,
            meta: SceneMeta {
                index,
                seed,
                pose,
                object,
                object_offset: offset.into(),
                params: *params,
            },
        };
        scene.validate()?;
        return Ok(scene);
    }
    Err(Error::InvalidParameter(format!(
        "scene {index}: no collision-free placement after {PLACEMENT_ATTEMPTS} attempts"
    )))
}

/// `count` scenes, generated in index order.
pub fn generate_dataset(base: u64, count: usize, params: &SceneParams) -> Result<Vec<GraspScene>> {
    if count == 0 {
        return Err(Error::InvalidParameter("count must be ≥ 1".into()));
    }
    (0..count).map(|i| generate_scene(base, i, params)).collect()
}

fn place_object(hand: &Mesh, obj: &Mesh, lateral: Vector3<f64>) -> Result<Option<(Mesh, Vector3<f64>)>> {
    let hand_closed = ClosedMesh::new(hand)?;
    let obj_extent = obj.bounds().map(|(lo, hi)| (hi.z - lo.z) / 2.0).unwrap_or(0.0);
    for step in 0..PLACEMENT_STEPS {
        let offset = lateral + Vector3::new(0.0, 0.0, obj_extent + step as f64 * PLACEMENT_STEP);
        let placed = obj.translated(offset - obj.centroid().coords);
        let obj_closed = ClosedMesh::new(&placed)?;
        let touching = hand.vertices().iter().any(|v| obj_closed.contains(v))
            || placed.vertices().iter().any(|v| hand_closed.contains(v));
        if touching {
            continue;
        }
        if intersection_volume(hand, &placed, crate::metrics::VOXEL_MM)? == 0.0 {
            return Ok(Some((placed, offset)));
        }
    }
    Ok(None)
}
