//! Scene directories: four OBJ files plus contact, regressor, and meta JSON.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{GraspScene, JointRegressor, SceneMeta, SceneParams};
use crate::error::{Error, Result};
use crate::mesh::{load_mesh, save_mesh};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub seed: u64,
    pub params: SceneParams,
    /// Scene directories relative to the manifest.
    pub scenes: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct RegressorFile {
    n_joints: usize,
    n_vertices: usize,
    triplets: Vec<(usize, usize, f64)>,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::json(path, e))?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::json(path, e))
}

pub fn export_scene(scene: &GraspScene, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    save_mesh(&scene.hand_gt, dir.join("hand_gt.obj"))?;
    save_mesh(&scene.obj_gt, dir.join("obj_gt.obj"))?;
    save_mesh(&scene.hand_init, dir.join("hand_init.obj"))?;
    save_mesh(&scene.obj_init, dir.join("obj_init.obj"))?;
    write_json(&dir.join("contact.json"), &scene.contact_indices)?;
    let reg = &scene.joint_regressor;
    write_json(
        &dir.join("regressor.json"),
        &RegressorFile {
            n_joints: reg.n_joints(),
            n_vertices: reg.n_vertices(),
            triplets: reg.triplets(),
        },
    )?;
    write_json(&dir.join("meta.json"), &scene.meta)
}

pub fn load_scene(dir: impl AsRef<Path>) -> Result<GraspScene> {
    let dir = dir.as_ref();
    let reg: RegressorFile = read_json(&dir.join("regressor.json"))?;
    let scene = GraspScene {
        hand_gt: load_mesh(dir.join("hand_gt.obj"))?,
        obj_gt: load_mesh(dir.join("obj_gt.obj"))?,
        hand_init: load_mesh(dir.join("hand_init.obj"))?,
        obj_init: load_mesh(dir.join("obj_init.obj"))?,
        contact_indices: read_json(&dir.join("contact.json"))?,
        joint_regressor: JointRegressor::from_triplets(reg.n_joints, reg.n_vertices, &reg.triplets)?,
        meta: read_json::<SceneMeta>(&dir.join("meta.json"))?,
    };
    scene.validate()?;
    Ok(scene)
}

/// Writes `scene_0000`, `scene_0001`, ... and a manifest under `out`.
pub fn write_dataset(
    scenes: &[GraspScene],
    seed: u64,
    params: &SceneParams,
    out: impl AsRef<Path>,
) -> Result<Manifest> {
    let out = out.as_ref();
    let mut names = Vec::with_capacity(scenes.len());
    for (i, scene) in scenes.iter().enumerate() {
        let name = format!("scene_{i:04}");
        export_scene(scene, out.join(&name))?;
        names.push(name);
    }
    let manifest = Manifest {
        seed,
        params: *params,
        scenes: names,
    };
    write_json(&out.join(MANIFEST_FILE), &manifest)?;
    Ok(manifest)
}

/// Reads the manifest in `dir` and every scene it lists.
pub fn load_dataset(dir: impl AsRef<Path>) -> Result<(Manifest, Vec<GraspScene>)> {
    let dir = dir.as_ref();
    let manifest: Manifest = read_json(&dir.join(MANIFEST_FILE))?;
    if manifest.scenes.is_empty() {
        return Err(Error::InvalidParameter(format!(
            "{} lists no scenes",
            dir.join(MANIFEST_FILE).display()
        )));
    }
    let scenes = manifest
        .scenes
        .iter()
        .map(|name| load_scene(dir.join(PathBuf::from(name))))
        .collect::<Result<Vec<_>>>()?;
    Ok((manifest, scenes))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::generate_dataset;

    #[test]
    fn dataset_round_trip() {
        let params = SceneParams::default();
        let scenes = generate_dataset(4, 2, &params).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let m = write_dataset(&scenes, 4, &params, dir.path()).unwrap();
        assert_eq!(m.scenes, vec!["scene_0000", "scene_0001"]);
        let (m2, back) = load_dataset(dir.path()).unwrap();
        assert_eq!(m, m2);
        for (a, b) in scenes.iter().zip(&back) {
            assert_eq!(a.hand_gt.faces(), b.hand_gt.faces());
            assert_eq!(a.contact_indices, b.contact_indices);
            assert_eq!(a.meta, b.meta);
            for (p, q) in a.obj_init.vertices().iter().zip(b.obj_init.vertices()) {
                assert!((p - q).norm() < 1e-5);
            }
        }
        // re-exporting a loaded scene reproduces the same bytes
        let dir2 = tempfile::tempdir().unwrap();
        write_dataset(&back, 4, &params, dir2.path()).unwrap();
        for f in ["hand_init.obj", "regressor.json", "meta.json"] {
            let a = fs::read(dir.path().join("scene_0001").join(f)).unwrap();
            let b = fs::read(dir2.path().join("scene_0001").join(f)).unwrap();
            assert_eq!(a, b, "{f}");
        }
    }
}
