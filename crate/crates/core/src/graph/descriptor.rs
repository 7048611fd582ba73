//! Global per-class descriptor: an affine map of simple geometric statistics.

use nalgebra::Point3;
use ndarray::Array2;

use crate::error::{Error, Result};
use crate::graph::NodeClass;
use crate::mesh::Mesh;
use crate::params::RefinerParams;

/// Farthest-point samples per mesh.
pub const FPS_COUNT: usize = 32;
/// centroid (3) + bounding-box extents (3) + `FPS_COUNT` points.
pub const STATS_WIDTH: usize = 6 + 3 * FPS_COUNT;

/// Greedy farthest-point sampling. The first pick is the point farthest from
/// the centroid; each later pick maximizes the distance to the picked set.
/// Ties go to the lowest index. Once every point is picked, further picks
/// repeat index-wise from the lowest zero-distance point.
pub fn farthest_point_sample(points: &[Point3<f64>], k: usize) -> Vec<usize> {
    if points.is_empty() || k == 0 {
        return Vec::new();
    }
    let n = points.len() as f64;
    let centroid = points.iter().fold(Point3::origin(), |acc, p| acc + p.coords / n);
    let argmax = |d: &[f64]| {
        let mut best = 0;
        for (i, &v) in d.iter().enumerate() {
            if v > d[best] {
                best = i;
            }
        }
        best
    };
    let from_centroid: Vec<f64> = points.iter().map(|p| (p - centroid).norm_squared()).collect();
    let mut picked = vec![argmax(&from_centroid)];
    let mut nearest: Vec<f64> = points.iter().map(|p| (p - points[picked[0]]).norm_squared()).collect();
    while picked.len() < k {
        let next = argmax(&nearest);
        picked.push(next);
        for (d, p) in nearest.iter_mut().zip(points) {
            *d = d.min((p - points[next]).norm_squared());
        }
    }
    picked
}

/// `1 x STATS_WIDTH` row: centroid, bbox extents, then the farthest-point
/// samples flattened as xyz triples.
pub fn geometric_stats(mesh: &Mesh) -> Result<Array2<f64>> {
    let verts = mesh.vertices();
    let (lo, hi) = mesh
        .bounds()
        .ok_or_else(|| Error::InvalidMesh("cannot describe an empty mesh".into()))?;
    let c = mesh.centroid();
    let mut row = Vec::with_capacity(STATS_WIDTH);
    row.extend_from_slice(c.coords.as_slice());
    row.extend_from_slice((hi - lo).as_slice());
    for i in farthest_point_sample(verts, FPS_COUNT) {
        row.extend_from_slice(verts[i].coords.as_slice());
    }
    Ok(Array2::from_shape_vec((1, STATS_WIDTH), row).expect("stats width"))
}

/// `(ζ_hand, ζ_obj)`, each `1 x D`.
pub fn scene_descriptor(hand: &Mesh, obj: &Mesh, params: &RefinerParams) -> Result<(Array2<f64>, Array2<f64>)> {
    let encode = |mesh: &Mesh, class: NodeClass| -> Result<Array2<f64>> {
        let enc = &params.encoder[class.index()];
        Ok(geometric_stats(mesh)?.dot(&enc.weight) + &enc.bias)
    };
    Ok((encode(hand, NodeClass::Hand)?, encode(obj, NodeClass::Object)?))
}
