//! Evaluation metrics: joint and mesh errors, object Chamfer error, maximum
//! penetration depth, and voxelized intersection volume.

use nalgebra::Point3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::chamfer;
use crate::mesh::{ClosedMesh, Mesh, SurfaceSample};
use crate::synth::JointRegressor;

/// Voxel edge length for [`intersection_volume`] (mm).
pub const VOXEL_MM: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricsReport {
    /// Mean Euclidean joint distance.
    pub hand_joint_error_mm: f64,
    /// Mean Euclidean vertex distance.
    pub hand_mesh_error_mm: f64,
    /// Symmetric Chamfer value between surface samples (squared distances).
    pub object_error_mm: f64,
    pub max_pen_mm: f64,
    pub inter_vol_cm3: f64,
}

impl MetricsReport {
    /// Field-wise arithmetic mean; all zeros for an empty slice.
    pub fn mean(reports: &[MetricsReport]) -> MetricsReport {
        if reports.is_empty() {
            return MetricsReport::default();
        }
        let n = reports.len() as f64;
        let sum = |f: fn(&MetricsReport) -> f64| reports.iter().map(f).sum::<f64>() / n;
        MetricsReport {
            hand_joint_error_mm: sum(|r| r.hand_joint_error_mm),
            hand_mesh_error_mm: sum(|r| r.hand_mesh_error_mm),
            object_error_mm: sum(|r| r.object_error_mm),
            max_pen_mm: sum(|r| r.max_pen_mm),
            inter_vol_cm3: sum(|r| r.inter_vol_cm3),
        }
    }

    /// Two decimals, for console tables.
    pub fn rounded(&self) -> MetricsReport {
        let r = |v: f64| (v * 100.0).round() / 100.0;
        MetricsReport {
            hand_joint_error_mm: r(self.hand_joint_error_mm),
            hand_mesh_error_mm: r(self.hand_mesh_error_mm),
            object_error_mm: r(self.object_error_mm),
            max_pen_mm: r(self.max_pen_mm),
            inter_vol_cm3: r(self.inter_vol_cm3),
        }
    }
}

fn same_count(a: usize, b: usize, what: &str) -> Result<()> {
    if a != b {
        return Err(Error::InvalidMesh(format!("{what}: {a} vs {b} vertices")));
    }
    Ok(())
}

pub fn hand_mesh_error(pred: &Mesh, gt: &Mesh) -> Result<f64> {
    same_count(pred.vertex_count(), gt.vertex_count(), "hand mesh error")?;
    if pred.vertex_count() == 0 {
        return Ok(0.0);
    }
    let total: f64 = pred
        .vertices()
        .iter()
        .zip(gt.vertices())
        .map(|(p, g)| (p - g).norm())
        .sum();
    Ok(total / pred.vertex_count() as f64)
}

pub fn hand_joint_error(pred: &Mesh, gt: &Mesh, regressor: &JointRegressor) -> Result<f64> {
    same_count(pred.vertex_count(), gt.vertex_count(), "hand joint error")?;
    same_count(pred.vertex_count(), regressor.n_vertices(), "joint regressor")?;
    let jp = regressor.regress(pred.vertices());
    let jg = regressor.regress(gt.vertices());
    Ok(jp.iter().zip(&jg).map(|(p, g)| (p - g).norm()).sum::<f64>() / jp.len().max(1) as f64)
}

/// Deepest hand vertex inside the object, measured to the object surface;
/// 0 when no hand vertex is inside.
pub fn max_penetration(hand: &Mesh, obj: &Mesh) -> Result<f64> {
    let closed = ClosedMesh::new(obj)?;
    Ok(hand
        .vertices()
        .iter()
        .filter(|v| closed.contains(v))
        .map(|v| closed.unsigned_distance(v).distance)
        .fold(0.0, f64::max))
}

/// Volume (cm³) of the voxels whose centers lie inside both meshes. The grid
/// is anchored at the union bounding box padded by one voxel; only voxels in
/// the overlap of the two boxes can count, so only those are tested.
pub fn intersection_volume(hand: &Mesh, obj: &Mesh, voxel: f64) -> Result<f64> {
    if !(voxel.is_finite() && voxel > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "voxel size must be positive, got {voxel}"
        )));
    }
    let (hc, oc) = (ClosedMesh::new(hand)?, ClosedMesh::new(obj)?);
    let (hlo, hhi) = hand.bounds().expect("closed mesh has vertices");
    let (olo, ohi) = obj.bounds().expect("closed mesh has vertices");
    let origin = hlo.inf(&olo).map(|c| c - voxel);
    let (lo, hi) = (hlo.sup(&olo), hhi.inf(&ohi));
    if (0..3).any(|a| lo[a] > hi[a]) {
        return Ok(0.0);
    }
    // voxel k on an axis spans [origin + k·voxel, origin + (k+1)·voxel]
    let range = |a: usize| {
        let first = ((lo[a] - origin[a]) / voxel - 0.5).ceil().max(0.0) as usize;
        let last = ((hi[a] - origin[a]) / voxel - 0.5).floor();
        if last < first as f64 {
            first..first
        } else {
            first..last as usize + 1
        }
    };
    let mut count = 0usize;
    for i in range(0) {
        for j in range(1) {
            for k in range(2) {
                let c = Point3::new(
                    origin.x + (i as f64 + 0.5) * voxel,
                    origin.y + (j as f64 + 0.5) * voxel,
                    origin.z + (k as f64 + 0.5) * voxel,
                );
                if oc.contains(&c) && hc.contains(&c) {
                    count += 1;
                }
            }
        }
    }
    Ok(count as f64 * voxel.powi(3) / 1000.0)
}

/// All five metrics for one predicted hand/object pair.
pub fn evaluate(
    pred_hand: &Mesh,
    pred_obj: &Mesh,
    gt_hand: &Mesh,
    gt_obj: &Mesh,
    regressor: &JointRegressor,
    sample: &SurfaceSample,
) -> Result<MetricsReport> {
    same_count(pred_obj.vertex_count(), gt_obj.vertex_count(), "object error")?;
    Ok(MetricsReport {
        hand_joint_error_mm: hand_joint_error(pred_hand, gt_hand, regressor)?,
        hand_mesh_error_mm: hand_mesh_error(pred_hand, gt_hand)?,
        object_error_mm: chamfer(&sample.points(pred_obj), &sample.points(gt_obj))?,
        max_pen_mm: max_penetration(pred_hand, pred_obj)?,
        inter_vol_cm3: intersection_volume(pred_hand, pred_obj, VOXEL_MM)?,
    })
}
