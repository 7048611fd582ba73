//! Refinement loss terms, as plain functions and as differentiable tape
//! expressions.
//!
//! `total = (l_v + l_j) + (l_cd + 2·l_e + 0.1·l_l)`

use std::sync::Arc;

use nalgebra::Point3;
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::autodiff::{SparseMatrix, Tape, Var};
use crate::error::{Error, Result};
use crate::mesh::{Mesh, SurfaceSample};
use crate::synth::JointRegressor;

pub const EDGE_WEIGHT: f64 = 2.0;
pub const LAPLACIAN_WEIGHT: f64 = 0.1;
/// Default object surface sample size for Chamfer terms.
pub const SURFACE_SAMPLES: usize = 600;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub l_v: f64,
    pub l_j: f64,
    pub l_cd: f64,
    pub l_e: f64,
    pub l_l: f64,
    pub hand: f64,
    pub obj: f64,
    pub total: f64,
}

impl LossBreakdown {
    /// Fills the hand, object, and total sums from the five terms.
    pub fn from_terms(l_v: f64, l_j: f64, l_cd: f64, l_e: f64, l_l: f64) -> Self {
        let hand = l_v + l_j;
        let obj = l_cd + EDGE_WEIGHT * l_e + LAPLACIAN_WEIGHT * l_l;
        Self {
            l_v,
            l_j,
            l_cd,
            l_e,
            l_l,
            hand,
            obj,
            total: hand + obj,
        }
    }
}

fn same_count(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::InvalidMesh(format!("vertex counts differ: {a} vs {b}")));
    }
    Ok(())
}

/// Mean squared distance between corresponding vertices.
pub fn vertex_l2(pred: &Mesh, gt: &Mesh) -> Result<f64> {
    same_count(pred.vertex_count(), gt.vertex_count())?;
    let n = pred.vertex_count().max(1) as f64;
    Ok(pred
        .vertices()
        .iter()
        .zip(gt.vertices())
        .map(|(p, g)| (p - g).norm_squared())
        .sum::<f64>()
        / n)
}

/// Mean squared distance between regressed joints.
pub fn joint_l2(pred: &Mesh, gt: &Mesh, regressor: &JointRegressor) -> Result<f64> {
    same_count(pred.vertex_count(), gt.vertex_count())?;
    same_count(pred.vertex_count(), regressor.n_vertices())?;
    let (jp, jg) = (regressor.regress(pred.vertices()), regressor.regress(gt.vertices()));
    Ok(jp.iter().zip(&jg).map(|(p, g)| (p - g).norm_squared()).sum::<f64>() / jp.len().max(1) as f64)
}

/// Mean squared nearest-neighbor distance from `a` to `b` plus from `b` to `a`.
pub fn chamfer(a: &[Point3<f64>], b: &[Point3<f64>]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::InvalidParameter(
            "chamfer distance needs two non-empty point sets".into(),
        ));
    }
    let one_way = |from: &[Point3<f64>], to: &[Point3<f64>]| {
        from.iter()
            .map(|p| to.iter().map(|q| (p - q).norm_squared()).fold(f64::INFINITY, f64::min))
            .sum::<f64>()
            / from.len() as f64
    };
    Ok(one_way(a, b) + one_way(b, a))
}

/// Variance of the lengths of the unique face edges; 0 without edges.
pub fn edge_regularizer(mesh: &Mesh) -> f64 {
    let v = mesh.vertices();
    let lengths: Vec<f64> = mesh
        .vertex_adjacency()
        .into_iter()
        .map(|(i, j)| (v[i] - v[j]).norm())
        .collect();
    length_variance(&lengths)
}

/// Population variance; 0 for an empty slice.
pub fn length_variance(lengths: &[f64]) -> f64 {
    if lengths.is_empty() {
        return 0.0;
    }
    let n = lengths.len() as f64;
    let mean = lengths.iter().sum::<f64>() / n;
    lengths.iter().map(|l| (l - mean).powi(2)).sum::<f64>() / n
}

/// Mean over vertices of the squared distance to the mean of the adjacent
/// vertices. Isolated vertices contribute 0.
pub fn laplacian_loss(mesh: &Mesh) -> f64 {
    let v = mesh.vertices();
    if v.is_empty() {
        return 0.0;
    }
    let total: f64 = mesh
        .neighbor_lists()
        .iter()
        .enumerate()
        .filter(|(_, nb)| !nb.is_empty())
        .map(|(i, nb)| {
            let mean = nb.iter().fold(nalgebra::Vector3::zeros(), |a, &j| a + v[j].coords) / nb.len() as f64;
            (v[i].coords - mean).norm_squared()
        })
        .sum();
    total / v.len() as f64
}

/// Per-scene constants of the differentiable loss.
#[derive(Debug, Clone)]
pub struct LossTargets {
    pub gt_hand: Array2<f64>,
    pub gt_joints: Array2<f64>,
    pub gt_samples: Array2<f64>,
    pub regressor: Arc<SparseMatrix>,
    pub sampler: Arc<SparseMatrix>,
    pub edge_i: Arc<Vec<usize>>,
    pub edge_j: Arc<Vec<usize>>,
    /// `I − M` with `M` the uniform neighbor-averaging operator.
    pub laplacian: Arc<SparseMatrix>,
}

impl LossTargets {
    pub fn new(gt_hand: &Mesh, gt_obj: &Mesh, regressor: &JointRegressor, sample: &SurfaceSample) -> Result<Self> {
        same_count(gt_hand.vertex_count(), regressor.n_vertices())?;
        let reg = Arc::new(SparseMatrix::new(gt_hand.vertex_count(), regressor.rows().to_vec()));
        let sampler = Arc::new(SparseMatrix::new(gt_obj.vertex_count(), sample.rows(gt_obj)));
        let hand = gt_hand.vertex_matrix();
        let obj = gt_obj.vertex_matrix();
        let (edge_i, edge_j) = gt_obj.vertex_adjacency().into_iter().unzip();
        let laplacian = gt_obj
            .neighbor_lists()
            .into_iter()
            .enumerate()
            .map(|(i, nb)| {
                if nb.is_empty() {
                    return Vec::new();
                }
                let w = 1.0 / nb.len() as f64;
                let mut row = vec![(i, 1.0)];
                row.extend(nb.into_iter().map(|j| (j, -w)));
                row
            })
            .collect();
        Ok(Self {
            gt_joints: reg.matmul(hand.view()),
            gt_samples: sampler.matmul(obj.view()),
            gt_hand: hand,
            regressor: reg,
            sampler,
            edge_i: Arc::new(edge_i),
            edge_j: Arc::new(edge_j),
            laplacian: Arc::new(SparseMatrix::new(gt_obj.vertex_count(), laplacian)),
        })
    }
}

/// Scalar tape nodes of every loss term.
#[derive(Debug, Clone, Copy)]
pub struct LossVars {
    pub l_v: Var,
    pub l_j: Var,
    pub l_cd: Var,
    pub l_e: Var,
    pub l_l: Var,
    pub hand: Var,
    pub obj: Var,
    pub total: Var,
}

impl LossVars {
    pub fn breakdown(&self, tape: &Tape) -> LossBreakdown {
        LossBreakdown {
            l_v: tape.scalar(self.l_v),
            l_j: tape.scalar(self.l_j),
            l_cd: tape.scalar(self.l_cd),
            l_e: tape.scalar(self.l_e),
            l_l: tape.scalar(self.l_l),
            hand: tape.scalar(self.hand),
            obj: tape.scalar(self.obj),
            total: tape.scalar(self.total),
        }
    }
}

/// Records the refinement loss of `pred_hand` (`n_h x 3`) and `pred_obj`
/// (`n_o x 3`) on `tape`.
pub fn refine_loss_on_tape(tape: &mut Tape, pred_hand: Var, pred_obj: Var, t: &LossTargets) -> Result<LossVars> {
    let check = |name: &str, found: (usize, usize), expected: (usize, usize)| {
        if found != expected {
            return Err(Error::ShapeMismatch {
                name: name.to_string(),
                expected,
                found,
            });
        }
        Ok(())
    };
    check("predicted hand", tape.shape(pred_hand), t.gt_hand.dim())?;
    check("predicted object", tape.shape(pred_obj), (t.sampler.n_cols(), 3))?;

    let gt_hand = tape.constant(t.gt_hand.clone());
    let d = tape.sub(pred_hand, gt_hand);
    let sq = tape.row_sq_norm(d);
    let l_v = tape.mean(sq);

    let joints = tape.sparse_matmul(t.regressor.clone(), pred_hand);
    let gt_joints = tape.constant(t.gt_joints.clone());
    let d = tape.sub(joints, gt_joints);
    let sq = tape.row_sq_norm(d);
    let l_j = tape.mean(sq);

    let samples = tape.sparse_matmul(t.sampler.clone(), pred_obj);
    let gt_samples = tape.constant(t.gt_samples.clone());
    let dist = tape.pairwise_sq_dist(samples, gt_samples);
    let to_gt = tape.min_rows(dist);
    let to_pred = tape.min_cols(dist);
    let a = tape.mean(to_gt);
    let b = tape.mean(to_pred);
    let l_cd = tape.add(a, b);

    let l_e = if t.edge_i.is_empty() {
        tape.constant(Array2::zeros((1, 1)))
    } else {
        let pi = tape.gather_rows(pred_obj, t.edge_i.clone());
        let pj = tape.gather_rows(pred_obj, t.edge_j.clone());
        let d = tape.sub(pi, pj);
        let sq = tape.row_sq_norm(d);
        let len = tape.sqrt(sq);
        let mean = tape.mean(len);
        let centered = tape.sub(len, mean);
        let sq = tape.mul(centered, centered);
        tape.mean(sq)
    };

    let lap = tape.sparse_matmul(t.laplacian.clone(), pred_obj);
    let sq = tape.row_sq_norm(lap);
    let l_l = tape.mean(sq);

    let hand = tape.add(l_v, l_j);
    let e = tape.scale(l_e, EDGE_WEIGHT);
    let l = tape.scale(l_l, LAPLACIAN_WEIGHT);
    let obj = tape.add(l_cd, e);
    let obj = tape.add(obj, l);
    let total = tape.add(hand, obj);
    Ok(LossVars {
        l_v,
        l_j,
        l_cd,
        l_e,
        l_l,
        hand,
        obj,
        total,
    })
}

/// Evaluates the differentiable loss on fixed meshes.
pub fn refine_loss(
    pred_hand: &Mesh,
    pred_obj: &Mesh,
    gt_hand: &Mesh,
    gt_obj: &Mesh,
    regressor: &JointRegressor,
    sample: &SurfaceSample,
) -> Result<LossBreakdown> {
    let targets = LossTargets::new(gt_hand, gt_obj, regressor, sample)?;
    let mut tape = Tape::new();
    let h = tape.constant(pred_hand.vertex_matrix());
    let o = tape.constant(pred_obj.vertex_matrix());
    Ok(refine_loss_on_tape(&mut tape, h, o, &targets)?.breakdown(&tape))
}
