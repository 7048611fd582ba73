use std::collections::BTreeMap;

use nalgebra::Point3;
use ndarray::{Array2, ArrayView2};

use super::{Edge, EdgeKind, EdgeOrigin, TypedEdgeSet};
use crate::autodiff::kernels::softmax_rows;
use crate::error::{Error, Result};
use crate::mesh::Mesh;
use crate::params::AttentionParams;

/// Face-induced edges in both directions with weight 1.
pub fn face_edges(mesh: &Mesh, kind: EdgeKind) -> Result<TypedEdgeSet> {
    if !kind.is_intra() {
        return Err(Error::InvalidParameter(format!(
            "face edges are intra-class, got {}",
            kind.tag()
        )));
    }
    let n = mesh.vertex_count();
    let mut edges = Vec::new();
    for (i, j) in mesh.vertex_adjacency() {
        edges.push(Edge {
            src: i,
            dst: j,
            weight: 1.0,
        });
        edges.push(Edge {
            src: j,
            dst: i,
            weight: 1.0,
        });
    }
    TypedEdgeSet::new(kind, EdgeOrigin::Common, n, n, edges)
}

/// Each contact hand vertex links to its nearest object vertex (lowest index
/// on ties). Returns the hand-to-object set and its exact reversal.
pub fn common_edges_inter(
    hand: &[Point3<f64>],
    obj: &[Point3<f64>],
    contact: &[usize],
) -> Result<(TypedEdgeSet, TypedEdgeSet)> {
    let (nh, no) = (hand.len(), obj.len());
    if let Some(&i) = contact.iter().find(|&&i| i >= nh) {
        return Err(Error::IndexOutOfRange {
            what: "contact index",
            index: i,
            len: nh,
        });
    }
    if contact.is_empty() || obj.is_empty() {
        log::warn!("no contact vertices or empty object: inter-class common edges are empty");
        return Ok((
            TypedEdgeSet::empty(EdgeKind::Ho, EdgeOrigin::Common, nh, no),
            TypedEdgeSet::empty(EdgeKind::Oh, EdgeOrigin::Common, no, nh),
        ));
    }
    let mut sources: Vec<usize> = contact.to_vec();
    sources.sort_unstable();
    sources.dedup();
    let edges = sources
        .into_iter()
        .map(|i| {
            let mut best = (0, f64::INFINITY);
            for (j, o) in obj.iter().enumerate() {
                let d = (hand[i] - o).norm_squared();
                if d < best.1 {
                    best = (j, d);
                }
            }
            Edge {
                src: i,
                dst: best.0,
                weight: 1.0,
            }
        })
        .collect();
    let ho = TypedEdgeSet::new(EdgeKind::Ho, EdgeOrigin::Common, nh, no, edges)?;
    let oh = ho.reversed(EdgeKind::Oh)?;
    Ok((ho, oh))
}

/// `rowsoftmax((X_src W_q)(X_dst W_k)ᵀ / sqrt(d_att))`.
pub fn attention_matrix(
    x_src: ArrayView2<f64>,
    x_dst: ArrayView2<f64>,
    params: &AttentionParams,
) -> Result<Array2<f64>> {
    let check = |name: &str, x: &ArrayView2<f64>, w: &Array2<f64>| {
        if x.ncols() != w.nrows() {
            return Err(Error::ShapeMismatch {
                name: name.to_string(),
                expected: (x.nrows(), w.nrows()),
                found: x.dim(),
            });
        }
        Ok(())
    };
    check("attention source features", &x_src, &params.query)?;
    check("attention destination features", &x_dst, &params.key)?;
    if params.query.ncols() != params.key.ncols() {
        return Err(Error::ShapeMismatch {
            name: "attention key".into(),
            expected: (params.key.nrows(), params.query.ncols()),
            found: params.key.dim(),
        });
    }
    let q = x_src.dot(&params.query);
    let k = x_dst.dot(&params.key);
    let logits = q.dot(&k.t()) * (1.0 / (params.query.ncols() as f64).sqrt());
    Ok(softmax_rows(logits.view()))
}

/// Keeps `(i, j, A[i, j])` for entries strictly above `gamma`. Intra-class
/// kinds skip the diagonal.
pub fn attention_edges(a: ArrayView2<f64>, gamma: f64, kind: EdgeKind) -> Result<TypedEdgeSet> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "gamma must lie in (0, 1), got {gamma}"
        )));
    }
    let mut edges = Vec::new();
    for ((i, j), &w) in a.indexed_iter() {
        if w > gamma && !(kind.is_intra() && i == j) {
            edges.push(Edge {
                src: i,
                dst: j,
                weight: w,
            });
        }
    }
    TypedEdgeSet::new(kind, EdgeOrigin::Attention, a.nrows(), a.ncols(), edges)
}

/// Union of connectivity; weights of shared edges add.
pub fn merge_edge_sets(a: &TypedEdgeSet, b: &TypedEdgeSet) -> Result<TypedEdgeSet> {
    if a.kind() != b.kind() {
        return Err(Error::KindMismatch(a.kind(), b.kind()));
    }
    if (a.n_src(), a.n_dst()) != (b.n_src(), b.n_dst()) {
        return Err(Error::ShapeMismatch {
            name: format!("{} edge set", a.kind().tag()),
            expected: (a.n_src(), a.n_dst()),
            found: (b.n_src(), b.n_dst()),
        });
    }
    let mut acc: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for e in a.edges().iter().chain(b.edges()) {
        *acc.entry((e.src, e.dst)).or_insert(0.0) += e.weight;
    }
    let edges = acc
        .into_iter()
        .map(|((src, dst), weight)| Edge { src, dst, weight })
        .collect();
    TypedEdgeSet::new(a.kind(), EdgeOrigin::Merged, a.n_src(), a.n_dst(), edges)
}
