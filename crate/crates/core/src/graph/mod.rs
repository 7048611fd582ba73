//! Node features and the four typed edge sets (hand-hand, object-object,
//! hand-object, object-hand) consumed by the refiner.

mod build;
mod descriptor;
mod edges;

use std::collections::BTreeSet;

use ndarray::{s, Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::Mesh;

pub use build::{build_final_graphs, EdgeLayout, FinalGraphs, GraphConfig, GraphDump, GraphInputs, KindSummary};
pub use descriptor::{farthest_point_sample, geometric_stats, scene_descriptor, FPS_COUNT, STATS_WIDTH};
pub use edges::{attention_edges, attention_matrix, common_edges_inter, face_edges, merge_edge_sets};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeClass {
    Hand,
    Object,
}

impl NodeClass {
    pub const ALL: [NodeClass; 2] = [NodeClass::Hand, NodeClass::Object];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn tag(self) -> &'static str {
        match self {
            NodeClass::Hand => "hand",
            NodeClass::Object => "object",
        }
    }
}

/// Graph kind, named source class first: `Ho` edges run from hand nodes to
/// object nodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EdgeKind {
    Hh,
    Oo,
    Ho,
    Oh,
}

impl EdgeKind {
    pub const ALL: [EdgeKind; 4] = [EdgeKind::Hh, EdgeKind::Oo, EdgeKind::Ho, EdgeKind::Oh];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn tag(self) -> &'static str {
        match self {
            EdgeKind::Hh => "hh",
            EdgeKind::Oo => "oo",
            EdgeKind::Ho => "ho",
            EdgeKind::Oh => "oh",
        }
    }

    pub fn src_class(self) -> NodeClass {
        match self {
            EdgeKind::Hh | EdgeKind::Ho => NodeClass::Hand,
            EdgeKind::Oo | EdgeKind::Oh => NodeClass::Object,
        }
    }

    pub fn dst_class(self) -> NodeClass {
        match self {
            EdgeKind::Hh | EdgeKind::Oh => NodeClass::Hand,
            EdgeKind::Oo | EdgeKind::Ho => NodeClass::Object,
        }
    }

    pub fn is_intra(self) -> bool {
        self.src_class() == self.dst_class()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EdgeOrigin {
    Common,
    Attention,
    Merged,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub src: usize,
    pub dst: usize,
    pub weight: f64,
}

/// Weighted directed edges of one kind, sorted by `(src, dst)` with no
/// duplicates and no self-loops.
#[derive(Debug, Clone, PartialEq)]
pub struct TypedEdgeSet {
    kind: EdgeKind,
    origin: EdgeOrigin,
    n_src: usize,
    n_dst: usize,
    edges: Vec<Edge>,
}

impl TypedEdgeSet {
    pub fn empty(kind: EdgeKind, origin: EdgeOrigin, n_src: usize, n_dst: usize) -> Self {
        Self {
            kind,
            origin,
            n_src,
            n_dst,
            edges: Vec::new(),
        }
    }

    /// Validates indices and weights, sorts, and rejects duplicates.
    /// Common-origin intra-class sets must also be symmetric.
    pub fn new(kind: EdgeKind, origin: EdgeOrigin, n_src: usize, n_dst: usize, mut edges: Vec<Edge>) -> Result<Self> {
        for e in &edges {
            if e.src >= n_src {
                return Err(Error::IndexOutOfRange {
                    what: "edge source",
                    index: e.src,
                    len: n_src,
                });
            }
            if e.dst >= n_dst {
                return Err(Error::IndexOutOfRange {
                    what: "edge destination",
                    index: e.dst,
                    len: n_dst,
                });
            }
            if !(e.weight.is_finite() && e.weight > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "edge ({}, {}) has non-positive weight {}",
                    e.src, e.dst, e.weight
                )));
            }
            if kind.is_intra() && e.src == e.dst {
                return Err(Error::InvalidParameter(format!("self-loop on node {}", e.src)));
            }
        }
        edges.sort_by_key(|e| (e.src, e.dst));
        if let Some(w) = edges.windows(2).find(|w| (w[0].src, w[0].dst) == (w[1].src, w[1].dst)) {
            return Err(Error::InvalidParameter(format!(
                "duplicate edge ({}, {})",
                w[0].src, w[0].dst
            )));
        }
        let set = Self {
            kind,
            origin,
            n_src,
            n_dst,
            edges,
        };
        if origin == EdgeOrigin::Common && kind.is_intra() && !set.is_symmetric() {
            return Err(Error::InvalidParameter(format!(
                "common {} edges must be symmetric",
                kind.tag()
            )));
        }
        Ok(set)
    }

    pub fn kind(&self) -> EdgeKind {
        self.kind
    }

    pub fn origin(&self) -> EdgeOrigin {
        self.origin
    }

    pub fn n_src(&self) -> usize {
        self.n_src
    }

    pub fn n_dst(&self) -> usize {
        self.n_dst
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    pub fn weight(&self, src: usize, dst: usize) -> Option<f64> {
        self.edges
            .binary_search_by_key(&(src, dst), |e| (e.src, e.dst))
            .ok()
            .map(|i| self.edges[i].weight)
    }

    pub fn connectivity(&self) -> BTreeSet<(usize, usize)> {
        self.edges.iter().map(|e| (e.src, e.dst)).collect()
    }

    /// `(i, j)` present iff `(j, i)` is, with equal weight.
    pub fn is_symmetric(&self) -> bool {
        self.edges.iter().all(|e| self.weight(e.dst, e.src) == Some(e.weight))
    }

    /// `(dst, src)` pairs as a set of the opposite kind.
    pub fn reversed(&self, kind: EdgeKind) -> Result<TypedEdgeSet> {
        let edges = self
            .edges
            .iter()
            .map(|e| Edge {
                src: e.dst,
                dst: e.src,
                weight: e.weight,
            })
            .collect();
        TypedEdgeSet::new(kind, self.origin, self.n_dst, self.n_src, edges)
    }

    /// Dense weighted adjacency `W[src, dst]`.
    pub fn dense(&self) -> Array2<f64> {
        let mut w = Array2::zeros((self.n_src, self.n_dst));
        for e in &self.edges {
            w[[e.src, e.dst]] = e.weight;
        }
        w
    }

    pub fn src_indices(&self) -> Vec<usize> {
        self.edges.iter().map(|e| e.src).collect()
    }

    pub fn dst_indices(&self) -> Vec<usize> {
        self.edges.iter().map(|e| e.dst).collect()
    }

    /// `|E| x 1` weight column.
    pub fn weight_column(&self) -> Array2<f64> {
        Array2::from_shape_fn((self.edges.len(), 1), |(i, _)| self.edges[i].weight)
    }
}

/// Per-node rows `[vertex ‖ descriptor]` of one class.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeFeatureSet {
    class: NodeClass,
    rows: Array2<f64>,
}

impl NodeFeatureSet {
    pub fn from_rows(class: NodeClass, rows: Array2<f64>) -> Result<Self> {
        if rows.ncols() < 3 {
            return Err(Error::InvalidParameter(format!(
                "node features need at least 3 columns, got {}",
                rows.ncols()
            )));
        }
        Ok(Self { class, rows })
    }

    pub fn class(&self) -> NodeClass {
        self.class
    }

    pub fn rows(&self) -> &Array2<f64> {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.nrows() == 0
    }

    pub fn descriptor_width(&self) -> usize {
        self.rows.ncols() - 3
    }

    pub fn coordinates(&self) -> ArrayView2<'_, f64> {
        self.rows.slice(s![.., 0..3])
    }
}

/// Row `i` is `[vertex_i ‖ descriptor]`.
pub fn init_nodes(mesh: &Mesh, descriptor: &[f64], class: NodeClass) -> Result<NodeFeatureSet> {
    if descriptor.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter("descriptor has non-finite entries".into()));
    }
    let d = descriptor.len();
    let verts = mesh.vertices();
    let rows = Array2::from_shape_fn((verts.len(), 3 + d), |(i, c)| {
        if c < 3 {
            verts[i][c]
        } else {
            descriptor[c - 3]
        }
    });
    NodeFeatureSet::from_rows(class, rows)
}
