use std::collections::BTreeMap;
use std::sync::Arc;

use ndarray::{concatenate, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use super::descriptor::geometric_stats;
use super::edges::{attention_edges, attention_matrix, common_edges_inter, face_edges, merge_edge_sets};
use super::{EdgeKind, EdgeOrigin, NodeClass, NodeFeatureSet, TypedEdgeSet};
use crate::autodiff::EdgeIndex;
use crate::error::{Error, Result};
use crate::mesh::Mesh;
use crate::params::RefinerParams;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GraphConfig {
    pub gamma: f64,
    pub use_common: bool,
    pub use_attention: bool,
}

impl Default for GraphConfig {
    fn default() -> Self {
        Self {
            gamma: 0.01,
            use_common: true,
            use_attention: true,
        }
    }
}

impl GraphConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "gamma must lie in (0, 1), got {}",
                self.gamma
            )));
        }
        Ok(())
    }
}

/// Parameter-independent inputs of graph construction for one scene.
#[derive(Debug, Clone)]
pub struct GraphInputs {
    pub vertices: [Array2<f64>; 2],
    pub stats: [Array2<f64>; 2],
    /// Common edges indexed by [`EdgeKind::index`].
    pub common: [TypedEdgeSet; 4],
}

impl GraphInputs {
    pub fn new(hand: &Mesh, obj: &Mesh, contact: &[usize]) -> Result<Self> {
        let (ho, oh) = common_edges_inter(hand.vertices(), obj.vertices(), contact)?;
        Ok(Self {
            vertices: [hand.vertex_matrix(), obj.vertex_matrix()],
            stats: [geometric_stats(hand)?, geometric_stats(obj)?],
            common: [face_edges(hand, EdgeKind::Hh)?, face_edges(obj, EdgeKind::Oo)?, ho, oh],
        })
    }

    pub fn node_count(&self, class: NodeClass) -> usize {
        self.vertices[class.index()].nrows()
    }

    /// Node features for the given parameters.
    pub fn node_features(&self, params: &RefinerParams, class: NodeClass) -> Result<NodeFeatureSet> {
        let enc = &params.encoder[class.index()];
        if enc.weight.nrows() != self.stats[class.index()].ncols() {
            return Err(Error::ShapeMismatch {
                name: format!("encoder.{}.weight", class.tag()),
                expected: (self.stats[class.index()].ncols(), enc.weight.ncols()),
                found: enc.weight.dim(),
            });
        }
        let zeta = self.stats[class.index()].dot(&enc.weight) + &enc.bias;
        let v = &self.vertices[class.index()];
        let tiled = zeta
            .broadcast((v.nrows(), zeta.ncols()))
            .expect("single row broadcasts")
            .to_owned();
        NodeFeatureSet::from_rows(class, concatenate![Axis(1), v.view(), tiled.view()])
    }
}

/// Node features plus the common, attention, and merged sets of every kind,
/// each indexed by [`EdgeKind::index`]. Disabled families are empty.
#[derive(Debug, Clone)]
pub struct FinalGraphs {
    pub hand: NodeFeatureSet,
    pub object: NodeFeatureSet,
    pub common: Vec<TypedEdgeSet>,
    pub attention: Vec<TypedEdgeSet>,
    pub merged: Vec<TypedEdgeSet>,
}

impl FinalGraphs {
    pub fn nodes(&self, class: NodeClass) -> &NodeFeatureSet {
        match class {
            NodeClass::Hand => &self.hand,
            NodeClass::Object => &self.object,
        }
    }

    pub fn merged(&self, kind: EdgeKind) -> &TypedEdgeSet {
        &self.merged[kind.index()]
    }

    pub fn summary(&self) -> BTreeMap<EdgeKind, KindSummary> {
        EdgeKind::ALL
            .iter()
            .map(|&k| {
                (
                    k,
                    KindSummary {
                        common: self.common[k.index()].len(),
                        attention: self.attention[k.index()].len(),
                        merged: self.merged[k.index()].len(),
                    },
                )
            })
            .collect()
    }

    pub fn dump(&self) -> GraphDump {
        let triplets = |s: &TypedEdgeSet| s.edges().iter().map(|e| (e.src, e.dst, e.weight)).collect();
        GraphDump {
            node_shapes: NodeClass::ALL
                .iter()
                .map(|&c| (c, self.nodes(c).rows().dim()))
                .collect(),
            kinds: EdgeKind::ALL
                .iter()
                .map(|&k| {
                    (
                        k,
                        KindDump {
                            common: triplets(&self.common[k.index()]),
                            attention: triplets(&self.attention[k.index()]),
                            merged: triplets(&self.merged[k.index()]),
                        },
                    )
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct KindSummary {
    pub common: usize,
    pub attention: usize,
    pub merged: usize,
}

/// Debug dump: node feature shapes and `(src, dst, weight)` triplets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphDump {
    pub node_shapes: BTreeMap<NodeClass, (usize, usize)>,
    pub kinds: BTreeMap<EdgeKind, KindDump>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KindDump {
    pub common: Vec<(usize, usize, f64)>,
    pub attention: Vec<(usize, usize, f64)>,
    pub merged: Vec<(usize, usize, f64)>,
}

/// Node features, attention thresholding, and merging for all four kinds.
pub fn build_final_graphs(inputs: &GraphInputs, params: &RefinerParams, config: &GraphConfig) -> Result<FinalGraphs> {
    config.validate()?;
    let hand = inputs.node_features(params, NodeClass::Hand)?;
    let object = inputs.node_features(params, NodeClass::Object)?;
    let nodes = |c: NodeClass| match c {
        NodeClass::Hand => &hand,
        NodeClass::Object => &object,
    };
    let (mut common, mut attention, mut merged) = (Vec::new(), Vec::new(), Vec::new());
    for kind in EdgeKind::ALL {
        let (ns, nd) = (nodes(kind.src_class()).len(), nodes(kind.dst_class()).len());
        let c = if config.use_common {
            inputs.common[kind.index()].clone()
        } else {
            TypedEdgeSet::empty(kind, EdgeOrigin::Common, ns, nd)
        };
        let a = if config.use_attention {
            let m = attention_matrix(
                nodes(kind.src_class()).rows().view(),
                nodes(kind.dst_class()).rows().view(),
                &params.attention[kind.index()],
            )?;
            attention_edges(m.view(), config.gamma, kind)?
        } else {
            TypedEdgeSet::empty(kind, EdgeOrigin::Attention, ns, nd)
        };
        merged.push(merge_edge_sets(&c, &a)?);
        common.push(c);
        attention.push(a);
    }
    Ok(FinalGraphs {
        hand,
        object,
        common,
        attention,
        merged,
    })
}

/// Merged connectivity of one kind arranged for differentiable weights:
/// `weight_e = common_e + A[entry_e]`, with `common_e` zero for
/// attention-only edges and `entry_e` absent for common-only edges.
#[derive(Debug, Clone)]
pub struct EdgeLayout {
    pub kind: EdgeKind,
    pub index: Arc<EdgeIndex>,
    pub common_weight: Array2<f64>,
    pub entries: Arc<Vec<Option<(usize, usize)>>>,
    pub n_common: usize,
    pub n_attention: usize,
}

type Slot = (f64, Option<(usize, usize)>);

impl EdgeLayout {
    pub fn plan(
        kind: EdgeKind,
        common: Option<&TypedEdgeSet>,
        attention: Option<ArrayView2<f64>>,
        gamma: f64,
    ) -> Result<Self> {
        // (src, dst) -> (common weight, attention entry)
        let mut slots: BTreeMap<(usize, usize), Slot> = BTreeMap::new();
        let mut n_common = 0;
        if let Some(c) = common {
            if c.kind() != kind {
                return Err(Error::KindMismatch(kind, c.kind()));
            }
            n_common = c.len();
            for e in c.edges() {
                slots.insert((e.src, e.dst), (e.weight, None));
            }
        }
        let mut n_attention = 0;
        if let Some(a) = attention {
            let att = attention_edges(a, gamma, kind)?;
            n_attention = att.len();
            for e in att.edges() {
                slots.entry((e.src, e.dst)).or_insert((0.0, None)).1 = Some((e.src, e.dst));
            }
        }
        let mut index = EdgeIndex::default();
        let mut common_weight = Array2::zeros((slots.len(), 1));
        let mut entries = Vec::with_capacity(slots.len());
        for (e, ((src, dst), (w, entry))) in slots.into_iter().enumerate() {
            index.src.push(src);
            index.dst.push(dst);
            common_weight[[e, 0]] = w;
            entries.push(entry);
        }
        Ok(Self {
            kind,
            index: Arc::new(index),
            common_weight,
            entries: Arc::new(entries),
            n_common,
            n_attention,
        })
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    /// Numeric weights for a given attention matrix.
    pub fn weights(&self, attention: Option<ArrayView2<f64>>) -> Array2<f64> {
        let mut w = self.common_weight.clone();
        if let Some(a) = attention {
            for (e, entry) in self.entries.iter().enumerate() {
                if let Some((r, c)) = *entry {
                    w[[e, 0]] += a[[r, c]];
                }
            }
        }
        w
    }

    /// Index layout for fixed merged weights.
    pub fn from_merged(set: &TypedEdgeSet) -> Self {
        Self {
            kind: set.kind(),
            index: Arc::new(EdgeIndex {
                src: set.src_indices(),
                dst: set.dst_indices(),
            }),
            common_weight: set.weight_column(),
            entries: Arc::new(vec![None; set.len()]),
            n_common: set.len(),
            n_attention: 0,
        }
    }
}
