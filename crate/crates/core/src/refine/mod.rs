//! Graph-convolution refinement: message aggregation, the four-block
//! network, and displacement output. Inference and training share the same
//! tape-recorded forward pass.

use std::sync::Arc;

use ndarray::{Array2, ArrayView2};

use crate::autodiff::{EdgeIndex, Tape, Var};
use crate::error::{Error, Result};
use crate::graph::{
    build_final_graphs, EdgeKind, EdgeLayout, FinalGraphs, GraphConfig, GraphInputs, NodeClass, TypedEdgeSet,
};
use crate::mesh::Mesh;
use crate::params::{RefinerParams, BLOCKS};

/// `msg_i = x_i + Σ_{(p→i)} w_{p→i} · x_p` over the edges of `edges`.
pub fn aggregate(x_self: ArrayView2<f64>, x_neigh: ArrayView2<f64>, edges: &TypedEdgeSet) -> Result<Array2<f64>> {
    if edges.n_src() != x_neigh.nrows() || edges.n_dst() != x_self.nrows() {
        return Err(Error::ShapeMismatch {
            name: format!("{} edge endpoints", edges.kind().tag()),
            expected: (x_neigh.nrows(), x_self.nrows()),
            found: (edges.n_src(), edges.n_dst()),
        });
    }
    if x_self.ncols() != x_neigh.ncols() {
        return Err(Error::ShapeMismatch {
            name: "neighbor features".into(),
            expected: (x_neigh.nrows(), x_self.ncols()),
            found: x_neigh.dim(),
        });
    }
    let weights: Vec<f64> = edges.edges().iter().map(|e| e.weight).collect();
    Ok(crate::autodiff::kernels::aggregate(
        x_self,
        x_neigh,
        &edges.src_indices(),
        &edges.dst_indices(),
        &weights,
    ))
}

/// Parameter handles on a tape, laid out like [`RefinerParams`].
#[derive(Debug, Clone)]
pub struct ParamVars {
    pub encoder: [(Var, Var); 2],
    pub attention: [(Var, Var); 4],
    pub blocks: Vec<[(Var, Var); 2]>,
    pub heads: [Var; 2],
}

impl ParamVars {
    /// Records every tensor as a differentiable leaf (`trainable`) or as a
    /// constant.
    pub fn record(tape: &mut Tape, params: &RefinerParams, trainable: bool) -> Self {
        let mut leaf = |m: &Array2<f64>| {
            if trainable {
                tape.param(m.clone())
            } else {
                tape.constant(m.clone())
            }
        };
        let encoder = params.encoder.each_ref().map(|e| (leaf(&e.weight), leaf(&e.bias)));
        let attention = params.attention.each_ref().map(|a| (leaf(&a.query), leaf(&a.key)));
        let blocks = params
            .blocks
            .iter()
            .map(|b| b.each_ref().map(|u| (leaf(&u.weight), leaf(&u.bias))))
            .collect();
        let heads = params.heads.each_ref().map(leaf);
        Self {
            encoder,
            attention,
            blocks,
            heads,
        }
    }

    /// Handles in [`RefinerParams::tensors`] order.
    pub fn all(&self) -> Vec<Var> {
        let mut out = Vec::new();
        for (w, b) in &self.encoder {
            out.extend([*w, *b]);
        }
        for (q, k) in &self.attention {
            out.extend([*q, *k]);
        }
        for block in &self.blocks {
            for (w, b) in block {
                out.extend([*w, *b]);
            }
        }
        out.extend(self.heads);
        out
    }
}

/// Edge indices and weight columns of the four kinds, by [`EdgeKind::index`].
#[derive(Debug, Clone)]
pub struct GraphVars {
    pub index: [Arc<EdgeIndex>; 4],
    pub weights: [Var; 4],
}

impl GraphVars {
    /// Constant weights taken from fixed merged sets.
    pub fn constant(tape: &mut Tape, merged: &[TypedEdgeSet]) -> Result<Self> {
        if merged.len() != 4 {
            return Err(Error::InvalidParameter(format!(
                "expected 4 edge sets, got {}",
                merged.len()
            )));
        }
        for (k, s) in EdgeKind::ALL.iter().zip(merged) {
            if s.kind() != *k {
                return Err(Error::KindMismatch(*k, s.kind()));
            }
        }
        let layouts: Vec<EdgeLayout> = merged.iter().map(EdgeLayout::from_merged).collect();
        Ok(Self {
            index: std::array::from_fn(|k| layouts[k].index.clone()),
            weights: std::array::from_fn(|k| tape.constant(layouts[k].common_weight.clone())),
        })
    }
}

fn check_rows(tape: &Tape, x: Var, index: &EdgeIndex, n_src: usize) -> Result<()> {
    let n = tape.shape(x).0;
    if let Some(&i) = index.dst.iter().find(|&&i| i >= n) {
        return Err(Error::IndexOutOfRange {
            what: "edge destination",
            index: i,
            len: n,
        });
    }
    if let Some(&i) = index.src.iter().find(|&&i| i >= n_src) {
        return Err(Error::IndexOutOfRange {
            what: "edge source",
            index: i,
            len: n_src,
        });
    }
    Ok(())
}

/// One block: hand input `[msg_hh ‖ msg_oh]`, object input `[msg_oo ‖ msg_ho]`,
/// each followed by `ReLU(input · U + b)`.
pub fn gc_block(
    tape: &mut Tape,
    k: usize,
    block: &[(Var, Var); 2],
    x_hand: Var,
    x_obj: Var,
    graphs: &GraphVars,
) -> Result<(Var, Var)> {
    let (nh, no) = (tape.shape(x_hand).0, tape.shape(x_obj).0);
    let update = |tape: &mut Tape, class: NodeClass, x_self: Var, x_other: Var| -> Result<Var> {
        let (intra, inter) = match class {
            NodeClass::Hand => (EdgeKind::Hh, EdgeKind::Oh),
            NodeClass::Object => (EdgeKind::Oo, EdgeKind::Ho),
        };
        let n_other = match class {
            NodeClass::Hand => no,
            NodeClass::Object => nh,
        };
        let n_self = tape.shape(x_self).0;
        check_rows(tape, x_self, &graphs.index[intra.index()], n_self)?;
        check_rows(tape, x_self, &graphs.index[inter.index()], n_other)?;
        let m_intra = tape.aggregate(
            x_self,
            x_self,
            graphs.index[intra.index()].clone(),
            graphs.weights[intra.index()],
        );
        let m_inter = tape.aggregate(
            x_self,
            x_other,
            graphs.index[inter.index()].clone(),
            graphs.weights[inter.index()],
        );
        let input = tape.concat_cols(&[m_intra, m_inter]);
        let (w, b) = block[class.index()];
        let (rows, cols) = tape.shape(w);
        if tape.shape(input).1 != rows {
            return Err(Error::ShapeMismatch {
                name: format!("block{}.{}.weight", k + 1, class.tag()),
                expected: (tape.shape(input).1, cols),
                found: (rows, cols),
            });
        }
        let lin = tape.matmul(input, w);
        let lin = tape.add(lin, b);
        Ok(tape.relu(lin))
    };
    if tape.shape(x_hand).1 != tape.shape(x_obj).1 {
        return Err(Error::ShapeMismatch {
            name: format!("block{} object input", k + 1),
            expected: (no, tape.shape(x_hand).1),
            found: tape.shape(x_obj),
        });
    }
    let h = update(tape, NodeClass::Hand, x_hand, x_obj)?;
    let o = update(tape, NodeClass::Object, x_obj, x_hand)?;
    Ok((h, o))
}

/// Tape handles of one forward pass.
#[derive(Debug, Clone)]
pub struct BlockOutputs {
    /// `(hand, object)` output of every block.
    pub trace: Vec<(Var, Var)>,
    /// Displacements per class (`n x 3`).
    pub displacement: [Var; 2],
}

/// Blocks 1-3 chained; block 4 reads the initial features and all three
/// earlier outputs; a linear head maps its output to displacements.
pub fn run_blocks(
    tape: &mut Tape,
    pv: &ParamVars,
    x_hand: Var,
    x_obj: Var,
    graphs: &GraphVars,
) -> Result<BlockOutputs> {
    if pv.blocks.len() != BLOCKS {
        return Err(Error::InvalidParameter(format!(
            "expected {BLOCKS} blocks, got {}",
            pv.blocks.len()
        )));
    }
    let mut trace: Vec<(Var, Var)> = Vec::with_capacity(BLOCKS);
    let (mut h, mut o) = (x_hand, x_obj);
    for k in 0..BLOCKS {
        if k == BLOCKS - 1 {
            let mut hs = vec![x_hand];
            let mut os = vec![x_obj];
            hs.extend(trace.iter().map(|t| t.0));
            os.extend(trace.iter().map(|t| t.1));
            h = tape.concat_cols(&hs);
            o = tape.concat_cols(&os);
        }
        let out = gc_block(tape, k, &pv.blocks[k], h, o, graphs)?;
        trace.push(out);
        (h, o) = out;
    }
    let displacement = [tape.matmul(h, pv.heads[0]), tape.matmul(o, pv.heads[1])];
    Ok(BlockOutputs { trace, displacement })
}

/// Per-block outputs for both classes.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockTrace {
    pub hand: Vec<Array2<f64>>,
    pub object: Vec<Array2<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Refinement {
    pub displacement_hand: Array2<f64>,
    pub displacement_obj: Array2<f64>,
    pub refined_hand: Array2<f64>,
    pub refined_obj: Array2<f64>,
    pub trace: BlockTrace,
}

/// Runs the network on built graphs with fixed parameters.
pub fn refine(graphs: &FinalGraphs, params: &RefinerParams) -> Result<Refinement> {
    let width = params.dims.node_width();
    for class in NodeClass::ALL {
        let found = graphs.nodes(class).rows().dim();
        if found.1 != width {
            return Err(Error::ShapeMismatch {
                name: format!("{} node features", class.tag()),
                expected: (found.0, width),
                found,
            });
        }
    }
    let mut tape = Tape::new();
    let pv = ParamVars::record(&mut tape, params, false);
    let gv = GraphVars::constant(&mut tape, &graphs.merged)?;
    let xh = tape.constant(graphs.hand.rows().clone());
    let xo = tape.constant(graphs.object.rows().clone());
    let out = run_blocks(&mut tape, &pv, xh, xo, &gv)?;
    let vh = graphs.hand.coordinates().to_owned();
    let vo = graphs.object.coordinates().to_owned();
    let dh = tape.value(out.displacement[0]).clone();
    let d_o = tape.value(out.displacement[1]).clone();
    Ok(Refinement {
        refined_hand: &vh + &dh,
        refined_obj: &vo + &d_o,
        displacement_hand: dh,
        displacement_obj: d_o,
        trace: BlockTrace {
            hand: out.trace.iter().map(|t| tape.value(t.0).clone()).collect(),
            object: out.trace.iter().map(|t| tape.value(t.1).clone()).collect(),
        },
    })
}

/// Builds the graphs of one scene and returns the refined meshes.
pub fn refine_meshes(
    hand_init: &Mesh,
    obj_init: &Mesh,
    contact: &[usize],
    params: &RefinerParams,
    config: &GraphConfig,
) -> Result<(Mesh, Mesh, FinalGraphs)> {
    let inputs = GraphInputs::new(hand_init, obj_init, contact)?;
    let graphs = build_final_graphs(&inputs, params, config)?;
    let r = refine(&graphs, params)?;
    Ok((
        hand_init.with_vertex_matrix(&r.refined_hand)?,
        obj_init.with_vertex_matrix(&r.refined_obj)?,
        graphs,
    ))
}

/// Handles of a differentiable scene forward pass.
#[derive(Debug, Clone)]
pub struct SceneForward {
    pub refined: [Var; 2],
    pub outputs: BlockOutputs,
    pub layouts: Vec<EdgeLayout>,
}

/// Differentiable forward pass: descriptors, attention, thresholded graph
/// connectivity, and the blocks, all recorded on `tape`. Connectivity is
/// fixed by the current attention values; the weights of kept attention
/// edges stay differentiable.
pub fn forward_scene(
    tape: &mut Tape,
    pv: &ParamVars,
    inputs: &GraphInputs,
    config: &GraphConfig,
) -> Result<SceneForward> {
    config.validate()?;
    let mut x = Vec::with_capacity(2);
    let mut verts = Vec::with_capacity(2);
    for class in NodeClass::ALL {
        let c = class.index();
        let v = tape.constant(inputs.vertices[c].clone());
        let stats = tape.constant(inputs.stats[c].clone());
        let (w, b) = pv.encoder[c];
        if tape.shape(w).0 != inputs.stats[c].ncols() {
            return Err(Error::ShapeMismatch {
                name: format!("encoder.{}.weight", class.tag()),
                expected: (inputs.stats[c].ncols(), tape.shape(w).1),
                found: tape.shape(w),
            });
        }
        let zeta = tape.matmul(stats, w);
        let zeta = tape.add(zeta, b);
        let tiled = tape.repeat_rows(zeta, inputs.node_count(class));
        x.push(tape.concat_cols(&[v, tiled]));
        verts.push(v);
    }
    let mut layouts = Vec::with_capacity(4);
    let mut weights = Vec::with_capacity(4);
    for kind in EdgeKind::ALL {
        let common = config.use_common.then(|| &inputs.common[kind.index()]);
        let (layout, w) = if config.use_attention {
            let (wq, wk) = pv.attention[kind.index()];
            if tape.shape(wq).0 != tape.shape(x[0]).1 {
                return Err(Error::ShapeMismatch {
                    name: format!("attention.{}.query", kind.tag()),
                    expected: (tape.shape(x[0]).1, tape.shape(wq).1),
                    found: tape.shape(wq),
                });
            }
            let q = tape.matmul(x[kind.src_class().index()], wq);
            let k = tape.matmul(x[kind.dst_class().index()], wk);
            let logits = tape.matmul_t(q, k);
            let logits = tape.scale(logits, 1.0 / (tape.shape(wq).1 as f64).sqrt());
            let a = tape.softmax_rows(logits);
            let layout = EdgeLayout::plan(kind, common, Some(tape.value(a).view()), config.gamma)?;
            let base = tape.constant(layout.common_weight.clone());
            let w = if layout.n_attention > 0 {
                let picked = tape.gather_entries(a, layout.entries.clone());
                tape.add(base, picked)
            } else {
                base
            };
            (layout, w)
        } else {
            let layout = EdgeLayout::plan(kind, common, None, config.gamma)?;
            let w = tape.constant(layout.common_weight.clone());
            (layout, w)
        };
        layouts.push(layout);
        weights.push(w);
    }
    let graphs = GraphVars {
        index: std::array::from_fn(|k| layouts[k].index.clone()),
        weights: std::array::from_fn(|k| weights[k]),
    };
    let outputs = run_blocks(tape, pv, x[0], x[1], &graphs)?;
    let refined = [
        tape.add(verts[0], outputs.displacement[0]),
        tape.add(verts[1], outputs.displacement[1]),
    ];
    Ok(SceneForward {
        refined,
        outputs,
        layouts,
    })
}

#[cfg(test)]
mod tests;
