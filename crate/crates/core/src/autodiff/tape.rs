use std::ops::Range;
use std::sync::Arc;

use ndarray::{s, Array2, Axis};

use super::kernels::{self, SparseMatrix};
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

/// Source/destination lists for [`Tape::aggregate`].
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct EdgeIndex {
    pub src: Vec<usize>,
    pub dst: Vec<usize>,
}

impl EdgeIndex {
    pub fn len(&self) -> usize {
        self.src.len()
    }

    pub fn is_empty(&self) -> bool {
        self.src.is_empty()
    }
}

/// Deliberately wrong backward rules, used as negative controls for
/// gradient checking.
#[doc(hidden)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fault {
    /// ReLU passes the upstream gradient through unmasked.
    ReluIgnoresMask,
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    MatMulT(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Relu(Var),
    SoftmaxRows(Var),
    ConcatCols(Vec<Var>),
    SliceCols(Var, Range<usize>),
    Sum(Var),
    Mean(Var),
    Sqrt(Var),
    RowSqNorm(Var),
    MinRows(Var, Vec<usize>),
    MinCols(Var, Vec<usize>),
    RepeatRows(Var),
    GatherRows(Var, Arc<Vec<usize>>),
    GatherEntries(Var, Arc<Vec<Option<(usize, usize)>>>),
    Aggregate {
        x_self: Var,
        x_neigh: Var,
        edges: Arc<EdgeIndex>,
        weights: Var,
    },
    SparseMatMul(Arc<SparseMatrix>, Var),
    PairwiseSqDist(Var, Var),
}

#[derive(Debug)]
struct Node {
    value: Array2<f64>,
    op: Op,
    needs_grad: bool,
}

/// Records matrix operations for reverse-mode differentiation.
///
/// Every value is a dense `f64` matrix; scalars are `1 x 1`. Nodes are
/// appended in evaluation order, so the tape is always a topologically
/// sorted DAG.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    fault: Option<Fault>,
}

/// Gradients of a scalar with respect to every differentiable leaf.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Array2<f64>>>,
}

impl Gradients {
    /// `None` when `v` is a constant or does not influence the loss.
    pub fn get(&self, v: Var) -> Option<&Array2<f64>> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    /// Like [`Gradients::get`] but zero-filled to `shape` when absent.
    pub fn get_or_zeros(&self, v: Var, shape: (usize, usize)) -> Array2<f64> {
        self.get(v).cloned().unwrap_or_else(|| Array2::zeros(shape))
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    #[doc(hidden)]
    pub fn inject_fault(&mut self, fault: Fault) {
        self.fault = Some(fault);
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Array2<f64>, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node { value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    fn derived(&mut self, value: Array2<f64>, op: Op, parents: &[Var]) -> Var {
        let needs = parents.iter().any(|p| self.nodes[p.0].needs_grad);
        self.push(value, op, needs)
    }

    /// Differentiable leaf.
    pub fn param(&mut self, value: Array2<f64>) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Leaf excluded from differentiation.
    pub fn constant(&mut self, value: Array2<f64>) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Array2<f64> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.dim()
    }

    /// Value of a `1 x 1` node.
    pub fn scalar(&self, v: Var) -> f64 {
        let val = self.value(v);
        debug_assert_eq!(val.dim(), (1, 1));
        val[[0, 0]]
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).dot(self.value(b));
        self.derived(v, Op::MatMul(a, b), &[a, b])
    }

    /// `a · bᵀ`
    pub fn matmul_t(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).dot(&self.value(b).t());
        self.derived(v, Op::MatMulT(a, b), &[a, b])
    }

    /// Elementwise sum; `b` may broadcast as `1 x c`, `r x 1` or `1 x 1`.
    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) + self.value(b);
        self.derived(v, Op::Add(a, b), &[a, b])
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) - self.value(b);
        self.derived(v, Op::Sub(a, b), &[a, b])
    }

    /// Elementwise product with the same broadcasting as [`Tape::add`].
    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) * self.value(b);
        self.derived(v, Op::Mul(a, b), &[a, b])
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        let v = self.value(a) * k;
        self.derived(v, Op::Scale(a, k), &[a])
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(|x| x.max(0.0));
        self.derived(v, Op::Relu(a), &[a])
    }

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let v = kernels::softmax_rows(self.value(a).view());
        self.derived(v, Op::SoftmaxRows(a), &[a])
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let views: Vec<_> = parts.iter().map(|&p| self.value(p).view()).collect();
        let v = ndarray::concatenate(Axis(1), &views).expect("row counts must agree");
        self.derived(v, Op::ConcatCols(parts.to_vec()), parts)
    }

    pub fn slice_cols(&mut self, a: Var, cols: Range<usize>) -> Var {
        let v = self.value(a).slice(s![.., cols.clone()]).to_owned();
        self.derived(v, Op::SliceCols(a, cols), &[a])
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let v = Array2::from_elem((1, 1), self.value(a).sum());
        self.derived(v, Op::Sum(a), &[a])
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let val = self.value(a);
        let v = Array2::from_elem((1, 1), val.sum() / val.len() as f64);
        self.derived(v, Op::Mean(a), &[a])
    }

    pub fn sqrt(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(f64::sqrt);
        self.derived(v, Op::Sqrt(a), &[a])
    }

    /// Per-row squared norm, `n x c → n x 1`.
    pub fn row_sq_norm(&mut self, a: Var) -> Var {
        let v = self.value(a).map_axis(Axis(1), |r| r.dot(&r)).insert_axis(Axis(1));
        self.derived(v, Op::RowSqNorm(a), &[a])
    }

    /// Per-row minimum, `n x m → n x 1`. The subgradient goes to the argmin,
    /// lowest column index on ties.
    pub fn min_rows(&mut self, a: Var) -> Var {
        let val = self.value(a);
        let idx = kernels::argmin_rows(val.view());
        let v = Array2::from_shape_fn((idx.len(), 1), |(i, _)| val[[i, idx[i]]]);
        self.derived(v, Op::MinRows(a, idx), &[a])
    }

    /// Per-column minimum, `n x m → 1 x m`, lowest row index on ties.
    pub fn min_cols(&mut self, a: Var) -> Var {
        let val = self.value(a);
        let idx = kernels::argmin_cols(val.view());
        let v = Array2::from_shape_fn((1, idx.len()), |(_, j)| val[[idx[j], j]]);
        self.derived(v, Op::MinCols(a, idx), &[a])
    }

    /// Tiles a `1 x c` row `n` times.
    pub fn repeat_rows(&mut self, a: Var, n: usize) -> Var {
        let row = self.value(a);
        assert_eq!(row.nrows(), 1, "repeat_rows expects a single row");
        let v = row.broadcast((n, row.ncols())).expect("broadcast").to_owned();
        self.derived(v, Op::RepeatRows(a), &[a])
    }

    pub fn gather_rows(&mut self, a: Var, index: Arc<Vec<usize>>) -> Var {
        let v = self.value(a).select(Axis(0), &index);
        self.derived(v, Op::GatherRows(a, index), &[a])
    }

    /// Picks matrix entries into a column vector; `None` entries read as 0.
    pub fn gather_entries(&mut self, a: Var, entries: Arc<Vec<Option<(usize, usize)>>>) -> Var {
        let val = self.value(a);
        let v = Array2::from_shape_fn((entries.len(), 1), |(e, _)| {
            entries[e].map_or(0.0, |(r, c)| val[[r, c]])
        });
        self.derived(v, Op::GatherEntries(a, entries), &[a])
    }

    /// Weighted message passing: row `i` of the result is
    /// `x_self[i] + Σ_{e: dst_e = i} w_e · x_neigh[src_e]`.
    /// `weights` is an `|E| x 1` column.
    pub fn aggregate(&mut self, x_self: Var, x_neigh: Var, edges: Arc<EdgeIndex>, weights: Var) -> Var {
        let w = self.value(weights);
        let w = w.as_slice().expect("weights column is contiguous");
        let v = kernels::aggregate(
            self.value(x_self).view(),
            self.value(x_neigh).view(),
            &edges.src,
            &edges.dst,
            w,
        );
        self.derived(
            v,
            Op::Aggregate {
                x_self,
                x_neigh,
                edges,
                weights,
            },
            &[x_self, x_neigh, weights],
        )
    }

    /// `S · x` for a constant sparse `S`.
    pub fn sparse_matmul(&mut self, s: Arc<SparseMatrix>, x: Var) -> Var {
        let v = s.matmul(self.value(x).view());
        self.derived(v, Op::SparseMatMul(s, x), &[x])
    }

    /// `D[i, j] = ‖a_i − b_j‖²` over rows of `a` and `b`.
    pub fn pairwise_sq_dist(&mut self, a: Var, b: Var) -> Var {
        let v = kernels::pairwise_sq_dist(self.value(a).view(), self.value(b).view());
        self.derived(v, Op::PairwiseSqDist(a, b), &[a, b])
    }

    /// Reverse sweep from a `1 x 1` node. Gradient accumulators start at
    /// zero on every call.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let shape = self.shape(loss);
        if shape != (1, 1) {
            return Err(Error::NonScalarLoss(shape));
        }
        let mut grads: Vec<Option<Array2<f64>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Array2::ones((1, 1)));

        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            if matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.propagate(node, &g, &mut grads);
        }
        Ok(Gradients { grads })
    }

    fn propagate(&self, node: &Node, g: &Array2<f64>, grads: &mut [Option<Array2<f64>>]) {
        let val = |v: Var| &self.nodes[v.0].value;
        let needs = |v: Var| self.nodes[v.0].needs_grad;
        let mut acc = |v: Var, contrib: Array2<f64>| {
            if !self.nodes[v.0].needs_grad {
                return;
            }
            let target_shape = self.nodes[v.0].value.dim();
            let contrib = reduce_to_shape(contrib, target_shape);
            match &mut grads[v.0] {
                Some(existing) => *existing += &contrib,
                slot => *slot = Some(contrib),
            }
        };

        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                if needs(*a) {
                    acc(*a, g.dot(&val(*b).t()));
                }
                if needs(*b) {
                    acc(*b, val(*a).t().dot(g));
                }
            }
            Op::MatMulT(a, b) => {
                if needs(*a) {
                    acc(*a, g.dot(val(*b)));
                }
                if needs(*b) {
                    acc(*b, g.t().dot(val(*a)));
                }
            }
            Op::Add(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.clone());
            }
            Op::Sub(a, b) => {
                acc(*a, g.clone());
                acc(*b, -g);
            }
            Op::Mul(a, b) => {
                if needs(*a) {
                    acc(*a, g * val(*b));
                }
                if needs(*b) {
                    acc(*b, g * val(*a));
                }
            }
            Op::Scale(a, k) => acc(*a, g * *k),
            Op::Relu(a) => {
                if self.fault == Some(Fault::ReluIgnoresMask) {
                    acc(*a, g.clone());
                } else {
                    let mut d = g.clone();
                    d.zip_mut_with(val(*a), |d, &x| {
                        if x <= 0.0 {
                            *d = 0.0;
                        }
                    });
                    acc(*a, d);
                }
            }
            Op::SoftmaxRows(a) => {
                let y = &node.value;
                let mut d = g * y;
                for (mut drow, yrow) in d.rows_mut().into_iter().zip(y.rows()) {
                    let s: f64 = drow.sum();
                    drow.zip_mut_with(&yrow, |dv, &yv| *dv -= yv * s);
                }
                acc(*a, d);
            }
            Op::ConcatCols(parts) => {
                let mut start = 0;
                for &p in parts {
                    let w = val(p).ncols();
                    if needs(p) {
                        acc(p, g.slice(s![.., start..start + w]).to_owned());
                    }
                    start += w;
                }
            }
            Op::SliceCols(a, cols) => {
                let mut d = Array2::zeros(val(*a).dim());
                d.slice_mut(s![.., cols.clone()]).assign(g);
                acc(*a, d);
            }
            Op::Sum(a) => acc(*a, Array2::from_elem(val(*a).dim(), g[[0, 0]])),
            Op::Mean(a) => {
                let n = val(*a).len() as f64;
                acc(*a, Array2::from_elem(val(*a).dim(), g[[0, 0]] / n));
            }
            Op::Sqrt(a) => {
                let mut d = g.clone();
                d.zip_mut_with(&node.value, |d, &y| *d /= 2.0 * y);
                acc(*a, d);
            }
            Op::RowSqNorm(a) => {
                let mut d = val(*a) * 2.0;
                for (mut row, gv) in d.rows_mut().into_iter().zip(g.iter()) {
                    row *= *gv;
                }
                acc(*a, d);
            }
            Op::MinRows(a, idx) => {
                let mut d = Array2::zeros(val(*a).dim());
                for (i, &j) in idx.iter().enumerate() {
                    d[[i, j]] = g[[i, 0]];
                }
                acc(*a, d);
            }
            Op::MinCols(a, idx) => {
                let mut d = Array2::zeros(val(*a).dim());
                for (j, &i) in idx.iter().enumerate() {
                    d[[i, j]] = g[[0, j]];
                }
                acc(*a, d);
            }
            Op::RepeatRows(a) => acc(*a, g.sum_axis(Axis(0)).insert_axis(Axis(0))),
            Op::GatherRows(a, index) => {
                let mut d = Array2::zeros(val(*a).dim());
                for (r, &src) in index.iter().enumerate() {
                    d.row_mut(src).scaled_add(1.0, &g.row(r));
                }
                acc(*a, d);
            }
            Op::GatherEntries(a, entries) => {
                let mut d = Array2::zeros(val(*a).dim());
                for (e, entry) in entries.iter().enumerate() {
                    if let Some((r, c)) = *entry {
                        d[[r, c]] += g[[e, 0]];
                    }
                }
                acc(*a, d);
            }
            Op::Aggregate {
                x_self,
                x_neigh,
                edges,
                weights,
            } => {
                acc(*x_self, g.clone());
                let w = val(*weights);
                let w = w.as_slice().expect("weights column is contiguous");
                let g = g.as_standard_layout();
                let width = g.ncols();
                let gs = g.as_slice().expect("standard layout");
                if needs(*x_neigh) {
                    let mut d = Array2::zeros(val(*x_neigh).dim());
                    let ds = d.as_slice_mut().expect("fresh array");
                    for ((&s, &t), &we) in edges.src.iter().zip(&edges.dst).zip(w) {
                        let from = &gs[t * width..(t + 1) * width];
                        for (o, f) in ds[s * width..(s + 1) * width].iter_mut().zip(from) {
                            *o += we * f;
                        }
                    }
                    acc(*x_neigh, d);
                }
                if needs(*weights) {
                    let xn = val(*x_neigh).as_standard_layout();
                    let xs = xn.as_slice().expect("standard layout");
                    let d = Array2::from_shape_fn((edges.len(), 1), |(e, _)| {
                        let (s, t) = (edges.src[e], edges.dst[e]);
                        gs[t * width..(t + 1) * width]
                            .iter()
                            .zip(&xs[s * width..(s + 1) * width])
                            .map(|(a, b)| a * b)
                            .sum()
                    });
                    acc(*weights, d);
                }
            }
            Op::SparseMatMul(m, x) => acc(*x, m.transpose_matmul(g.view())),
            Op::PairwiseSqDist(a, b) => {
                let (va, vb) = (val(*a), val(*b));
                let mut da = Array2::zeros(va.dim());
                let mut db = Array2::zeros(vb.dim());
                for i in 0..va.nrows() {
                    for j in 0..vb.nrows() {
                        let gij = g[[i, j]];
                        if gij == 0.0 {
                            continue;
                        }
                        for k in 0..va.ncols() {
                            let diff = 2.0 * gij * (va[[i, k]] - vb[[j, k]]);
                            da[[i, k]] += diff;
                            db[[j, k]] -= diff;
                        }
                    }
                }
                acc(*a, da);
                acc(*b, db);
            }
        }
    }
}

/// Sums a broadcast gradient back down to the operand's shape.
fn reduce_to_shape(g: Array2<f64>, shape: (usize, usize)) -> Array2<f64> {
    let mut g = g;
    if g.nrows() != shape.0 {
        debug_assert_eq!(shape.0, 1);
        g = g.sum_axis(Axis(0)).insert_axis(Axis(0));
    }
    if g.ncols() != shape.1 {
        debug_assert_eq!(shape.1, 1);
        g = g.sum_axis(Axis(1)).insert_axis(Axis(1));
    }
    g
}
