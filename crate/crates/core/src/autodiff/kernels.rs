//! Forward kernels shared by the tape and by non-differentiable callers, so
//! both paths compute identical values.

use ndarray::{Array2, ArrayView2, Axis};

/// Row-wise softmax with max subtraction.
pub fn softmax_rows(x: ArrayView2<f64>) -> Array2<f64> {
    let mut out = x.to_owned();
    for mut row in out.rows_mut() {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        row.mapv_inplace(|v| v / sum);
    }
    out
}

/// `out[dst] = x_self[dst] + Σ w_e · x_neigh[src_e]` over edges `e` into `dst`.
pub fn aggregate(
    x_self: ArrayView2<f64>,
    x_neigh: ArrayView2<f64>,
    src: &[usize],
    dst: &[usize],
    weights: &[f64],
) -> Array2<f64> {
    let mut out = x_self.as_standard_layout().into_owned();
    let neigh = x_neigh.as_standard_layout();
    let width = out.ncols();
    let out_s = out.as_slice_mut().expect("standard layout");
    let neigh_s = neigh.as_slice().expect("standard layout");
    for ((&s, &d), &w) in src.iter().zip(dst).zip(weights) {
        let from = &neigh_s[s * width..(s + 1) * width];
        let to = &mut out_s[d * width..(d + 1) * width];
        for (t, f) in to.iter_mut().zip(from) {
            *t += w * f;
        }
    }
    out
}

/// Dense pairwise squared Euclidean distances between the rows of `a` and `b`.
pub fn pairwise_sq_dist(a: ArrayView2<f64>, b: ArrayView2<f64>) -> Array2<f64> {
    let mut out = Array2::zeros((a.nrows(), b.nrows()));
    for (i, ra) in a.rows().into_iter().enumerate() {
        for (j, rb) in b.rows().into_iter().enumerate() {
            out[[i, j]] = ra.iter().zip(rb.iter()).map(|(x, y)| (x - y) * (x - y)).sum();
        }
    }
    out
}

/// Index of the smallest entry per row (lowest index on ties).
pub fn argmin_rows(x: ArrayView2<f64>) -> Vec<usize> {
    x.rows().into_iter().map(|r| argmin(r.iter().copied())).collect()
}

pub fn argmin_cols(x: ArrayView2<f64>) -> Vec<usize> {
    x.axis_iter(Axis(1)).map(|c| argmin(c.iter().copied())).collect()
}

fn argmin(it: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::INFINITY);
    for (i, v) in it.enumerate() {
        if v < best.1 {
            best = (i, v);
        }
    }
    best.0
}

/// Constant sparse matrix stored by rows.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    n_cols: usize,
    rows: Vec<Vec<(usize, f64)>>,
}

impl SparseMatrix {
    pub fn new(n_cols: usize, rows: Vec<Vec<(usize, f64)>>) -> Self {
        assert!(
            rows.iter().flatten().all(|&(c, _)| c < n_cols),
            "sparse column out of range"
        );
        Self { n_cols, rows }
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn rows(&self) -> &[Vec<(usize, f64)>] {
        &self.rows
    }

    pub fn matmul(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let mut out = Array2::zeros((self.rows.len(), x.ncols()));
        for (mut o, row) in out.rows_mut().into_iter().zip(&self.rows) {
            for &(c, w) in row {
                o.scaled_add(w, &x.row(c));
            }
        }
        out
    }

    /// `selfᵀ · g`
    pub fn transpose_matmul(&self, g: ArrayView2<f64>) -> Array2<f64> {
        let mut out = Array2::zeros((self.n_cols, g.ncols()));
        for (r, row) in self.rows.iter().enumerate() {
            for &(c, w) in row {
                out.row_mut(c).scaled_add(w, &g.row(r));
            }
        }
        out
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let mut out = Array2::zeros((self.rows.len(), self.n_cols));
        for (r, row) in self.rows.iter().enumerate() {
            for &(c, w) in row {
                out[[r, c]] += w;
            }
        }
        out
    }
}
