//! Compressed sparse row matrices and the two graph propagation operators.

use ndarray::{Array2, ArrayView2};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::graph::Graph;

/// Row-compressed real matrix. Column indices are sorted within each row.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    rows: usize,
    cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

/// Rows below this count are multiplied on the calling thread.
const PAR_ROW_THRESHOLD: usize = 2048;

impl SparseMatrix {
    /// Validates and wraps raw CSR arrays.
    pub fn from_csr(
        rows: usize,
        cols: usize,
        row_ptr: Vec<usize>,
        col_idx: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self> {
        if row_ptr.len() != rows + 1 || row_ptr[0] != 0 {
            return Err(Error::shape("row_ptr must have rows + 1 entries starting at 0"));
        }
        if col_idx.len() != values.len() || *row_ptr.last().unwrap() != values.len() {
            return Err(Error::shape("col_idx/values length disagrees with row_ptr"));
        }
        for r in 0..rows {
            if row_ptr[r] > row_ptr[r + 1] {
                return Err(Error::arg("row_ptr must be nondecreasing"));
            }
            let cols_r = &col_idx[row_ptr[r]..row_ptr[r + 1]];
            if cols_r.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::arg("column indices must be strictly increasing within a row"));
            }
            if let Some(&c) = cols_r.last() {
                if c >= cols {
                    return Err(Error::Index {
                        what: "column",
                        index: c,
                        limit: cols,
                    });
                }
            }
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::arg("sparse values must be finite"));
        }
        Ok(Self {
            rows,
            cols,
            row_ptr,
            col_idx,
            values,
        })
    }

    /// Matrix with the sparsity pattern of `A + I`, entry `(v, u)` = `weight(v, u)`.
    fn with_self_loops(graph: &Graph, weight: impl Fn(usize, usize) -> f64) -> Self {
        let n = graph.num_nodes();
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::with_capacity(2 * graph.num_edges() + n);
        row_ptr.push(0);
        for v in 0..n {
            let nbrs = graph.neighbors(v);
            let split = nbrs.partition_point(|&u| u < v);
            col_idx.extend_from_slice(&nbrs[..split]);
            col_idx.push(v);
            col_idx.extend_from_slice(&nbrs[split..]);
            row_ptr.push(col_idx.len());
        }
        let mut values = Vec::with_capacity(col_idx.len());
        for v in 0..n {
            for &u in &col_idx[row_ptr[v]..row_ptr[v + 1]] {
                values.push(weight(v, u));
            }
        }
        Self {
            rows: n,
            cols: n,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// `(column, value)` pairs of row `r`.
    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        self.col_idx[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        match self.col_idx[span.clone()].binary_search(&c) {
            Ok(i) => self.values[span.start + i],
            Err(_) => 0.0,
        }
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.rows).map(|r| self.row(r).map(|(_, v)| v).sum()).collect()
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let mut out = Array2::zeros((self.rows, self.cols));
        for r in 0..self.rows {
            for (c, v) in self.row(r) {
                out[[r, c]] = v;
            }
        }
        out
    }

    /// `self * rhs`. Each output row is accumulated in column order of the
    /// sparse row, so the result does not depend on the thread count.
    pub fn matmul(&self, rhs: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        if rhs.nrows() != self.cols {
            return Err(Error::shape(format!(
                "sparse {}x{} times dense {}x{}",
                self.rows,
                self.cols,
                rhs.nrows(),
                rhs.ncols()
            )));
        }
        let width = rhs.ncols();
        let mut out = vec![0.0; self.rows * width];
        let fill_row = |r: usize, dst: &mut [f64]| {
            for (c, w) in self.row(r) {
                for (d, &x) in dst.iter_mut().zip(rhs.row(c).iter()) {
                    *d += w * x;
                }
            }
        };
        if width > 0 {
            if self.rows >= PAR_ROW_THRESHOLD {
                out.par_chunks_mut(width)
                    .enumerate()
                    .for_each(|(r, dst)| fill_row(r, dst));
            } else {
                out.chunks_mut(width)
                    .enumerate()
                    .for_each(|(r, dst)| fill_row(r, dst));
            }
        }
        Ok(Array2::from_shape_vec((self.rows, width), out).expect("shape matches buffer"))
    }
}

/// Self-loop augmented symmetric normalization `D̃^{-1/2} (A + I) D̃^{-1/2}`
/// with `d̃ = deg + 1`.
pub fn sym_norm_adjacency(graph: &Graph) -> SparseMatrix {
    let deg = |v: usize| (graph.degree(v) + 1) as f64;
    SparseMatrix::with_self_loops(graph, |v, u| 1.0 / (deg(v) * deg(u)).sqrt())
}

/// Uniform random-walk transition matrix `D̃^{-1} (A + I)`; row stochastic.
pub fn rw_transition(graph: &Graph) -> SparseMatrix {
    SparseMatrix::with_self_loops(graph, |v, _| 1.0 / (graph.degree(v) + 1) as f64)
}
