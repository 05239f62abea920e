//! Positional encodings from truncated random walks and skip-gram training.

mod skipgram;
mod walks;

use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::graph::Graph;

pub use skipgram::{train_skipgram, SkipGram, SkipGramConfig};
pub use walks::{generate_walks, random_walk, WalkCorpus};

/// Node embedding matrix, one row per node.
#[derive(Debug, Clone, PartialEq)]
pub struct PositionalEmbedding {
    phi: Array2<f64>,
}

impl PositionalEmbedding {
    pub fn new(phi: Array2<f64>) -> Result<Self> {
        if phi.ncols() == 0 {
            return Err(Error::arg("embedding dimension must be at least 1"));
        }
        if phi.iter().any(|x| !x.is_finite()) {
            return Err(Error::arg("embedding contains non-finite values"));
        }
        Ok(Self { phi })
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.phi
    }

    pub fn into_matrix(self) -> Array2<f64> {
        self.phi
    }

    pub fn dim(&self) -> usize {
        self.phi.ncols()
    }

    pub fn num_nodes(&self) -> usize {
        self.phi.nrows()
    }

    /// Euclidean distance between the embeddings of `u` and `v`.
    pub fn distance(&self, u: usize, v: usize) -> f64 {
        self.phi
            .row(u)
            .iter()
            .zip(self.phi.row(v).iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    /// Writes `node_id,e_0,...,e_{dim-1}`.
    pub fn save_csv(&self, path: &Path) -> Result<()> {
        crate::io::write_node_matrix(path, "e", &self.phi)
    }

    pub fn load_csv(path: &Path) -> Result<Self> {
        Self::new(crate::io::read_node_matrix(path)?)
    }
}

/// `‖Φ_u − Φ_v‖₂` for two distinct nodes of `graph`.
pub fn positional_distinguishability(
    graph: &Graph,
    phi: &PositionalEmbedding,
    u: usize,
    v: usize,
) -> Result<f64> {
    let n = graph.num_nodes();
    if phi.num_nodes() != n {
        return Err(Error::shape("embedding rows must match node count"));
    }
    if let Some(bad) = [u, v].into_iter().find(|&x| x >= n) {
        return Err(Error::Index {
            what: "node",
            index: bad,
            limit: n,
        });
    }
    if u == v {
        return Err(Error::arg("distinguishability needs two distinct nodes"));
    }
    Ok(phi.distance(u, v))
}
