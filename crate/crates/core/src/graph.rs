//! Graph, label and dataset containers.

use ndarray::Array2;
use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::rng::{substream, Stream};

/// Immutable simple undirected graph in CSR form.
///
/// Neighbor lists are sorted and contain no duplicates or self-loops.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    offsets: Vec<usize>,
    neighbors: Vec<usize>,
}

impl Graph {
    /// Builds a graph on `n` nodes. Edges are symmetrized and deduplicated;
    /// self-loops are dropped.
    pub fn from_edges<I>(n: usize, edges: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (u, v) in edges {
            for x in [u, v] {
                if x >= n {
                    return Err(Error::Index {
                        what: "node",
                        index: x,
                        limit: n,
                    });
                }
            }
            if u == v {
                continue;
            }
            adj[u].push(v);
            adj[v].push(u);
        }
        let mut offsets = Vec::with_capacity(n + 1);
        let mut neighbors = Vec::new();
        offsets.push(0);
        for mut list in adj {
            list.sort_unstable();
            list.dedup();
            neighbors.extend_from_slice(&list);
            offsets.push(neighbors.len());
        }
        Ok(Self { offsets, neighbors })
    }

    /// Graph with `n` nodes and no edges.
    pub fn empty(n: usize) -> Self {
        Self {
            offsets: vec![0; n + 1],
            neighbors: Vec::new(),
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.offsets.len() - 1
    }

    /// Number of undirected edges.
    pub fn num_edges(&self) -> usize {
        self.neighbors.len() / 2
    }

    #[inline]
    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.neighbors[self.offsets[v]..self.offsets[v + 1]]
    }

    /// Degree of `v`, not counting a self-loop.
    #[inline]
    pub fn degree(&self, v: usize) -> usize {
        self.offsets[v + 1] - self.offsets[v]
    }

    pub fn degrees(&self) -> Vec<usize> {
        (0..self.num_nodes()).map(|v| self.degree(v)).collect()
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.neighbors(u).binary_search(&v).is_ok()
    }

    /// Each undirected edge once, as `(u, v)` with `u < v`, in CSR order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.num_nodes()).flat_map(move |u| {
            self.neighbors(u)
                .iter()
                .copied()
                .filter(move |&v| v > u)
                .map(move |v| (u, v))
        })
    }
}

/// Per-node label sets over `num_labels` classes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelSets {
    num_labels: usize,
    sets: Vec<Vec<usize>>,
}

impl LabelSets {
    /// Sorts and deduplicates each set; rejects ids `>= num_labels`.
    pub fn new(num_labels: usize, mut sets: Vec<Vec<usize>>) -> Result<Self> {
        if num_labels == 0 {
            return Err(Error::arg("number of labels must be at least 1"));
        }
        for set in &mut sets {
            set.sort_unstable();
            set.dedup();
            if let Some(&last) = set.last() {
                if last >= num_labels {
                    return Err(Error::Index {
                        what: "label",
                        index: last,
                        limit: num_labels,
                    });
                }
            }
        }
        Ok(Self { num_labels, sets })
    }

    /// Reads a binary matrix; any entry `> 0.5` counts as a positive.
    pub fn from_dense(y: &Array2<f64>) -> Result<Self> {
        let sets = y
            .rows()
            .into_iter()
            .map(|row| {
                row.iter()
                    .enumerate()
                    .filter(|(_, &x)| x > 0.5)
                    .map(|(c, _)| c)
                    .collect()
            })
            .collect();
        Self::new(y.ncols(), sets)
    }

    pub fn num_labels(&self) -> usize {
        self.num_labels
    }

    pub fn num_nodes(&self) -> usize {
        self.sets.len()
    }

    #[inline]
    pub fn get(&self, v: usize) -> &[usize] {
        &self.sets[v]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[usize]> {
        self.sets.iter().map(Vec::as_slice)
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let mut y = Array2::zeros((self.sets.len(), self.num_labels));
        for (v, set) in self.sets.iter().enumerate() {
            for &c in set {
                y[[v, c]] = 1.0;
            }
        }
        y
    }

    /// Label counts per node.
    pub fn counts(&self) -> Vec<usize> {
        self.sets.iter().map(Vec::len).collect()
    }

    fn resize(&mut self, n: usize) {
        self.sets.resize(n, Vec::new());
    }
}

/// Role of a node in a transductive split.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Role {
    Unassigned,
    Train,
    Val,
    Test,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Unassigned => "unassigned",
            Role::Train => "train",
            Role::Val => "val",
            Role::Test => "test",
        }
    }
}

/// Train/validation/test assignment. Disjoint by construction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    roles: Vec<Role>,
}

impl Split {
    pub fn unassigned(n: usize) -> Self {
        Self {
            roles: vec![Role::Unassigned; n],
        }
    }

    pub fn from_roles(roles: Vec<Role>) -> Self {
        Self { roles }
    }

    /// Uniformly random split with `round(train_frac * n)` training and
    /// `round(val_frac * n)` validation nodes; the rest are test nodes.
    pub fn random(n: usize, train_frac: f64, val_frac: f64, seed: u64) -> Result<Self> {
        let in_unit = |x: f64| x > 0.0 && x < 1.0;
        if !in_unit(train_frac) || !in_unit(val_frac) || train_frac + val_frac >= 1.0 {
            return Err(Error::arg(format!(
                "split fractions must lie in (0,1) and sum below 1, got {train_frac} and {val_frac}"
            )));
        }
        let n_train = (train_frac * n as f64).round() as usize;
        let n_val = ((val_frac * n as f64).round() as usize).min(n - n_train);
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut substream(seed, Stream::Splits));
        let mut roles = vec![Role::Test; n];
        for &v in &order[..n_train] {
            roles[v] = Role::Train;
        }
        for &v in &order[n_train..n_train + n_val] {
            roles[v] = Role::Val;
        }
        Ok(Self { roles })
    }

    pub fn len(&self) -> usize {
        self.roles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.roles.is_empty()
    }

    #[inline]
    pub fn role(&self, v: usize) -> Role {
        self.roles[v]
    }

    pub fn roles(&self) -> &[Role] {
        &self.roles
    }

    pub fn set(&mut self, v: usize, role: Role) {
        self.roles[v] = role;
    }

    /// Nodes with `role`, ascending.
    pub fn nodes(&self, role: Role) -> Vec<usize> {
        (0..self.roles.len())
            .filter(|&v| self.roles[v] == role)
            .collect()
    }

    pub fn mask(&self, role: Role) -> Vec<bool> {
        self.roles.iter().map(|&r| r == role).collect()
    }

    pub fn count(&self, role: Role) -> usize {
        self.roles.iter().filter(|&&r| r == role).count()
    }

    pub fn is_assigned(&self) -> bool {
        self.count(Role::Train) > 0
    }
}

/// Graph plus optional node features, labels and a split.
#[derive(Debug, Clone)]
pub struct Dataset {
    graph: Graph,
    features: Option<Array2<f64>>,
    labels: LabelSets,
    split: Split,
}

impl Dataset {
    /// Assembles a dataset, checking that every component covers the same nodes.
    pub fn new(
        graph: Graph,
        features: Option<Array2<f64>>,
        labels: LabelSets,
        split: Split,
    ) -> Result<Self> {
        let n = graph.num_nodes();
        if labels.num_nodes() != n {
            return Err(Error::shape(format!(
                "labels cover {} nodes, graph has {n}",
                labels.num_nodes()
            )));
        }
        if let Some(x) = &features {
            if x.nrows() != n {
                return Err(Error::shape(format!(
                    "features have {} rows, graph has {n} nodes",
                    x.nrows()
                )));
            }
            if x.iter().any(|v| !v.is_finite()) {
                return Err(Error::arg("features contain non-finite values"));
            }
        }
        if split.len() != n {
            return Err(Error::shape(format!(
                "split covers {} nodes, graph has {n}",
                split.len()
            )));
        }
        Ok(Self {
            graph,
            features,
            labels,
            split,
        })
    }

    /// Builds a dataset from parts whose node counts may disagree; label sets
    /// and the split are padded with empty/unassigned entries up to the graph size.
    pub(crate) fn padded(
        graph: Graph,
        features: Option<Array2<f64>>,
        mut labels: LabelSets,
        split: Option<Split>,
    ) -> Result<Self> {
        let n = graph.num_nodes();
        labels.resize(n);
        let split = split.unwrap_or_else(|| Split::unassigned(n));
        Self::new(graph, features, labels, split)
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub fn features(&self) -> Option<&Array2<f64>> {
        self.features.as_ref()
    }

    pub fn labels(&self) -> &LabelSets {
        &self.labels
    }

    pub fn split(&self) -> &Split {
        &self.split
    }

    pub fn num_nodes(&self) -> usize {
        self.graph.num_nodes()
    }

    pub fn num_labels(&self) -> usize {
        self.labels.num_labels()
    }

    pub fn with_split(mut self, split: Split) -> Result<Self> {
        if split.len() != self.num_nodes() {
            return Err(Error::shape(format!(
                "split covers {} nodes, dataset has {}",
                split.len(),
                self.num_nodes()
            )));
        }
        self.split = split;
        Ok(self)
    }

    pub fn with_features(mut self, features: Option<Array2<f64>>) -> Result<Self> {
        if let Some(x) = &features {
            if x.nrows() != self.num_nodes() {
                return Err(Error::shape("feature rows must equal node count"));
            }
        }
        self.features = features;
        Ok(self)
    }
}

/// Returns a copy of `dataset` with a fresh random split.
pub fn make_splits(dataset: &Dataset, train_frac: f64, val_frac: f64, seed: u64) -> Result<Dataset> {
    let split = Split::random(dataset.num_nodes(), train_frac, val_frac, seed)?;
    dataset.clone().with_split(split)
}
