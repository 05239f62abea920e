use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::rng::{indexed_substream, Stream};

/// Truncated uniform random walks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WalkCorpus {
    pub walks: Vec<Vec<usize>>,
    pub walk_len: usize,
    pub walks_per_node: usize,
}

impl WalkCorpus {
    pub fn is_empty(&self) -> bool {
        self.walks.is_empty()
    }

    /// Occurrences of each node across all walks.
    pub fn node_counts(&self, n: usize) -> Vec<u64> {
        let mut counts = vec![0u64; n];
        for walk in &self.walks {
            for &v in walk {
                counts[v] += 1;
            }
        }
        counts
    }
}

/// Uniform walk of at most `len` nodes from `start`; stops early at a node
/// without neighbors.
pub fn random_walk<R: Rng + ?Sized>(graph: &Graph, start: usize, len: usize, rng: &mut R) -> Vec<usize> {
    let mut walk = Vec::with_capacity(len);
    walk.push(start);
    let mut cur = start;
    while walk.len() < len {
        match graph.neighbors(cur).choose(rng) {
            Some(&next) => {
                walk.push(next);
                cur = next;
            }
            None => break,
        }
    }
    walk
}

/// `walks_per_node` rounds; each round starts one walk from every node in a
/// seeded shuffled order. Every walk draws from its own substream, so the
/// corpus does not depend on the thread count.
pub fn generate_walks(
    graph: &Graph,
    walk_len: usize,
    walks_per_node: usize,
    seed: u64,
) -> Result<WalkCorpus> {
    if walk_len == 0 || walks_per_node == 0 {
        return Err(Error::arg("walk length and walks per node must be at least 1"));
    }
    let n = graph.num_nodes();
    let mut walks = Vec::with_capacity(n * walks_per_node);
    for round in 0..walks_per_node {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut indexed_substream(seed, Stream::WalkOrder, round as u64));
        let batch: Vec<Vec<usize>> = order
            .par_iter()
            .map(|&v| {
                let mut rng = indexed_substream(seed, Stream::Walks, (round * n + v) as u64);
                random_walk(graph, v, walk_len, &mut rng)
            })
            .collect();
        walks.extend(batch);
    }
    Ok(WalkCorpus {
        walks,
        walk_len,
        walks_per_node,
    })
}
