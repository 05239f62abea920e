#![allow(dead_code)]

use multifix::{Dataset, Graph, LabelSets, Role, Split};
use ndarray::Array2;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Erdős–Rényi style graph with edge probability `p`.
pub fn random_graph(n: usize, p: f64, rng: &mut impl Rng) -> Graph {
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            if rng.random::<f64>() < p {
                edges.push((u, v));
            }
        }
    }
    Graph::from_edges(n, edges).unwrap()
}

/// Each node gets a random nonempty subset of `0..c` (possibly empty if `allow_empty`).
pub fn random_labels(n: usize, c: usize, allow_empty: bool, rng: &mut impl Rng) -> LabelSets {
    let sets = (0..n)
        .map(|_| loop {
            let s: Vec<usize> = (0..c).filter(|_| rng.random_bool(0.4)).collect();
            if allow_empty || !s.is_empty() {
                break s;
            }
        })
        .collect();
    LabelSets::new(c, sets).unwrap()
}

pub fn random_matrix(rows: usize, cols: usize, rng: &mut impl Rng) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || rng.random_range(-1.0..1.0))
}

pub fn arb_graph(max_n: usize) -> impl Strategy<Value = Graph> {
    (1..=max_n).prop_flat_map(|n| {
        prop::collection::vec((0..n, 0..n), 0..=3 * n)
            .prop_map(move |edges| Graph::from_edges(n, edges).unwrap())
    })
}

pub fn path2() -> Graph {
    Graph::from_edges(2, [(0, 1)]).unwrap()
}

pub fn triangle() -> Graph {
    Graph::from_edges(3, [(0, 1), (1, 2), (0, 2)]).unwrap()
}

/// Two cliques of `size` nodes joined by one edge; clique A has label 0,
/// clique B label 1, 60/20/20 split per clique.
pub fn two_cliques(size: usize) -> Dataset {
    let n = 2 * size;
    let mut edges = Vec::new();
    for base in [0, size] {
        for a in 0..size {
            for b in a + 1..size {
                edges.push((base + a, base + b));
            }
        }
    }
    edges.push((size - 1, size));
    let graph = Graph::from_edges(n, edges).unwrap();
    let sets = (0..n).map(|v| vec![usize::from(v >= size)]).collect();
    let roles = (0..n)
        .map(|v| match (v % size) * 10 / size {
            0..=5 => Role::Train,
            6 | 7 => Role::Val,
            _ => Role::Test,
        })
        .collect();
    Dataset::new(graph, None, LabelSets::new(2, sets).unwrap(), Split::from_roles(roles)).unwrap()
}
