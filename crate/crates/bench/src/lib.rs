//! Seeded fixtures shared by the benchmarks.

use multifix::{Graph, LabelSets};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random graph with `n` nodes and about `n * avg_degree / 2` edges.
pub fn random_graph(n: usize, avg_degree: usize, seed: u64) -> Graph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let edges: Vec<(usize, usize)> = (0..n * avg_degree / 2)
        .map(|_| (rng.random_range(0..n), rng.random_range(0..n)))
        .filter(|(u, v)| u != v)
        .collect();
    Graph::from_edges(n, edges).unwrap()
}

pub fn random_dense(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array2::from_shape_simple_fn((rows, cols), || rng.random_range(-1.0..1.0))
}

pub fn random_labels(n: usize, c: usize, seed: u64) -> LabelSets {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sets = (0..n)
        .map(|_| (0..c).filter(|_| rng.random_bool(0.2)).collect())
        .collect();
    LabelSets::new(c, sets).unwrap()
}
