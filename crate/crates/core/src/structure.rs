//! Structural statistics: label homophily and clustering coefficient.

use crate::error::{Error, Result};
use crate::graph::{Graph, LabelSets};

/// Jaccard similarity of two sorted, deduplicated sets. `None` if both are empty.
pub fn jaccard(a: &[usize], b: &[usize]) -> Option<f64> {
    if a.is_empty() && b.is_empty() {
        return None;
    }
    let inter = sorted_intersection_len(a, b);
    let union = a.len() + b.len() - inter;
    Some(inter as f64 / union as f64)
}

fn sorted_intersection_len(a: &[usize], b: &[usize]) -> usize {
    let (mut i, mut j, mut count) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                count += 1;
                i += 1;
                j += 1;
            }
        }
    }
    count
}

/// Label homophily together with how many edges went into it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Homophily {
    pub value: f64,
    pub edges_counted: usize,
    /// Edges with an endpoint whose label set is empty.
    pub edges_skipped: usize,
}

/// Mean Jaccard similarity of endpoint label sets over undirected edges.
///
/// Edges touching a node with an empty label set are skipped and counted in
/// [`Homophily::edges_skipped`].
pub fn label_homophily_detailed(graph: &Graph, labels: &LabelSets) -> Result<Homophily> {
    if labels.num_nodes() != graph.num_nodes() {
        return Err(Error::shape("labels and graph disagree on node count"));
    }
    let mut sum = 0.0;
    let mut counted = 0;
    let mut skipped = 0;
    for (u, v) in graph.edges() {
        let (a, b) = (labels.get(u), labels.get(v));
        if a.is_empty() || b.is_empty() {
            skipped += 1;
            continue;
        }
        sum += jaccard(a, b).expect("both sets nonempty");
        counted += 1;
    }
    if counted == 0 {
        return Err(Error::UndefinedMetric(format!(
            "label homophily needs an edge between labeled nodes ({skipped} skipped)"
        )));
    }
    Ok(Homophily {
        value: sum / counted as f64,
        edges_counted: counted,
        edges_skipped: skipped,
    })
}

pub fn label_homophily(graph: &Graph, labels: &LabelSets) -> Result<f64> {
    label_homophily_detailed(graph, labels).map(|h| h.value)
}

/// Local clustering coefficient of `v`; 0 when `deg(v) < 2`.
pub fn local_clustering(graph: &Graph, v: usize) -> f64 {
    let nbrs = graph.neighbors(v);
    let d = nbrs.len();
    if d < 2 {
        return 0.0;
    }
    let links: usize = nbrs
        .iter()
        .map(|&u| sorted_intersection_len(nbrs, graph.neighbors(u)))
        .sum::<usize>()
        / 2;
    links as f64 / (d * (d - 1) / 2) as f64
}

/// Mean local clustering coefficient over all nodes.
pub fn clustering_coefficient(graph: &Graph) -> f64 {
    let n = graph.num_nodes();
    if n == 0 {
        return 0.0;
    }
    (0..n).map(|v| local_clustering(graph, v)).sum::<f64>() / n as f64
}
