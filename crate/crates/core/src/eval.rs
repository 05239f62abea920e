//! Average Precision and homophily recovery.

use ndarray::{Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Dataset, Graph, LabelSets, Role};
use crate::structure::label_homophily;

/// How per-unit rankings are formed and averaged.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ApMode {
    /// One ranking over all (node, label) pairs.
    Micro,
    /// Mean of per-label APs over labels with a positive.
    Macro,
    /// Mean of per-node APs over nodes with a positive.
    Samples,
}

/// AP of one ranking: `Σ_k P@k · Δrecall@k`, ranking by descending score with
/// ties broken by ascending position. `None` when there are no positives.
pub fn ranking_ap<'a>(
    scores: impl IntoIterator<Item = &'a f64>,
    truth: impl IntoIterator<Item = &'a f64>,
) -> Option<f64> {
    let mut items: Vec<(f64, bool)> = scores
        .into_iter()
        .zip(truth)
        .map(|(&s, &t)| (s, t > 0.5))
        .collect();
    let positives = items.iter().filter(|(_, t)| *t).count();
    if positives == 0 {
        return None;
    }
    // Stable sort keeps ascending position among equal scores.
    items.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (k, &(_, rel)) in items.iter().enumerate() {
        if rel {
            hits += 1;
            sum += hits as f64 / (k + 1) as f64;
        }
    }
    Some(sum / positives as f64)
}

fn mean_defined(values: impl Iterator<Item = Option<f64>>, what: &str) -> Result<f64> {
    let (sum, count) = values
        .flatten()
        .fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
    if count == 0 {
        return Err(Error::UndefinedMetric(format!("no {what} has a positive label")));
    }
    Ok(sum / count as f64)
}

/// Average Precision of `scores` against binary `truth` (both `m × C`).
pub fn average_precision(
    scores: ArrayView2<'_, f64>,
    truth: ArrayView2<'_, f64>,
    mode: ApMode,
) -> Result<f64> {
    if scores.dim() != truth.dim() {
        return Err(Error::shape(format!(
            "scores {:?} vs truth {:?}",
            scores.dim(),
            truth.dim()
        )));
    }
    if scores.nrows() == 0 {
        return Err(Error::arg("average precision needs at least one row"));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::arg("scores contain NaN"));
    }
    match mode {
        ApMode::Micro => {
            // Row-major iteration order is the flattened (node, label) order.
            ranking_ap(scores.iter(), truth.iter())
                .ok_or_else(|| Error::UndefinedMetric("no positive label at all".into()))
        }
        ApMode::Macro => mean_defined(
            scores
                .columns()
                .into_iter()
                .zip(truth.columns())
                .map(|(s, t)| ranking_ap(s.iter(), t.iter())),
            "label",
        ),
        ApMode::Samples => mean_defined(
            scores
                .rows()
                .into_iter()
                .zip(truth.rows())
                .map(|(s, t)| ranking_ap(s.iter(), t.iter())),
            "node",
        ),
    }
}

/// All three AP variants on one split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub ap_micro: f64,
    pub ap_macro: f64,
    pub ap_samples: f64,
    pub split: String,
    pub n_eval: usize,
    pub headline: ApMode,
}

impl EvalReport {
    pub fn headline_ap(&self) -> f64 {
        self.get(self.headline)
    }

    pub fn get(&self, mode: ApMode) -> f64 {
        match mode {
            ApMode::Micro => self.ap_micro,
            ApMode::Macro => self.ap_macro,
            ApMode::Samples => self.ap_samples,
        }
    }
}

/// Gathers `rows` of `m` into a new matrix.
pub(crate) fn select_rows(m: &Array2<f64>, rows: &[usize]) -> Array2<f64> {
    let mut out = Array2::zeros((rows.len(), m.ncols()));
    for (i, &r) in rows.iter().enumerate() {
        out.row_mut(i).assign(&m.row(r));
    }
    out
}

/// Evaluates `probs` on the nodes of `dataset` with the given role.
pub fn evaluate(probs: &Array2<f64>, dataset: &Dataset, split: Role) -> Result<EvalReport> {
    evaluate_with(probs, dataset, split, ApMode::Samples)
}

pub fn evaluate_with(
    probs: &Array2<f64>,
    dataset: &Dataset,
    split: Role,
    headline: ApMode,
) -> Result<EvalReport> {
    if probs.dim() != (dataset.num_nodes(), dataset.num_labels()) {
        return Err(Error::shape(format!(
            "probabilities {:?} do not match dataset ({}, {})",
            probs.dim(),
            dataset.num_nodes(),
            dataset.num_labels()
        )));
    }
    let nodes = dataset.split().nodes(split);
    if nodes.is_empty() {
        return Err(Error::arg(format!("split {} is empty", split.as_str())));
    }
    evaluate_nodes(probs, dataset.labels(), &nodes, split.as_str(), headline)
}

pub(crate) fn evaluate_nodes(
    probs: &Array2<f64>,
    labels: &LabelSets,
    nodes: &[usize],
    split: &str,
    headline: ApMode,
) -> Result<EvalReport> {
    let scores = select_rows(probs, nodes);
    let mut truth = Array2::zeros(scores.dim());
    for (i, &v) in nodes.iter().enumerate() {
        for &c in labels.get(v) {
            truth[[i, c]] = 1.0;
        }
    }
    Ok(EvalReport {
        ap_micro: average_precision(scores.view(), truth.view(), ApMode::Micro)?,
        ap_macro: average_precision(scores.view(), truth.view(), ApMode::Macro)?,
        ap_samples: average_precision(scores.view(), truth.view(), ApMode::Samples)?,
        split: split.to_string(),
        n_eval: nodes.len(),
        headline,
    })
}

fn threshold_row(row: ArrayView1<'_, f64>, threshold: f64) -> Vec<usize> {
    let picked: Vec<usize> = row
        .iter()
        .enumerate()
        .filter(|(_, &p)| p >= threshold)
        .map(|(c, _)| c)
        .collect();
    if !picked.is_empty() {
        return picked;
    }
    let mut best = 0;
    for (c, &p) in row.iter().enumerate() {
        if p > row[best] {
            best = c;
        }
    }
    vec![best]
}

/// Label sets obtained by thresholding `probs`; a row with nothing above the
/// threshold keeps its single highest-scoring label.
pub fn threshold_predictions(probs: &Array2<f64>, threshold: f64) -> Result<LabelSets> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::arg(format!("threshold must lie in (0,1), got {threshold}")));
    }
    if probs.ncols() == 0 {
        return Err(Error::arg("probabilities have no label columns"));
    }
    let sets = probs
        .rows()
        .into_iter()
        .map(|r| threshold_row(r, threshold))
        .collect();
    LabelSets::new(probs.ncols(), sets)
}

/// Label homophily of `graph` under thresholded predicted labels.
pub fn homophily_recovery(probs: &Array2<f64>, graph: &Graph, threshold: f64) -> Result<f64> {
    if probs.nrows() != graph.num_nodes() {
        return Err(Error::shape("probability rows must match node count"));
    }
    let predicted = threshold_predictions(probs, threshold)?;
    label_homophily(graph, &predicted)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn perfect_and_second_rank() {
        for mode in [ApMode::Micro, ApMode::Macro, ApMode::Samples] {
            let s = array![[0.9, 0.1]];
            let t = array![[1.0, 0.0]];
            assert_eq!(average_precision(s.view(), t.view(), mode).unwrap(), 1.0);
        }
        let s = array![[0.1, 0.9]];
        let t = array![[1.0, 0.0]];
        assert_eq!(average_precision(s.view(), t.view(), ApMode::Samples).unwrap(), 0.5);
        assert_eq!(average_precision(s.view(), t.view(), ApMode::Micro).unwrap(), 0.5);
    }

    #[test]
    fn no_positives_undefined() {
        let s = array![[0.3, 0.2]];
        let t = array![[0.0, 0.0]];
        assert!(matches!(
            average_precision(s.view(), t.view(), ApMode::Samples),
            Err(Error::UndefinedMetric(_))
        ));
    }

    #[test]
    fn ties_break_by_position() {
        // Equal scores: positive at position 1 ranks second.
        assert_eq!(ranking_ap(&[0.5, 0.5], &[0.0, 1.0]), Some(0.5));
        assert_eq!(ranking_ap(&[0.5, 0.5], &[1.0, 0.0]), Some(1.0));
    }

    #[test]
    fn thresholding_keeps_top_label() {
        let p = array![[0.2, 0.4, 0.1], [0.6, 0.7, 0.1]];
        let sets = threshold_predictions(&p, 0.5).unwrap();
        assert_eq!(sets.get(0), &[1]);
        assert_eq!(sets.get(1), &[0, 1]);
        assert!(threshold_predictions(&p, 1.0).is_err());
    }

    #[test]
    fn recovery_constant_label() {
        let g = Graph::from_edges(3, [(0, 1), (1, 2)]).unwrap();
        let mut p = Array2::from_elem((3, 4), 0.1);
        p.column_mut(2).fill(0.9);
        assert_eq!(homophily_recovery(&p, &g, 0.5).unwrap(), 1.0);
    }
}
