//! Feature and label propagation over the normalized adjacency.
//!
//! Label propagation here is reset-free: training rows are never clamped back
//! to their true labels between steps.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Dataset, Role};
use crate::sparse::SparseMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Identity,
    Relu,
}

impl Activation {
    fn apply(self, m: &mut Array2<f64>) {
        if self == Activation::Relu {
            m.mapv_inplace(|x| x.max(0.0));
        }
    }
}

/// Initial label row for nodes outside the training set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Padding {
    Zero,
    Uniform,
}

impl Padding {
    pub fn vector(self, num_labels: usize) -> Array1<f64> {
        match self {
            Padding::Zero => Array1::zeros(num_labels),
            Padding::Uniform => Array1::from_elem(num_labels, 1.0 / num_labels as f64),
        }
    }
}

/// Propagated node features.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRep {
    pub h: Array2<f64>,
    pub depth: usize,
}

/// Propagated label representation.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelRep {
    pub h: Array2<f64>,
    pub depth: usize,
}

/// `H⁽⁰⁾ = X`, `H⁽ᵏ⁾ = act(Â H⁽ᵏ⁻¹⁾)` for `k = 1..=depth`.
pub fn propagate_features(
    adj: &SparseMatrix,
    x: &Array2<f64>,
    depth: usize,
    activation: Activation,
) -> Result<FeatureRep> {
    if x.nrows() != adj.cols() {
        return Err(Error::shape(format!(
            "features have {} rows, operator is {}x{}",
            x.nrows(),
            adj.rows(),
            adj.cols()
        )));
    }
    let mut h = x.clone();
    for _ in 0..depth {
        h = adj.matmul(h.view())?;
        activation.apply(&mut h);
    }
    Ok(FeatureRep { h, depth })
}

/// Row `v` is `y_v` for training nodes and the padding vector otherwise.
/// Validation and test nodes are both treated as unlabeled.
pub fn init_label_matrix(dataset: &Dataset, padding: Padding) -> Array2<f64> {
    let c = dataset.num_labels();
    let pad = padding.vector(c);
    let mut h = Array2::zeros((dataset.num_nodes(), c));
    for (v, mut row) in h.rows_mut().into_iter().enumerate() {
        if dataset.split().role(v) == Role::Train {
            for &l in dataset.labels().get(v) {
                row[l] = 1.0;
            }
        } else {
            row.assign(&pad);
        }
    }
    h
}

/// Per-step transform applied after aggregation.
#[derive(Clone, Copy)]
pub enum LabelTransform<'a> {
    Identity,
    Map(&'a dyn Fn(Array2<f64>) -> Array2<f64>),
}

impl std::fmt::Debug for LabelTransform<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            LabelTransform::Identity => f.write_str("Identity"),
            LabelTransform::Map(_) => f.write_str("Map(..)"),
        }
    }
}

/// `H⁽ʲ⁾ = σ(AGG · H⁽ʲ⁻¹⁾)` for `j = 1..=depth`, without re-injecting labels.
pub fn propagate_labels(
    agg: &SparseMatrix,
    h0: &Array2<f64>,
    depth: usize,
    transform: LabelTransform<'_>,
) -> Result<LabelRep> {
    if h0.nrows() != agg.cols() {
        return Err(Error::shape(format!(
            "label matrix has {} rows, operator is {}x{}",
            h0.nrows(),
            agg.rows(),
            agg.cols()
        )));
    }
    let mut h = h0.clone();
    for _ in 0..depth {
        h = agg.matmul(h.view())?;
        if let LabelTransform::Map(f) = transform {
            h = f(h);
            if h.nrows() != agg.rows() {
                return Err(Error::shape("label transform changed the row count"));
            }
        }
    }
    Ok(LabelRep { h, depth })
}

/// `Pᴺ · Y` by dense repeated multiplication; the reference the sparse label
/// propagation is checked against.
pub fn dense_power_oracle(p: &SparseMatrix, y_padded: &Array2<f64>, steps: usize) -> Array2<f64> {
    let dense = p.to_dense();
    let mut power = Array2::eye(dense.nrows());
    for _ in 0..steps {
        power = power.dot(&dense);
    }
    power.dot(y_padded)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{Graph, LabelSets, Split};
    use crate::sparse::sym_norm_adjacency;
    use ndarray::array;

    fn pair() -> SparseMatrix {
        sym_norm_adjacency(&Graph::from_edges(2, [(0, 1)]).unwrap())
    }

    #[test]
    fn zero_depth_is_identity() {
        let x = array![[1.0, 2.0], [3.0, -4.0]];
        assert_eq!(propagate_features(&pair(), &x, 0, Activation::Relu).unwrap().h, x);
        assert_eq!(
            propagate_labels(&pair(), &x, 0, LabelTransform::Identity).unwrap().h,
            x
        );
    }

    #[test]
    fn isolated_node_fixed_point() {
        let a = sym_norm_adjacency(&Graph::empty(1));
        let x = array![[2.5]];
        assert_eq!(propagate_features(&a, &x, 5, Activation::Identity).unwrap().h, x);
    }

    #[test]
    fn path_pair_one_step() {
        let h = propagate_features(&pair(), &array![[1.0], [0.0]], 1, Activation::Identity).unwrap();
        assert_eq!(h.h, array![[0.5], [0.5]]);
    }

    #[test]
    fn reset_free_label_steps() {
        let h0 = array![[1.0, 0.0], [0.0, 0.0]];
        let one = propagate_labels(&pair(), &h0, 1, LabelTransform::Identity).unwrap();
        assert_eq!(one.h, array![[0.5, 0.0], [0.5, 0.0]]);
        let two = propagate_labels(&pair(), &h0, 2, LabelTransform::Identity).unwrap();
        assert_eq!(two.h.row(0), array![0.5, 0.0]);
    }

    #[test]
    fn label_init_cases() {
        let g = Graph::from_edges(3, [(0, 1)]).unwrap();
        let labels = LabelSets::new(3, vec![vec![0, 2], vec![1], vec![0]]).unwrap();
        let split = Split::from_roles(vec![Role::Train, Role::Test, Role::Val]);
        let d = Dataset::new(g, None, labels, split).unwrap();
        let zero = init_label_matrix(&d, Padding::Zero);
        assert_eq!(zero, array![[1.0, 0.0, 1.0], [0.0, 0.0, 0.0], [0.0, 0.0, 0.0]]);
        let uni = init_label_matrix(&d, Padding::Uniform);
        assert_eq!(uni.row(1), Array1::from_elem(3, 1.0 / 3.0));
    }

    #[test]
    fn uniform_padding_four_labels() {
        assert_eq!(Padding::Uniform.vector(4), array![0.25, 0.25, 0.25, 0.25]);
    }

    #[test]
    fn shape_mismatch() {
        assert!(propagate_features(&pair(), &array![[1.0]], 1, Activation::Identity).is_err());
    }

    #[test]
    fn learned_transform_is_applied() {
        let double = |m: Array2<f64>| m * 2.0;
        let h = propagate_labels(
            &pair(),
            &array![[1.0], [0.0]],
            1,
            LabelTransform::Map(&double),
        )
        .unwrap();
        assert_eq!(h.h, array![[1.0], [1.0]]);
    }
}
