//! Representation precomputation, the training loop and transductive inference.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::config::{FeaturePolicy, ModelConfig};
use super::net::{bce_loss, Inputs, MultiFixModel};
use super::optim::Adam;
use crate::dynamics::DynamicsLog;
use crate::error::{Error, Result};
use crate::eval::average_precision;
use crate::graph::{Dataset, Graph, Role};
use crate::positional::{generate_walks, train_skipgram, PositionalEmbedding};
use crate::propagation::{init_label_matrix, propagate_features, propagate_labels, LabelTransform};
use crate::sparse::sym_norm_adjacency;

/// Node features, substituting per `policy` when the dataset has none.
pub fn resolve_features(dataset: &Dataset, policy: FeaturePolicy) -> Result<Array2<f64>> {
    if let Some(x) = dataset.features() {
        return Ok(x.clone());
    }
    let n = dataset.num_nodes();
    match policy {
        FeaturePolicy::Identity => Ok(Array2::eye(n)),
        FeaturePolicy::Degree => {
            let deg = dataset.graph().degrees();
            Ok(Array2::from_shape_fn((n, 1), |(v, _)| deg[v] as f64))
        }
        FeaturePolicy::None => Err(Error::Config(
            "dataset has no features and the feature policy is `none`".into(),
        )),
    }
}

/// Random walks plus skip-gram with the positional settings of `config`.
pub fn positional_embedding(graph: &Graph, config: &ModelConfig) -> Result<PositionalEmbedding> {
    let pc = &config.positional;
    let corpus = generate_walks(graph, pc.walk_len, pc.walks_per_node, config.seed)?;
    train_skipgram(&corpus, graph.num_nodes(), &pc.skipgram(config.pe_dim), config.seed)
}

/// Propagated features, propagated labels and positional embeddings for
/// every node. `positional` is reused when given instead of retraining.
pub fn compute_inputs(
    dataset: &Dataset,
    config: &ModelConfig,
    positional: Option<&Array2<f64>>,
) -> Result<Inputs> {
    let adj = sym_norm_adjacency(dataset.graph());
    let features = if config.enable_fr {
        let x = resolve_features(dataset, config.feature_policy)?;
        let act = config.variant.feature_activation();
        Some(propagate_features(&adj, &x, config.feature_depth, act)?.h)
    } else {
        None
    };
    let labels = if config.enable_lr {
        let h0 = init_label_matrix(dataset, config.padding);
        Some(propagate_labels(&adj, &h0, config.label_depth, LabelTransform::Identity)?.h)
    } else {
        None
    };
    let positional = match (config.enable_pe, positional) {
        (false, _) => None,
        (true, Some(phi)) => Some(phi.clone()),
        (true, None) => Some(positional_embedding(dataset.graph(), config)?.into_matrix()),
    };
    Ok(Inputs {
        features,
        labels,
        positional,
    })
}

/// One line of the metrics stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_loss: f64,
    /// `None` when no validation node has a positive label.
    pub val_ap: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters from the best validation epoch.
    pub model: MultiFixModel,
    pub dynamics: DynamicsLog,
    pub best_val_ap: Option<f64>,
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub metrics: Vec<EpochMetrics>,
}

fn dense_rows(dataset: &Dataset, nodes: &[usize]) -> Array2<f64> {
    let mut y = Array2::zeros((nodes.len(), dataset.num_labels()));
    for (i, &v) in nodes.iter().enumerate() {
        for &c in dataset.labels().get(v) {
            y[[i, c]] = 1.0;
        }
    }
    y
}

fn finite(model: &MultiFixModel) -> bool {
    model
        .layers()
        .iter()
        .all(|l| l.w.iter().chain(l.b.iter()).all(|x| x.is_finite()))
}

/// Precomputes the representations and trains the readout.
pub fn train(dataset: &Dataset, config: &ModelConfig) -> Result<TrainOutcome> {
    config.validate()?;
    let inputs = compute_inputs(dataset, config, None)?;
    train_on_inputs(dataset, config, inputs)
}

/// Full-batch training on the train rows of precomputed `inputs`, with early
/// stopping on validation AP (ties broken by validation loss). When validation
/// AP is undefined the negated validation loss is the stopping score, or the
/// training loss if there are no validation nodes.
pub fn train_on_inputs(dataset: &Dataset, config: &ModelConfig, inputs: Inputs) -> Result<TrainOutcome> {
    config.validate()?;
    let train_nodes = dataset.split().nodes(Role::Train);
    if train_nodes.is_empty() {
        return Err(Error::arg("no training nodes"));
    }
    if inputs.rows() != Some(dataset.num_nodes()) {
        return Err(Error::shape("inputs must have one row per node"));
    }
    let val_nodes = dataset.split().nodes(Role::Val);
    let feature_dim = inputs.features.as_ref().map_or(0, |f| f.ncols());
    let mut model = MultiFixModel::new(config.clone(), dataset.num_labels(), feature_dim)?;
    model.positional = inputs.positional.clone();

    let train_inputs = inputs.select(&train_nodes);
    let train_truth = dense_rows(dataset, &train_nodes);
    let val_inputs = inputs.select(&val_nodes);
    let val_truth = dense_rows(dataset, &val_nodes);

    let mut opt = Adam::new(&model.layers(), config.adam.clone(), config.lr, config.weight_decay);
    let mut best_model = model.clone();
    let mut best_score = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    let mut best_val_ap = None;
    let mut best_epoch = 0;
    let mut history = Vec::new();
    let mut metrics = Vec::new();

    for epoch in 1..=config.max_epochs {
        let (eval, grads) = model.loss_and_gradients(&train_inputs, &train_truth, 0.0)?;
        let train_loss = eval.bce.total;
        if !train_loss.is_finite() {
            return Err(Error::Divergence { epoch });
        }
        history.push(eval.bce.per_node);
        opt.step(model.layers_mut(), &grads.layers);
        if !finite(&model) {
            return Err(Error::Divergence { epoch });
        }

        let (val_ap, val_loss) = if val_nodes.is_empty() {
            (None, train_loss)
        } else {
            let probs = model.forward(&val_inputs)?;
            let loss = bce_loss(&probs, &val_truth, &vec![true; probs.nrows()])?.total;
            match average_precision(probs.view(), val_truth.view(), config.headline) {
                Ok(ap) => (Some(ap), loss),
                Err(Error::UndefinedMetric(_)) => (None, loss),
                Err(e) => return Err(e),
            }
        };
        // Equal AP counts as progress when the validation loss drops, so a
        // saturated ranking does not freeze the first epoch's weights.
        let score = (val_ap.unwrap_or(-val_loss), -val_loss);
        if score.0 > best_score.0 || (score.0 == best_score.0 && score.1 > best_score.1) {
            best_score = score;
            best_val_ap = val_ap;
            best_epoch = epoch;
            best_model.clone_from(&model);
        }
        metrics.push(EpochMetrics {
            epoch,
            train_loss,
            val_ap,
        });
        if epoch - best_epoch >= config.patience {
            break;
        }
    }

    Ok(TrainOutcome {
        model: best_model,
        dynamics: DynamicsLog::from_history(train_nodes, &history),
        best_val_ap,
        best_epoch,
        epochs_run: metrics.len(),
        metrics,
    })
}

/// Probabilities for every node of `dataset`, recomputing propagated
/// representations and reusing the model's positional embeddings.
pub fn predict(model: &MultiFixModel, dataset: &Dataset) -> Result<Array2<f64>> {
    let cfg = model.config();
    if dataset.num_labels() != model.num_labels() {
        return Err(Error::Compatibility(format!(
            "model has {} labels, dataset has {}",
            model.num_labels(),
            dataset.num_labels()
        )));
    }
    if cfg.enable_pe {
        match model.positional() {
            Some(phi) if phi.nrows() == dataset.num_nodes() => {}
            Some(phi) => {
                return Err(Error::Compatibility(format!(
                    "model embeddings cover {} nodes, dataset has {}",
                    phi.nrows(),
                    dataset.num_nodes()
                )))
            }
            None => return Err(Error::Compatibility("model carries no positional embeddings".into())),
        }
    }
    let inputs = compute_inputs(dataset, cfg, model.positional())?;
    if let Some(f) = &inputs.features {
        if f.ncols() != model.feature_dim() {
            return Err(Error::Compatibility(format!(
                "model expects {} feature columns, dataset yields {}",
                model.feature_dim(),
                f.ncols()
            )));
        }
    }
    model.forward(&inputs)
}

