//! Reference predictors: neighbor label voting, a feature-only readout and a
//! structure-only readout over random-walk embeddings.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Dataset, Role};
use crate::model::{predict, train, ModelConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    MajorityVote,
    Mlp,
    Deepwalk,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::MajorityVote => "majority_vote",
            Method::Mlp => "mlp",
            Method::Deepwalk => "deepwalk",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "majority_vote" | "majority-vote" => Ok(Method::MajorityVote),
            "mlp" => Ok(Method::Mlp),
            "deepwalk" => Ok(Method::Deepwalk),
            other => Err(Error::Config(format!("unknown baseline {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineOutput {
    pub probs: Array2<f64>,
    pub method: Method,
    /// Fraction of test nodes with at least one training neighbor
    /// (majority vote only; `None` when there are no test nodes).
    pub coverage: Option<f64>,
    /// Per node: whether the vote had any support. Empty for trained methods.
    pub covered: Vec<bool>,
}

/// Training rows keep their labels. Every other node gets the label votes of
/// its training neighbors divided by the total vote count, or the global
/// training label frequency when it has no training neighbor.
pub fn majority_vote(dataset: &Dataset) -> BaselineOutput {
    let n = dataset.num_nodes();
    let c = dataset.num_labels();
    let split = dataset.split();
    let labels = dataset.labels();
    let train = split.nodes(Role::Train);

    let mut fallback = Array1::<f64>::zeros(c);
    for &v in &train {
        for &l in labels.get(v) {
            fallback[l] += 1.0;
        }
    }
    if !train.is_empty() {
        fallback /= train.len() as f64;
    }

    let mut probs = Array2::zeros((n, c));
    let mut covered = vec![false; n];
    for v in 0..n {
        let mut row = probs.row_mut(v);
        if split.role(v) == Role::Train {
            for &l in labels.get(v) {
                row[l] = 1.0;
            }
            covered[v] = true;
            continue;
        }
        let mut total = 0.0;
        for &u in dataset.graph().neighbors(v) {
            if split.role(u) == Role::Train {
                for &l in labels.get(u) {
                    row[l] += 1.0;
                    total += 1.0;
                }
            }
        }
        if total > 0.0 {
            row /= total;
            covered[v] = true;
        } else {
            row.assign(&fallback);
        }
    }

    let test = split.nodes(Role::Test);
    let coverage =
        (!test.is_empty()).then(|| test.iter().filter(|&&v| covered[v]).count() as f64 / test.len() as f64);
    BaselineOutput {
        probs,
        method: Method::MajorityVote,
        coverage,
        covered,
    }
}

/// The readout trained on raw features alone (no propagation, no labels,
/// no positional block).
pub fn mlp_baseline(dataset: &Dataset, config: &ModelConfig) -> Result<BaselineOutput> {
    let cfg = ModelConfig {
        feature_depth: 0,
        enable_fr: true,
        enable_lr: false,
        enable_pe: false,
        ..config.clone()
    };
    trained(dataset, &cfg, Method::Mlp)
}

/// The readout trained on positional embeddings alone.
pub fn deepwalk_baseline(dataset: &Dataset, config: &ModelConfig) -> Result<BaselineOutput> {
    let cfg = ModelConfig {
        enable_fr: false,
        enable_lr: false,
        enable_pe: true,
        ..config.clone()
    };
    trained(dataset, &cfg, Method::Deepwalk)
}

fn trained(dataset: &Dataset, cfg: &ModelConfig, method: Method) -> Result<BaselineOutput> {
    let outcome = train(dataset, cfg)?;
    Ok(BaselineOutput {
        probs: predict(&outcome.model, dataset)?,
        method,
        coverage: None,
        covered: Vec::new(),
    })
}

pub fn run_baseline(dataset: &Dataset, config: &ModelConfig, method: Method) -> Result<BaselineOutput> {
    match method {
        Method::MajorityVote => Ok(majority_vote(dataset)),
        Method::Mlp => mlp_baseline(dataset, config),
        Method::Deepwalk => deepwalk_baseline(dataset, config),
    }
}
