//! Skip-gram with negative sampling over a walk corpus.

use ndarray::{Array2, Zip};
use rand::distr::Distribution;
use rand::Rng;
use rand_distr::weighted::WeightedAliasIndex;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{PositionalEmbedding, WalkCorpus};
use crate::error::{Error, Result};
use crate::rng::{indexed_substream, substream, Stream};

/// Skip-gram hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SkipGramConfig {
    pub dim: usize,
    pub window: usize,
    pub negative: usize,
    pub epochs: usize,
    /// Initial step size, decayed linearly to `lr * 1e-4`.
    pub lr: f64,
    /// 1 trains sequentially and is fully deterministic. With more workers each
    /// epoch is sharded and the per-worker updates are summed; the result
    /// then also depends on the worker count.
    pub threads: usize,
}

impl Default for SkipGramConfig {
    fn default() -> Self {
        Self {
            dim: 64,
            window: 5,
            negative: 5,
            epochs: 5,
            lr: 0.025,
            threads: 1,
        }
    }
}

impl SkipGramConfig {
    fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.window == 0 || self.negative == 0 {
            return Err(Error::arg("dim, window and negative samples must be at least 1"));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::arg("skip-gram learning rate must be positive"));
        }
        Ok(())
    }
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Input (`Φ`) and context (`Φ'`) embedding tables.
#[derive(Debug, Clone, PartialEq)]
pub struct SkipGram {
    input: Array2<f64>,
    context: Array2<f64>,
}

impl SkipGram {
    /// Input rows uniform in `±0.5/dim`, context rows zero.
    pub fn init(n: usize, dim: usize, seed: u64) -> Self {
        let mut rng = substream(seed, Stream::Init);
        let scale = 0.5 / dim as f64;
        let input = Array2::from_shape_simple_fn((n, dim), || rng.random_range(-scale..scale));
        Self {
            input,
            context: Array2::zeros((n, dim)),
        }
    }

    pub fn input(&self) -> &Array2<f64> {
        &self.input
    }

    pub fn context(&self) -> &Array2<f64> {
        &self.context
    }

    pub fn into_embedding(self) -> PositionalEmbedding {
        PositionalEmbedding { phi: self.input }
    }

    /// Negative-sampling loss of one `(center, context)` pair:
    /// `−log σ(Φ_c·Φ'_x) − Σ log σ(−Φ_c·Φ'_z)`.
    pub fn pair_loss(&self, center: usize, ctx: usize, negatives: &[usize]) -> f64 {
        let c = self.input.row(center);
        let c = c.as_slice().expect("standard layout");
        let pos = dot(c, self.context.row(ctx).as_slice().unwrap());
        let mut loss = -sigmoid(pos).ln();
        for &z in negatives {
            let s = dot(c, self.context.row(z).as_slice().unwrap());
            loss -= sigmoid(-s).ln();
        }
        loss
    }

    /// Trains on every `(center, context)` pair within `window` positions.
    pub fn train(&mut self, corpus: &WalkCorpus, cfg: &SkipGramConfig, seed: u64) -> Result<()> {
        cfg.validate()?;
        if corpus.is_empty() {
            return Err(Error::arg("walk corpus is empty"));
        }
        let n = self.input.nrows();
        if cfg.dim != self.input.ncols() {
            return Err(Error::shape("embedding width differs from configured dim"));
        }
        if let Some(&bad) = corpus.walks.iter().flatten().find(|&&v| v >= n) {
            return Err(Error::Index {
                what: "node",
                index: bad,
                limit: n,
            });
        }
        let sampler = negative_sampler(corpus, n)?;
        let pairs_per_epoch: usize = corpus.walks.iter().map(|w| pair_count(w.len(), cfg.window)).sum();
        let total = (pairs_per_epoch * cfg.epochs).max(1) as f64;
        let threads = cfg.threads.max(1);

        for epoch in 0..cfg.epochs {
            let done_before = epoch * pairs_per_epoch;
            if threads == 1 {
                let mut rng = indexed_substream(seed, Stream::NegativeSampling, epoch as u64);
                let mut ctx = Step::new(cfg, total, done_before);
                for walk in &corpus.walks {
                    self.train_walk(walk, &sampler, &mut rng, &mut ctx);
                }
            } else {
                let chunk = corpus.walks.len().div_ceil(threads);
                let shards: Vec<&[Vec<usize>]> = corpus.walks.chunks(chunk).collect();
                let mut offsets = Vec::with_capacity(shards.len());
                let mut acc = done_before;
                for s in &shards {
                    offsets.push(acc);
                    acc += s.iter().map(|w| pair_count(w.len(), cfg.window)).sum::<usize>();
                }
                let deltas: Vec<SkipGram> = shards
                    .par_iter()
                    .zip(offsets.par_iter())
                    .enumerate()
                    .map(|(worker, (shard, &offset))| {
                        let mut local = self.clone();
                        let index = (epoch * threads + worker) as u64;
                        let mut rng = indexed_substream(seed, Stream::NegativeSampling, index);
                        let mut ctx = Step::new(cfg, total, offset);
                        for walk in shard.iter() {
                            local.train_walk(walk, &sampler, &mut rng, &mut ctx);
                        }
                        local.input -= &self.input;
                        local.context -= &self.context;
                        local
                    })
                    .collect();
                for d in deltas {
                    self.input += &d.input;
                    self.context += &d.context;
                }
            }
        }
        Ok(())
    }

    fn train_walk<R: Rng>(
        &mut self,
        walk: &[usize],
        sampler: &WeightedAliasIndex<f64>,
        rng: &mut R,
        step: &mut Step,
    ) {
        let dim = self.input.ncols();
        let mut grad = vec![0.0; dim];
        for (i, &center) in walk.iter().enumerate() {
            let lo = i.saturating_sub(step.window);
            let hi = (i + step.window).min(walk.len() - 1);
            for (j, &ctx) in walk.iter().enumerate().take(hi + 1).skip(lo) {
                if j == i {
                    continue;
                }
                let lr = step.next_lr();
                grad.iter_mut().for_each(|g| *g = 0.0);
                self.update(center, ctx, 1.0, lr, &mut grad);
                for _ in 0..step.negative {
                    let z = sampler.sample(rng);
                    if z == ctx {
                        continue;
                    }
                    self.update(center, z, 0.0, lr, &mut grad);
                }
                let mut row = self.input.row_mut(center);
                Zip::from(&mut row).and(&grad).for_each(|w, &g| *w += g);
            }
        }
    }

    #[inline]
    fn update(&mut self, center: usize, target: usize, label: f64, lr: f64, grad: &mut [f64]) {
        let c = self.input.row(center);
        let c = c.as_slice().unwrap();
        let mut t = self.context.row_mut(target);
        let t = t.as_slice_mut().unwrap();
        let g = lr * (label - sigmoid(dot(c, t)));
        for k in 0..c.len() {
            grad[k] += g * t[k];
            t[k] += g * c[k];
        }
    }
}

struct Step {
    lr0: f64,
    total: f64,
    done: usize,
    window: usize,
    negative: usize,
}

impl Step {
    fn new(cfg: &SkipGramConfig, total: f64, done: usize) -> Self {
        Self {
            lr0: cfg.lr,
            total,
            done,
            window: cfg.window,
            negative: cfg.negative,
        }
    }

    fn next_lr(&mut self) -> f64 {
        let frac = self.done as f64 / self.total;
        self.done += 1;
        (self.lr0 * (1.0 - frac)).max(self.lr0 * 1e-4)
    }
}

fn pair_count(len: usize, window: usize) -> usize {
    (0..len)
        .map(|i| i.min(window) + (len - 1 - i).min(window))
        .sum()
}

/// Unigram distribution over corpus occurrences raised to 0.75.
fn negative_sampler(corpus: &WalkCorpus, n: usize) -> Result<WeightedAliasIndex<f64>> {
    let weights: Vec<f64> = corpus
        .node_counts(n)
        .into_iter()
        .map(|c| (c as f64).powf(0.75))
        .collect();
    WeightedAliasIndex::new(weights).map_err(|e| Error::arg(format!("negative sampler: {e}")))
}

/// Trains skip-gram embeddings for `n` nodes and returns the input table.
pub fn train_skipgram(
    corpus: &WalkCorpus,
    n: usize,
    cfg: &SkipGramConfig,
    seed: u64,
) -> Result<PositionalEmbedding> {
    cfg.validate()?;
    let mut model = SkipGram::init(n, cfg.dim, seed);
    model.train(corpus, cfg, seed)?;
    Ok(model.into_embedding())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pair_counting() {
        assert_eq!(pair_count(1, 5), 0);
        assert_eq!(pair_count(2, 5), 2);
        // len 4, window 1: 1 + 2 + 2 + 1
        assert_eq!(pair_count(4, 1), 6);
    }

    #[test]
    fn single_node_walk_leaves_init() {
        let corpus = WalkCorpus {
            walks: vec![vec![0]],
            walk_len: 1,
            walks_per_node: 1,
        };
        let cfg = SkipGramConfig {
            dim: 8,
            ..Default::default()
        };
        let trained = train_skipgram(&corpus, 1, &cfg, 4).unwrap();
        assert_eq!(trained.matrix(), SkipGram::init(1, 8, 4).input());
    }

    #[test]
    fn empty_corpus_rejected() {
        let corpus = WalkCorpus {
            walks: vec![],
            walk_len: 10,
            walks_per_node: 1,
        };
        assert!(train_skipgram(&corpus, 3, &SkipGramConfig::default(), 0).is_err());
    }

    #[test]
    fn initial_pair_loss_is_log2_per_target() {
        let m = SkipGram::init(3, 4, 0);
        let l = m.pair_loss(0, 1, &[2, 2]);
        assert!((l - 3.0 * 2f64.ln()).abs() < 1e-12);
    }
}
