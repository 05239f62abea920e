//! Parameters, forward pass and backpropagation of the fusion readout.

use ndarray::{concatenate, Array1, Array2, ArrayView2, Axis, Zip};
use rand::Rng;

use super::config::{ModelConfig, Variant};
use crate::error::{Error, Result};
use crate::rng::{substream, Stream};

/// Probabilities are clamped to `[EPS, 1 - EPS]` before taking logs.
pub const PROB_EPS: f64 = 1e-7;

/// Affine map `x ↦ x·W + b` with `W` stored `in × out`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

impl Layer {
    /// Uniform in `±√(6 / (fan_in + fan_out))`, zero bias.
    pub fn glorot<R: Rng>(fan_in: usize, fan_out: usize, rng: &mut R) -> Self {
        let limit = (6.0 / (fan_in + fan_out).max(1) as f64).sqrt();
        let w = Array2::from_shape_simple_fn((fan_in, fan_out), || rng.random_range(-limit..=limit));
        Self {
            w,
            b: Array1::zeros(fan_out),
        }
    }

    pub fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Self {
            w: Array2::zeros((fan_in, fan_out)),
            b: Array1::zeros(fan_out),
        }
    }

    pub fn fan_in(&self) -> usize {
        self.w.nrows()
    }

    pub fn fan_out(&self) -> usize {
        self.w.ncols()
    }

    fn apply(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        x.dot(&self.w) + &self.b
    }
}

/// Fusion-layer inputs for a set of node rows. A block is `None` when its
/// module is disabled.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Inputs {
    /// Propagated features (`n × D`), before any learned transform.
    pub features: Option<Array2<f64>>,
    /// Propagated labels (`n × C`).
    pub labels: Option<Array2<f64>>,
    /// Positional embeddings (`n × pe_dim`).
    pub positional: Option<Array2<f64>>,
}

impl Inputs {
    pub fn rows(&self) -> Option<usize> {
        [&self.features, &self.labels, &self.positional]
            .into_iter()
            .flatten()
            .map(|m| m.nrows())
            .next()
    }

    /// Restriction to `rows`.
    pub fn select(&self, rows: &[usize]) -> Inputs {
        let pick = |m: &Option<Array2<f64>>| m.as_ref().map(|m| crate::eval::select_rows(m, rows));
        Inputs {
            features: pick(&self.features),
            labels: pick(&self.labels),
            positional: pick(&self.positional),
        }
    }
}

/// Widths of the three concatenated blocks (0 when disabled).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockWidths {
    pub fr: usize,
    pub lr: usize,
    pub pe: usize,
}

impl BlockWidths {
    pub fn total(&self) -> usize {
        self.fr + self.lr + self.pe
    }
}

/// Trainable state of the fused model.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiFixModel {
    pub(crate) config: ModelConfig,
    pub(crate) num_labels: usize,
    pub(crate) feature_dim: usize,
    pub(crate) feature_transform: Option<Layer>,
    pub(crate) readout: Vec<Layer>,
    /// Positional embeddings the model was trained with, reused by `predict`.
    pub(crate) positional: Option<Array2<f64>>,
}

/// Mean binary cross-entropy over nodes and each node's summed loss.
#[derive(Debug, Clone, PartialEq)]
pub struct BceLoss {
    pub total: f64,
    pub per_node: Vec<f64>,
}

/// `per_node[i] = −Σ_c [y log p + (1−y) log(1−p)]` over nodes with `mask[i]`
/// (in ascending order); `total` is their mean.
pub fn bce_loss(pred: &Array2<f64>, truth: &Array2<f64>, mask: &[bool]) -> Result<BceLoss> {
    if pred.dim() != truth.dim() || mask.len() != pred.nrows() {
        return Err(Error::shape("prediction, truth and mask disagree"));
    }
    let per_node: Vec<f64> = pred
        .rows()
        .into_iter()
        .zip(truth.rows())
        .zip(mask)
        .filter(|(_, &m)| m)
        .map(|((p, y), _)| {
            p.iter()
                .zip(y.iter())
                .map(|(&p, &y)| {
                    let p = p.clamp(PROB_EPS, 1.0 - PROB_EPS);
                    -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
                })
                .sum()
        })
        .collect();
    let total = if per_node.is_empty() {
        0.0
    } else {
        per_node.iter().sum::<f64>() / per_node.len() as f64
    };
    Ok(BceLoss { total, per_node })
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn relu_inplace(m: &mut Array2<f64>) {
    m.mapv_inplace(|x| x.max(0.0));
}

/// Gradients in [`MultiFixModel::layers`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Layer>,
}

/// Loss pieces from one forward/backward pass.
#[derive(Debug, Clone)]
pub struct Evaluated {
    pub bce: BceLoss,
    /// Mean BCE plus `weight_decay / 2 · Σ‖W‖²`.
    pub objective: f64,
    pub probs: Array2<f64>,
}

struct Trace {
    ft_pre: Option<Array2<f64>>,
    layer_inputs: Vec<Array2<f64>>,
    pre: Vec<Array2<f64>>,
    probs: Array2<f64>,
}

impl MultiFixModel {
    /// Fresh model with Glorot-initialized weights drawn from the config seed.
    pub fn new(config: ModelConfig, num_labels: usize, feature_dim: usize) -> Result<Self> {
        config.validate()?;
        if num_labels == 0 {
            return Err(Error::arg("model needs at least one label"));
        }
        let mut rng = substream(config.seed, Stream::Init);
        let transform = config.enable_fr && config.variant.has_feature_transform();
        let feature_transform =
            transform.then(|| Layer::glorot(feature_dim, config.hidden_dim, &mut rng));
        let mut model = Self {
            config,
            num_labels,
            feature_dim,
            feature_transform,
            readout: Vec::new(),
            positional: None,
        };
        let input = model.block_widths().total();
        let hidden = model.config.hidden_dim;
        model.readout = match model.config.variant {
            Variant::Linear | Variant::Mlp1 => vec![Layer::glorot(input, num_labels, &mut rng)],
            Variant::Mlp3 => vec![
                Layer::glorot(input, hidden, &mut rng),
                Layer::glorot(hidden, hidden, &mut rng),
                Layer::glorot(hidden, num_labels, &mut rng),
            ],
        };
        Ok(model)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn num_labels(&self) -> usize {
        self.num_labels
    }

    /// Width of the raw feature input (`D`).
    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn feature_transform(&self) -> Option<&Layer> {
        self.feature_transform.as_ref()
    }

    pub fn readout(&self) -> &[Layer] {
        &self.readout
    }

    pub fn readout_mut(&mut self) -> &mut [Layer] {
        &mut self.readout
    }

    pub fn positional(&self) -> Option<&Array2<f64>> {
        self.positional.as_ref()
    }

    pub fn set_positional(&mut self, phi: Option<Array2<f64>>) {
        self.positional = phi;
    }

    pub fn block_widths(&self) -> BlockWidths {
        let c = &self.config;
        BlockWidths {
            fr: match (c.enable_fr, &self.feature_transform) {
                (false, _) => 0,
                (true, Some(t)) => t.fan_out(),
                (true, None) => self.feature_dim,
            },
            lr: if c.enable_lr { self.num_labels } else { 0 },
            pe: if c.enable_pe { c.pe_dim } else { 0 },
        }
    }

    /// All trainable layers: the feature transform (if any) then the readout.
    pub fn layers(&self) -> Vec<&Layer> {
        self.feature_transform.iter().chain(self.readout.iter()).collect()
    }

    pub fn layers_mut(&mut self) -> Vec<&mut Layer> {
        self.feature_transform
            .iter_mut()
            .chain(self.readout.iter_mut())
            .collect()
    }

    fn check_inputs(&self, inputs: &Inputs) -> Result<usize> {
        let c = &self.config;
        let rows = inputs.rows().ok_or_else(|| Error::shape("no input blocks"))?;
        let check = |name: &str, on: bool, m: &Option<Array2<f64>>, width: usize| -> Result<()> {
            match (on, m) {
                (true, Some(m)) if m.nrows() == rows && m.ncols() == width => Ok(()),
                (true, Some(m)) => Err(Error::shape(format!(
                    "{name} block is {}x{}, expected {rows}x{width}",
                    m.nrows(),
                    m.ncols()
                ))),
                (true, None) => Err(Error::shape(format!("{name} block missing"))),
                (false, _) => Ok(()),
            }
        };
        check("feature", c.enable_fr, &inputs.features, self.feature_dim)?;
        check("label", c.enable_lr, &inputs.labels, self.num_labels)?;
        check("positional", c.enable_pe, &inputs.positional, c.pe_dim)?;
        Ok(rows)
    }

    fn trace(&self, inputs: &Inputs) -> Result<Trace> {
        self.check_inputs(inputs)?;
        let c = &self.config;
        let mut ft_pre = None;
        let fr_block = if c.enable_fr {
            let x = inputs.features.as_ref().unwrap();
            Some(match &self.feature_transform {
                Some(t) => {
                    let z = t.apply(x.view());
                    let mut a = z.clone();
                    relu_inplace(&mut a);
                    ft_pre = Some(z);
                    a
                }
                None => x.clone(),
            })
        } else {
            None
        };
        let mut views: Vec<ArrayView2<'_, f64>> = Vec::with_capacity(3);
        if let Some(f) = &fr_block {
            views.push(f.view());
        }
        if c.enable_lr {
            views.push(inputs.labels.as_ref().unwrap().view());
        }
        if c.enable_pe {
            views.push(inputs.positional.as_ref().unwrap().view());
        }
        let x_in = concatenate(Axis(1), &views).map_err(|e| Error::shape(e.to_string()))?;

        let last = self.readout.len() - 1;
        let mut layer_inputs = Vec::with_capacity(self.readout.len());
        let mut pre = Vec::with_capacity(self.readout.len());
        let mut a = x_in;
        for (i, layer) in self.readout.iter().enumerate() {
            let z = layer.apply(a.view());
            layer_inputs.push(a);
            if i < last {
                let mut next = z.clone();
                relu_inplace(&mut next);
                pre.push(z);
                a = next;
            } else {
                a = z;
            }
        }
        let probs = a.mapv(sigmoid);
        Ok(Trace {
            ft_pre,
            layer_inputs,
            pre,
            probs,
        })
    }

    /// Sigmoid probabilities for every input row.
    pub fn forward(&self, inputs: &Inputs) -> Result<Array2<f64>> {
        Ok(self.trace(inputs)?.probs)
    }

    /// Signs of every ReLU pre-activation (feature transform, then hidden
    /// readout layers). Finite-difference checks use it to detect kinks.
    pub fn activation_pattern(&self, inputs: &Inputs) -> Result<Vec<bool>> {
        let trace = self.trace(inputs)?;
        Ok(trace
            .ft_pre
            .iter()
            .chain(trace.pre.iter())
            .flat_map(|z| z.iter().map(|&x| x > 0.0))
            .collect())
    }

    fn l2(&self) -> f64 {
        self.layers().iter().map(|l| l.w.iter().map(|w| w * w).sum::<f64>()).sum()
    }

    /// Mean BCE over all rows plus `weight_decay / 2 · Σ‖W‖²` (biases excluded).
    pub fn objective(&self, inputs: &Inputs, truth: &Array2<f64>, weight_decay: f64) -> Result<f64> {
        let probs = self.forward(inputs)?;
        let mask = vec![true; probs.nrows()];
        Ok(bce_loss(&probs, truth, &mask)?.total + 0.5 * weight_decay * self.l2())
    }

    /// Loss and analytic gradient of [`Self::objective`].
    pub fn loss_and_gradients(
        &self,
        inputs: &Inputs,
        truth: &Array2<f64>,
        weight_decay: f64,
    ) -> Result<(Evaluated, Gradients)> {
        let trace = self.trace(inputs)?;
        if truth.dim() != trace.probs.dim() {
            return Err(Error::shape("truth does not match predictions"));
        }
        let m = trace.probs.nrows().max(1) as f64;
        let mask = vec![true; trace.probs.nrows()];
        let bce = bce_loss(&trace.probs, truth, &mask)?;
        let objective = bce.total + 0.5 * weight_decay * self.l2();

        let mut dz = (&trace.probs - truth) / m;
        let mut readout_grads = Vec::with_capacity(self.readout.len());
        let mut d_input = None;
        for i in (0..self.readout.len()).rev() {
            let layer = &self.readout[i];
            let mut gw = trace.layer_inputs[i].t().dot(&dz);
            if weight_decay != 0.0 {
                gw.scaled_add(weight_decay, &layer.w);
            }
            let gb = dz.sum_axis(Axis(0));
            readout_grads.push(Layer { w: gw, b: gb });
            if i > 0 {
                let mut da = dz.dot(&layer.w.t());
                Zip::from(&mut da)
                    .and(&trace.pre[i - 1])
                    .for_each(|d, &z| {
                        if z <= 0.0 {
                            *d = 0.0
                        }
                    });
                dz = da;
            } else if self.feature_transform.is_some() {
                d_input = Some(dz.dot(&layer.w.t()));
            }
        }
        readout_grads.reverse();

        let mut layers = Vec::with_capacity(readout_grads.len() + 1);
        if let Some(t) = &self.feature_transform {
            let width = t.fan_out();
            let d_in = d_input.expect("computed when a transform exists");
            let mut dz0 = d_in.slice(ndarray::s![.., ..width]).to_owned();
            Zip::from(&mut dz0)
                .and(trace.ft_pre.as_ref().unwrap())
                .for_each(|d, &z| {
                    if z <= 0.0 {
                        *d = 0.0
                    }
                });
            let x = inputs.features.as_ref().unwrap();
            let mut gw = x.t().dot(&dz0);
            if weight_decay != 0.0 {
                gw.scaled_add(weight_decay, &t.w);
            }
            layers.push(Layer {
                w: gw,
                b: dz0.sum_axis(Axis(0)),
            });
        }
        layers.extend(readout_grads);
        Ok((
            Evaluated {
                bce,
                objective,
                probs: trace.probs,
            },
            Gradients { layers },
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn bce_symmetric_point() {
        let p = Array2::from_elem((2, 3), 0.5);
        let y = array![[1.0, 0.0, 1.0], [0.0, 0.0, 0.0]];
        let l = bce_loss(&p, &y, &[true, true]).unwrap();
        for v in &l.per_node {
            assert!((v - 3.0 * 2f64.ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn bce_hand_value() {
        let l = bce_loss(&array![[0.9, 0.2]], &array![[1.0, 0.0]], &[true]).unwrap();
        let expected = -(0.9f64.ln() + 0.8f64.ln());
        assert!((l.total - expected).abs() < 1e-12);
        assert!((l.total - 0.3285).abs() < 1e-4);
    }

    #[test]
    fn bce_perfect_prediction_bound() {
        let y = array![[1.0, 0.0, 1.0]];
        let l = bce_loss(&y, &y, &[true]).unwrap();
        assert!(l.per_node[0] <= 3.0 * -(1.0 - PROB_EPS).ln() + 1e-15);
    }

    #[test]
    fn bce_mask_selects_rows() {
        let p = array![[0.5], [0.9]];
        let y = array![[1.0], [1.0]];
        let l = bce_loss(&p, &y, &[false, true]).unwrap();
        assert_eq!(l.per_node.len(), 1);
        assert!((l.total + 0.9f64.ln()).abs() < 1e-15);
    }

    fn lr_only_config() -> ModelConfig {
        ModelConfig {
            enable_fr: false,
            enable_pe: false,
            ..Default::default()
        }
    }

    #[test]
    fn zero_weights_give_half() {
        let mut m = MultiFixModel::new(lr_only_config(), 3, 1).unwrap();
        m.readout[0] = Layer::zeros(3, 3);
        let inputs = Inputs {
            labels: Some(array![[1.0, 0.0, 2.0], [0.3, 0.1, 0.0]]),
            ..Default::default()
        };
        let p = m.forward(&inputs).unwrap();
        assert!(p.iter().all(|&x| x == 0.5));
    }

    #[test]
    fn single_block_closed_form() {
        let cfg = ModelConfig {
            enable_lr: false,
            enable_pe: false,
            feature_depth: 0,
            ..Default::default()
        };
        let mut m = MultiFixModel::new(cfg, 2, 1).unwrap();
        m.readout[0] = Layer {
            w: array![[1.5, -0.5]],
            b: array![0.0, 0.0],
        };
        let x = 0.8;
        let p = m
            .forward(&Inputs {
                features: Some(array![[x]]),
                ..Default::default()
            })
            .unwrap();
        assert!((p[[0, 0]] - sigmoid(1.5 * x)).abs() < 1e-15);
        assert!((p[[0, 1]] - sigmoid(-0.5 * x)).abs() < 1e-15);
    }

    #[test]
    fn widths_follow_flags() {
        for variant in [Variant::Linear, Variant::Mlp1, Variant::Mlp3] {
            let base = ModelConfig {
                variant,
                hidden_dim: 7,
                pe_dim: 5,
                ..Default::default()
            };
            let full = MultiFixModel::new(base.clone(), 3, 11).unwrap();
            let fr = if variant == Variant::Linear { 11 } else { 7 };
            assert_eq!(full.block_widths().total(), fr + 3 + 5);
            assert_eq!(full.readout[0].fan_in(), fr + 3 + 5);
            for (flag, width) in [("fr", fr), ("lr", 3), ("pe", 5)] {
                let mut cfg = base.clone();
                match flag {
                    "fr" => cfg.enable_fr = false,
                    "lr" => cfg.enable_lr = false,
                    _ => cfg.enable_pe = false,
                }
                let m = MultiFixModel::new(cfg, 3, 11).unwrap();
                assert_eq!(m.readout[0].fan_in(), fr + 3 + 5 - width);
            }
        }
    }

    #[test]
    fn missing_block_is_shape_error() {
        let m = MultiFixModel::new(lr_only_config(), 2, 1).unwrap();
        let bad = Inputs {
            labels: Some(Array2::zeros((2, 3))),
            ..Default::default()
        };
        assert!(matches!(m.forward(&bad), Err(Error::Shape(_))));
    }
}
