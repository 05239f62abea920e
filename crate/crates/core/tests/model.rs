mod common;

use common::*;
use multifix::eval::{average_precision, evaluate, ApMode};
use multifix::model::*;
use multifix::*;
use ndarray::Array2;
use proptest::prelude::*;
use rand::Rng;

fn small_config(variant: Variant) -> ModelConfig {
    ModelConfig {
        variant,
        hidden_dim: 6,
        pe_dim: 3,
        ..Default::default()
    }
}

fn random_inputs(model: &MultiFixModel, n: usize, r: &mut impl Rng) -> Inputs {
    let cfg = model.config();
    Inputs {
        features: cfg.enable_fr.then(|| random_matrix(n, model.feature_dim(), r)),
        labels: cfg.enable_lr.then(|| random_matrix(n, model.num_labels(), r).mapv(f64::abs)),
        positional: cfg.enable_pe.then(|| random_matrix(n, cfg.pe_dim, r)),
    }
}

/// Largest relative error between analytic and central-difference gradients,
/// with relative error `|a − f| / max(|a|, |f|, 1e-6)`. Coordinates whose
/// ±h perturbation flips a ReLU are skipped: the objective has a kink there.
fn gradient_error(variant: Variant, seed: u64) -> f64 {
    let mut r = rng(seed);
    let n = r.random_range(1..=20);
    let c = r.random_range(1..=4);
    let d = r.random_range(1..=5);
    let cfg = ModelConfig {
        seed,
        ..small_config(variant)
    };
    let wd = cfg.weight_decay;
    let mut model = MultiFixModel::new(cfg, c, d).unwrap();
    for layer in model.layers_mut() {
        layer.b.mapv_inplace(|_| r.random_range(-0.3..0.3));
    }
    let inputs = random_inputs(&model, n, &mut r);
    let truth = Array2::from_shape_simple_fn((n, c), || f64::from(u8::from(r.random_bool(0.4))));
    let (_, grads) = model.loss_and_gradients(&inputs, &truth, wd).unwrap();
    let pattern = model.activation_pattern(&inputs).unwrap();
    let h = 1e-5;

    let mut worst: f64 = 0.0;
    for (li, g) in grads.layers.iter().enumerate() {
        for idx in 0..g.w.len() + g.b.len() {
            let bump = |m: &mut MultiFixModel, delta: f64| {
                let layer = &mut *m.layers_mut()[li];
                let cols = layer.w.ncols();
                if idx < layer.w.len() {
                    layer.w[[idx / cols, idx % cols]] += delta;
                } else {
                    layer.b[idx - layer.w.len()] += delta;
                }
            };
            let mut plus = model.clone();
            bump(&mut plus, h);
            let mut minus = model.clone();
            bump(&mut minus, -h);
            if plus.activation_pattern(&inputs).unwrap() != pattern
                || minus.activation_pattern(&inputs).unwrap() != pattern
            {
                continue;
            }
            let fd = (plus.objective(&inputs, &truth, wd).unwrap() - minus.objective(&inputs, &truth, wd).unwrap())
                / (2.0 * h);
            let an = if idx < g.w.len() {
                g.w[[idx / g.w.ncols(), idx % g.w.ncols()]]
            } else {
                g.b[idx - g.w.len()]
            };
            worst = worst.max((an - fd).abs() / an.abs().max(fd.abs()).max(1e-6));
        }
    }
    worst
}

#[test]
fn gradients_match_finite_differences() {
    for variant in [Variant::Linear, Variant::Mlp1, Variant::Mlp3] {
        for seed in 0..20 {
            let err = gradient_error(variant, seed);
            assert!(err < 1e-4, "{variant:?} seed {seed}: relative error {err}");
        }
    }
}

fn quick(cfg: ModelConfig) -> ModelConfig {
    ModelConfig {
        max_epochs: 200,
        pe_dim: 16,
        hidden_dim: 32,
        ..cfg
    }
}

#[test]
fn two_cliques_separable() {
    let d = two_cliques(10);
    let out = train(&d, &quick(ModelConfig::default())).unwrap();
    assert!(out.epochs_run <= 200);
    let probs = predict(&out.model, &d).unwrap();
    assert_eq!(evaluate(&probs, &d, Role::Test).unwrap().ap_samples, 1.0);
    for v in 0..20 {
        let top = usize::from(probs[[v, 1]] > probs[[v, 0]]);
        assert_eq!(top, usize::from(v >= 10), "node {v}");
    }
    assert!(probs.iter().all(|&p| p > 0.0 && p < 1.0));
    assert_eq!(probs, predict(&out.model, &d).unwrap());
}

#[test]
fn training_is_deterministic() {
    let d = two_cliques(8);
    for variant in [Variant::Linear, Variant::Mlp3] {
        let cfg = quick(ModelConfig {
            variant,
            seed: 4,
            ..Default::default()
        });
        let a = train(&d, &cfg).unwrap();
        let b = train(&d, &cfg).unwrap();
        assert_eq!(a.best_val_ap, b.best_val_ap);
        assert_eq!(a.model, b.model);
        assert_eq!(to_bytes(&a.model).unwrap(), to_bytes(&b.model).unwrap());
        assert_eq!(a.metrics, b.metrics);
    }
}

#[test]
fn constant_supervision_reaches_base_rate() {
    let mut r = rng(8);
    let g = random_graph(40, 0.1, &mut r);
    let labels = LabelSets::new(4, vec![vec![0, 2]; 40]).unwrap();
    let d = Dataset::new(g, None, labels, Split::random(40, 0.6, 0.2, 1).unwrap()).unwrap();
    let cfg = ModelConfig {
        max_epochs: 600,
        pe_dim: 8,
        ..Default::default()
    };
    let probs = predict(&train(&d, &cfg).unwrap().model, &d).unwrap();
    let test = d.split().nodes(Role::Test);
    let rows = Array2::from_shape_fn((test.len(), 4), |(i, c)| probs[[test[i], c]]);
    let truth = Array2::from_shape_fn((test.len(), 4), |(_, c)| f64::from(u8::from(c % 2 == 0)));
    let constant = truth.clone();
    let model_ap = average_precision(rows.view(), truth.view(), ApMode::Samples).unwrap();
    let base_ap = average_precision(constant.view(), truth.view(), ApMode::Samples).unwrap();
    assert_eq!(model_ap, base_ap);
    assert!(rows.column(0).iter().all(|&p| p > 0.9));
    assert!(rows.column(1).iter().all(|&p| p < 0.1));
}

#[test]
fn early_stopping_and_dynamics_contract() {
    let d = two_cliques(10);
    let cfg = ModelConfig {
        patience: 15,
        max_epochs: 400,
        pe_dim: 8,
        ..Default::default()
    };
    let out = train(&d, &cfg).unwrap();
    assert!(out.epochs_run - out.best_epoch <= cfg.patience);
    let epochs: Vec<usize> = out.dynamics.checkpoints.iter().map(|c| c.epoch).collect();
    assert!(epochs[0] >= 1);
    assert!(epochs.windows(2).all(|w| w[0] < w[1]));
    assert_eq!(*epochs.last().unwrap(), out.epochs_run);
    if out.epochs_run >= 30 {
        assert_eq!(epochs.len(), 30);
    } else {
        assert_eq!(epochs.len(), out.epochs_run);
    }
    assert_eq!(out.dynamics.nodes, d.split().nodes(Role::Train));
}

#[test]
fn fewer_than_thirty_epochs_logs_every_epoch() {
    let d = two_cliques(6);
    let cfg = ModelConfig {
        max_epochs: 10,
        pe_dim: 4,
        ..Default::default()
    };
    let out = train(&d, &cfg).unwrap();
    let epochs: Vec<usize> = out.dynamics.checkpoints.iter().map(|c| c.epoch).collect();
    assert_eq!(epochs, (1..=10).collect::<Vec<_>>());
}

#[test]
fn training_errors() {
    let d = two_cliques(5);
    let none = d.clone().with_split(Split::unassigned(10)).unwrap();
    assert!(matches!(train(&none, &ModelConfig::default()), Err(Error::Argument(_))));
    let blowup = ModelConfig {
        lr: 1e308,
        enable_pe: false,
        feature_policy: FeaturePolicy::Degree,
        ..Default::default()
    };
    assert!(matches!(train(&d, &blowup), Err(Error::Divergence { .. })));
}

#[test]
fn predict_rejects_mismatched_dataset() {
    let d = two_cliques(5);
    let cfg = quick(ModelConfig {
        pe_dim: 4,
        max_epochs: 5,
        ..Default::default()
    });
    let model = train(&d, &cfg).unwrap().model;
    let bigger = two_cliques(6);
    assert!(matches!(predict(&model, &bigger), Err(Error::Compatibility(_))));
    let relabeled = Dataset::new(
        d.graph().clone(),
        None,
        LabelSets::new(3, vec![vec![2]; 10]).unwrap(),
        d.split().clone(),
    )
    .unwrap();
    assert!(matches!(predict(&model, &relabeled), Err(Error::Compatibility(_))));
}

#[test]
fn featureless_twins_without_pe_are_identical() {
    // Two cliques with train nodes plus two disjoint all-test triangles.
    let base = two_cliques(10);
    let mut edges: Vec<(usize, usize)> = base.graph().edges().collect();
    edges.extend([(20, 21), (21, 22), (20, 22), (23, 24), (24, 25), (23, 25)]);
    let g = Graph::from_edges(26, edges).unwrap();
    let mut sets: Vec<Vec<usize>> = base.labels().iter().map(<[usize]>::to_vec).collect();
    sets.extend([vec![0], vec![0], vec![0], vec![1], vec![1], vec![1]]);
    let mut roles = base.split().roles().to_vec();
    roles.extend([Role::Test; 6]);
    let d = Dataset::new(g, None, LabelSets::new(2, sets).unwrap(), Split::from_roles(roles)).unwrap();
    let cfg = quick(ModelConfig {
        enable_pe: false,
        feature_policy: FeaturePolicy::Degree,
        ..Default::default()
    });
    let probs = predict(&train(&d, &cfg).unwrap().model, &d).unwrap();
    for c in 0..2 {
        assert!((probs[[20, c]] - probs[[23, c]]).abs() < 1e-10);
    }
}

#[test]
fn fusion_export_shapes_and_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ModelConfig {
        variant: Variant::Mlp1,
        hidden_dim: 2,
        pe_dim: 2,
        seed: 3,
        ..Default::default()
    };
    let model = MultiFixModel::new(cfg.clone(), 2, 5).unwrap();
    let path = dir.path().join("w.csv");
    export_fusion_weights(&model, &path).unwrap();
    let blocks = read_fusion_weights(&path).unwrap();
    let names: Vec<&str> = blocks.iter().map(|(n, _)| n.as_str()).collect();
    assert_eq!(names, vec![BLOCK_FR, BLOCK_LR, BLOCK_PE, BLOCK_BIAS]);
    assert!(blocks[..3].iter().all(|(_, m)| m.dim() == (2, 2)));

    let mut r = rng(1);
    let inputs = random_inputs(&model, 7, &mut r);
    let mut rebuilt = MultiFixModel::new(ModelConfig { seed: 99, ..cfg.clone() }, 2, 5).unwrap();
    // Only the fusion layer comes from the file.
    *rebuilt.layers_mut()[0] = model.layers()[0].clone();
    import_fusion_weights(&mut rebuilt, &path).unwrap();
    let diff = &model.forward(&inputs).unwrap() - &rebuilt.forward(&inputs).unwrap();
    assert!(diff.iter().all(|d| d.abs() <= 1e-12));

    let no_pe = MultiFixModel::new(ModelConfig { enable_pe: false, ..cfg.clone() }, 2, 5).unwrap();
    export_fusion_weights(&no_pe, &path).unwrap();
    let names: Vec<String> = read_fusion_weights(&path).unwrap().into_iter().map(|(n, _)| n).collect();
    assert!(!names.iter().any(|n| n == BLOCK_PE));

    let deep = MultiFixModel::new(ModelConfig { variant: Variant::Mlp3, ..cfg }, 2, 5).unwrap();
    assert!(matches!(export_fusion_weights(&deep, &path), Err(Error::Unsupported(_))));
}

#[test]
fn checkpoint_file_round_trip() {
    let d = two_cliques(6);
    let cfg = quick(ModelConfig {
        variant: Variant::Mlp1,
        max_epochs: 20,
        pe_dim: 4,
        ..Default::default()
    });
    let model = train(&d, &cfg).unwrap().model;
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.gmfx");
    save_checkpoint(&model, &path).unwrap();
    let back = load_checkpoint(&path).unwrap();
    assert_eq!(back, model);
    assert_eq!(predict(&back, &d).unwrap(), predict(&model, &d).unwrap());
}

proptest! {
    #[test]
    fn ablation_changes_width_by_block(variant in prop::sample::select(vec![Variant::Linear, Variant::Mlp1, Variant::Mlp3]),
                                       fr in any::<bool>(), lr in any::<bool>(), pe in any::<bool>(),
                                       c in 1usize..5, d in 1usize..6) {
        prop_assume!(fr || lr || pe);
        let cfg = ModelConfig { variant, enable_fr: fr, enable_lr: lr, enable_pe: pe, ..small_config(variant) };
        let m = MultiFixModel::new(cfg.clone(), c, d).unwrap();
        let fr_width = if variant == Variant::Linear { d } else { cfg.hidden_dim };
        let expected = usize::from(fr) * fr_width + usize::from(lr) * c + usize::from(pe) * cfg.pe_dim;
        prop_assert_eq!(m.readout()[0].fan_in(), expected);
        prop_assert_eq!(m.readout().len(), variant.readout_layers());
        prop_assert_eq!(m.readout().last().unwrap().fan_out(), c);
    }

    #[test]
    fn gradient_check_random(seed in any::<u64>(), which in 0usize..3) {
        let variant = [Variant::Linear, Variant::Mlp1, Variant::Mlp3][which];
        prop_assert!(gradient_error(variant, seed) < 1e-4);
    }
}

