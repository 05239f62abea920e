mod common;

use common::*;
use multifix::dynamics::*;
use multifix::eval::*;
use multifix::*;
use ndarray::{array, Array2, ArrayView1};
use proptest::prelude::*;

/// AP from explicit ranks: item `i` sits at `1 + #{j ranked before i}`.
fn brute_ap(scores: &[f64], truth: &[bool]) -> Option<f64> {
    let rank = |i: usize| {
        1 + (0..scores.len())
            .filter(|&j| scores[j] > scores[i] || (scores[j] == scores[i] && j < i))
            .count()
    };
    let positives: Vec<usize> = (0..scores.len()).filter(|&i| truth[i]).collect();
    if positives.is_empty() {
        return None;
    }
    let total: f64 = positives
        .iter()
        .map(|&i| {
            let r = rank(i);
            positives.iter().filter(|&&p| rank(p) <= r).count() as f64 / r as f64
        })
        .sum();
    Some(total / positives.len() as f64)
}

fn brute_mode(scores: &Array2<f64>, truth: &Array2<f64>, mode: ApMode) -> Option<f64> {
    let unit = |s: ArrayView1<f64>, t: ArrayView1<f64>| brute_ap(&s.to_vec(), &t.iter().map(|&x| x > 0.5).collect::<Vec<_>>());
    let mean = |v: Vec<Option<f64>>| {
        let d: Vec<f64> = v.into_iter().flatten().collect();
        (!d.is_empty()).then(|| d.iter().sum::<f64>() / d.len() as f64)
    };
    match mode {
        ApMode::Micro => brute_ap(
            &scores.iter().copied().collect::<Vec<_>>(),
            &truth.iter().map(|&x| x > 0.5).collect::<Vec<_>>(),
        ),
        ApMode::Macro => mean(scores.columns().into_iter().zip(truth.columns()).map(|(s, t)| unit(s, t)).collect()),
        ApMode::Samples => mean(scores.rows().into_iter().zip(truth.rows()).map(|(s, t)| unit(s, t)).collect()),
    }
}

fn arb_instance() -> impl Strategy<Value = (Array2<f64>, Array2<f64>)> {
    (1usize..=10, 1usize..=4).prop_flat_map(|(m, c)| {
        (
            prop::collection::vec(0u8..8, m * c),
            prop::collection::vec(any::<bool>(), m * c),
        )
            .prop_map(move |(s, t)| {
                (
                    Array2::from_shape_vec((m, c), s.into_iter().map(|x| f64::from(x) / 8.0).collect()).unwrap(),
                    Array2::from_shape_vec((m, c), t.into_iter().map(|b| f64::from(u8::from(b))).collect()).unwrap(),
                )
            })
    })
}

const MODES: [ApMode; 3] = [ApMode::Micro, ApMode::Macro, ApMode::Samples];

#[test]
fn ap_examples() {
    for mode in MODES {
        let t = array![[1.0, 0.0]];
        assert_eq!(average_precision(array![[0.9, 0.1]].view(), t.view(), mode).unwrap(), 1.0);
    }
    let t = array![[1.0, 0.0]];
    assert_eq!(average_precision(array![[0.1, 0.9]].view(), t.view(), ApMode::Samples).unwrap(), 0.5);
    let none = Array2::zeros((2, 2));
    assert!(matches!(
        average_precision(none.view(), none.view(), ApMode::Macro),
        Err(Error::UndefinedMetric(_))
    ));
}

fn dataset_with(labels: LabelSets, roles: Vec<Role>) -> Dataset {
    let n = labels.num_nodes();
    Dataset::new(Graph::empty(n), None, labels, Split::from_roles(roles)).unwrap()
}

#[test]
fn evaluate_perfect_and_constant() {
    let mut r = rng(2);
    let labels = random_labels(30, 4, false, &mut r);
    let roles: Vec<Role> = (0..30).map(|v| if v % 2 == 0 { Role::Test } else { Role::Train }).collect();
    let d = dataset_with(labels.clone(), roles);
    let rep = evaluate(&labels.to_dense(), &d, Role::Test).unwrap();
    assert_eq!((rep.ap_micro, rep.ap_macro, rep.ap_samples), (1.0, 1.0, 1.0));
    assert_eq!(rep.n_eval, 15);

    // Constant scores rank labels by index: the k-th true label at position p_k
    // contributes k / p_k.
    let constant = Array2::from_elem((30, 4), 0.3);
    let closed: f64 = d
        .split()
        .nodes(Role::Test)
        .iter()
        .map(|&v| {
            let s = labels.get(v);
            s.iter().enumerate().map(|(k, &p)| (k + 1) as f64 / (p + 1) as f64).sum::<f64>() / s.len() as f64
        })
        .sum::<f64>()
        / 15.0;
    let rep = evaluate(&constant, &d, Role::Test).unwrap();
    assert!((rep.ap_samples - closed).abs() < 1e-12);
    assert!(matches!(evaluate(&constant, &d, Role::Val), Err(Error::Argument(_))));
}

#[test]
fn evaluate_ignores_node_order() {
    let mut r = rng(3);
    let labels = random_labels(20, 3, false, &mut r);
    let probs = random_matrix(20, 3, &mut r).mapv(f64::abs);
    let roles = vec![Role::Test; 20];
    let base = evaluate(&probs, &dataset_with(labels.clone(), roles.clone()), Role::Test).unwrap();
    let perm: Vec<usize> = (0..20).rev().collect();
    let sets: Vec<Vec<usize>> = perm.iter().map(|&v| labels.get(v).to_vec()).collect();
    let permuted = Array2::from_shape_fn((20, 3), |(i, c)| probs[[perm[i], c]]);
    let other = evaluate(&permuted, &dataset_with(LabelSets::new(3, sets).unwrap(), roles), Role::Test).unwrap();
    assert!((base.ap_samples - other.ap_samples).abs() < 1e-12);
    assert!((base.ap_macro - other.ap_macro).abs() < 1e-12);
    // Micro AP flattens rows; reordering nodes only reorders distinct scores.
    assert!((base.ap_micro - other.ap_micro).abs() < 1e-12);
}

fn sample_log(nodes: usize, checkpoints: usize) -> DynamicsLog {
    let mut r = rng(7);
    let history: Vec<Vec<f64>> = (0..checkpoints * 10)
        .map(|_| (0..nodes).map(|_| rand::Rng::random_range(&mut r, 0.0..3.0)).collect())
        .collect();
    DynamicsLog::from_history((0..nodes).map(|v| 2 * v).collect(), &history)
}

#[test]
fn dynamics_export_contract() {
    let log = sample_log(100, 30);
    assert_eq!(log.checkpoints.len(), 30);
    let dir = tempfile::tempdir().unwrap();
    let files = export_dynamics(&log, &dir.path().join("dyn.csv")).unwrap();
    let data = std::fs::read_to_string(&files.data).unwrap();
    let summary = std::fs::read_to_string(&files.summary).unwrap();
    assert_eq!(data.lines().count(), 3001);
    assert_eq!(summary.lines().count(), 31);

    let back = read_dynamics_csv(&files.data).unwrap();
    assert_eq!(back.nodes, log.nodes);
    for (a, b) in back.checkpoints.iter().zip(&log.checkpoints) {
        assert_eq!(a.epoch, b.epoch);
        assert!(a.losses.iter().zip(&b.losses).all(|(x, y)| (x - y).abs() <= 1e-9));
    }

    let mut rdr = csv::Reader::from_path(&files.summary).unwrap();
    let medians: Vec<f64> = rdr
        .deserialize::<CheckpointSummary>()
        .map(|row| row.unwrap().median)
        .collect();
    for (cp, m) in back.checkpoints.iter().zip(medians) {
        let mut s = cp.losses.clone();
        s.sort_by(f64::total_cmp);
        let recomputed = (s[49] + s[50]) / 2.0;
        assert!((recomputed - m).abs() <= 1e-9);
    }

    let again = export_dynamics(&log, &dir.path().join("dyn2.csv")).unwrap();
    assert_eq!(std::fs::read(&again.data).unwrap(), data.as_bytes());
    assert_eq!(std::fs::read(&again.summary).unwrap(), summary.as_bytes());
}

#[test]
fn atypical_nodes() {
    let rising: Vec<f64> = (1..=6).map(f64::from).collect();
    let falling = [1.0, 0.5, 0.1, 0.05, 0.02, 0.01];
    let history: Vec<Vec<f64>> = (0..6).map(|e| vec![falling[e], rising[e], falling[e], 0.7]).collect();
    let log = DynamicsLog::from_history(vec![10, 11, 12, 13], &history);
    let report = atypical_node_report(&log, 4).unwrap();
    assert_eq!(report[0].node, 11);
    assert!(report[0].slope > 0.0);
    assert!(report.windows(2).all(|w| w[0].final_loss >= w[1].final_loss));
    let flat = report.iter().find(|a| a.node == 13).unwrap();
    assert!(flat.slope.abs() <= 1e-12);
    assert!(matches!(atypical_node_report(&log, 5), Err(Error::Argument(_))));
}

#[test]
fn recovery_examples() {
    let mut r = rng(9);
    let g = random_graph(30, 0.2, &mut r);
    let labels = random_labels(30, 4, false, &mut r);
    let truth = label_homophily(&g, &labels).unwrap();
    assert!((homophily_recovery(&labels.to_dense(), &g, 0.5).unwrap() - truth).abs() < 1e-15);
    let mut fixed = Array2::from_elem((30, 4), 0.1);
    fixed.column_mut(2).fill(0.9);
    assert_eq!(homophily_recovery(&fixed, &g, 0.5).unwrap(), 1.0);
    assert!(homophily_recovery(&fixed, &g, 1.0).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]
    #[test]
    fn ap_matches_brute_force((scores, truth) in arb_instance()) {
        for mode in MODES {
            let brute = brute_mode(&scores, &truth, mode);
            match average_precision(scores.view(), truth.view(), mode) {
                Ok(ap) => prop_assert!((ap - brute.unwrap()).abs() <= 1e-12),
                Err(Error::UndefinedMetric(_)) => prop_assert!(brute.is_none()),
                Err(e) => return Err(TestCaseError::fail(e.to_string())),
            }
        }
    }

    #[test]
    fn ap_invariant_under_monotone_maps((scores, truth) in arb_instance()) {
        let mapped = scores.mapv(|s| (4.0 * s).exp() - 7.0);
        for mode in MODES {
            let a = average_precision(scores.view(), truth.view(), mode);
            let b = average_precision(mapped.view(), truth.view(), mode);
            if let (Ok(a), Ok(b)) = (a, b) {
                prop_assert_eq!(a, b);
            }
        }
    }
}
