mod common;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use srl_core::classifiers::{
    train, train_maxent, train_svm, ClassifierError, ClassifierKind, Example, FeatureVector, LinearModel,
    TrainConfig, TrainingSet,
};

use common::*;

fn ex(idx: &[u32], label: &str) -> Example {
    Example {
        features: FeatureVector::from_indices(idx.to_vec()),
        label: label.to_string(),
    }
}

/// Binary hinge objective of one one-vs-rest model with a single feature.
fn hinge_objective(xs: &[(f64, f64)], c: f64, w: f64, b: f64) -> f64 {
    0.5 * w * w + c * xs.iter().map(|&(x, y)| (1.0 - y * (w * x + b)).max(0.0)).sum::<f64>()
}

/// Minimum over a fine grid in w. For each w the objective is convex and
/// piecewise linear in b, so its minimum sits at one of the hinge kinks.
fn grid_minimum(xs: &[(f64, f64)], c: f64) -> f64 {
    let mut best = f64::INFINITY;
    let steps = 80_000;
    for i in 0..=steps {
        let w = -4.0 + 8.0 * i as f64 / steps as f64;
        for &(x, y) in xs {
            let b = y - w * x;
            best = best.min(hinge_objective(xs, c, w, b));
        }
    }
    best
}

#[test]
fn svm_matches_grid_search_on_one_feature() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for trial in 0..6 {
        let n = rng.gen_range(6..14);
        let examples: Vec<Example> = (0..n)
            .map(|i| {
                let on = rng.gen_bool(0.5);
                // the feature leans towards A but the classes overlap
                let a = if i < 2 { i == 0 } else if on { rng.gen_bool(0.75) } else { rng.gen_bool(0.25) };
                ex(if on { &[0] } else { &[] }, if a { "A" } else { "B" })
            })
            .collect();
        let set = TrainingSet { dictionary: dictionary(1), examples };
        let c = [0.5, 1.0, 2.0][trial % 3];
        let cfg = TrainConfig { kind: ClassifierKind::Svm, svm_c: c, tol: 1e-8, max_iter: 100_000, ..TrainConfig::default() };
        let model = train_svm(&set, &cfg).unwrap();
        for (l, label) in model.labels().iter().enumerate() {
            let xs: Vec<(f64, f64)> = set
                .examples
                .iter()
                .map(|e| (e.features.len() as f64, if &e.label == label { 1.0 } else { -1.0 }))
                .collect();
            let got = hinge_objective(&xs, c, model.weight(0, l), model.biases()[l]);
            let best = grid_minimum(&xs, c);
            assert!(
                (got - best).abs() <= 1e-3,
                "trial {trial} label {label}: trained objective {got} vs grid {best}"
            );
        }
    }
}

fn symmetric_set() -> TrainingSet {
    let mut examples = Vec::new();
    for _ in 0..5 {
        examples.push(ex(&[0], "A"));
        examples.push(ex(&[1], "B"));
        examples.push(ex(&[0, 2], "A"));
        examples.push(ex(&[1, 2], "B"));
    }
    TrainingSet { dictionary: dictionary(3), examples }
}

#[test]
fn symmetric_midpoint_scores_tie() {
    let set = symmetric_set();
    for kind in [ClassifierKind::Maxent, ClassifierKind::Svm] {
        let model = train(&set, &TrainConfig { kind, tol: 1e-9, max_iter: 100_000, ..TrainConfig::default() }).unwrap();
        for mid in [vec![0, 1], vec![], vec![2], vec![0, 1, 2]] {
            let s = model.scores(&FeatureVector::from_indices(mid.clone()));
            assert!((s[0] - s[1]).abs() <= 1e-6, "{kind} {mid:?}: {s:?}");
        }
    }
}

#[test]
fn maxent_stops_below_gradient_tolerance() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let set = separable_three_class(&mut rng, 60);
    let cfg = TrainConfig { kind: ClassifierKind::Maxent, tol: 1e-6, ..TrainConfig::default() };
    let model = train_maxent(&set, &cfg).unwrap();
    let meta = model.metadata();
    assert_eq!(meta["converged"], "true");
    let norm: f64 = meta["gradient_norm"].parse().unwrap();
    assert!(norm <= 1e-6, "gradient norm {norm}");
}

#[test]
fn maxent_loss_not_above_zero_weights() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..20 {
        let set = random_small_set(&mut rng, 15, 5, 3);
        let labels = set.labels();
        let model = train_maxent(&set, &TrainConfig { kind: ClassifierKind::Maxent, ..TrainConfig::default() }).unwrap();
        let l = labels.len();
        let mut params = vec![0.0; 5 * l + l];
        for j in 0..5 {
            for k in 0..l {
                params[j * l + k] = model.weight(j, k);
            }
        }
        params[5 * l..].copy_from_slice(model.biases());
        let trained = naive_maxent_loss(&set, &labels, 1.0, &params);
        let zero = naive_maxent_loss(&set, &labels, 1.0, &vec![0.0; 6 * l]);
        assert!(trained <= zero + 1e-12, "{trained} > {zero}");
    }
}

#[test]
fn degenerate_inputs_are_rejected() {
    let empty = TrainingSet { dictionary: dictionary(2), examples: vec![] };
    let single = TrainingSet { dictionary: dictionary(2), examples: vec![ex(&[0], "A"), ex(&[1], "A")] };
    let out_of_range = TrainingSet { dictionary: dictionary(2), examples: vec![ex(&[0], "A"), ex(&[5], "B")] };
    for kind in [ClassifierKind::Maxent, ClassifierKind::Svm] {
        let cfg = TrainConfig { kind, ..TrainConfig::default() };
        assert!(matches!(train(&empty, &cfg), Err(ClassifierError::EmptyData)));
        assert!(matches!(train(&single, &cfg), Err(ClassifierError::SingleLabelData(_))));
        assert!(matches!(train(&out_of_range, &cfg), Err(ClassifierError::FeatureOutOfRange { .. })));
    }
    let bad = TrainConfig { svm_c: 0.0, ..TrainConfig::default() };
    assert!(matches!(train(&symmetric_set(), &bad), Err(ClassifierError::InvalidConfig(_))));
}

#[test]
fn training_is_reproducible_per_seed() {
    let mut rng = ChaCha8Rng::seed_from_u64(30);
    let set = random_small_set(&mut rng, 40, 8, 3);
    for kind in [ClassifierKind::Maxent, ClassifierKind::Svm] {
        let cfg = TrainConfig { kind, seed: 3, ..TrainConfig::default() };
        let a = train(&set, &cfg).unwrap();
        let b = train(&set, &cfg).unwrap();
        assert_eq!(a.to_text(), b.to_text());
        assert_eq!(LinearModel::from_text(&a.to_text()).unwrap(), a);
    }
}
