mod common;

use std::sync::Arc;

use srl_core::classifiers::ClassifierKind;
use srl_core::clustering::ClusterModel;
use srl_core::corpus::{Corpus, Role};
use srl_core::evaluation::{
    ablation_suite, cross_validate, learning_curve, score_labelled, score_props, CvReport,
};
use srl_core::features::preset;
use srl_core::labelling::{train_pipeline, PipelineConfig, PipelineModels, SrlPipeline, Strategy};

use common::*;

fn synthetic() -> Corpus {
    let corpus = Corpus::load(&fixture("synthetic.trees"), &fixture("synthetic.props")).unwrap();
    corpus.filter_simple().0
}

fn clusters() -> Arc<ClusterModel> {
    Arc::new(ClusterModel::load(&fixture("synthetic.gmm")).unwrap())
}

fn config(features: &str, strategy: Strategy, kind: ClassifierKind) -> PipelineConfig {
    let mut c = PipelineConfig::new(preset(features).unwrap());
    c.strategy = strategy;
    c.train.kind = kind;
    c
}

#[test]
fn both_strategies_reproduce_training_gold() {
    let corpus = synthetic();
    for strategy in [Strategy::OneStep, Strategy::TwoStep] {
        for kind in [ClassifierKind::Maxent, ClassifierKind::Svm] {
            let p = train_pipeline(&corpus, &config("phi8", strategy, kind), Some(clusters())).unwrap();
            let labelled = p.label_corpus(&corpus).unwrap();
            let prf = score_labelled(&labelled, &corpus.instances).unwrap();
            assert_eq!(prf.f1, 1.0, "{strategy} {kind}: {prf:?}");
            for l in &labelled {
                assert!(l.predictions.iter().all(|(_, r)| r.is_argument()));
                assert!(l.predictions.iter().all(|(_, r)| !matches!(r, Role::Null | Role::V)));
            }
        }
    }
}

#[test]
fn two_step_classifier_never_sees_null() {
    let corpus = synthetic();
    let p = train_pipeline(&corpus, &config("phi1", Strategy::TwoStep, ClassifierKind::Svm), None).unwrap();
    let PipelineModels::TwoStep { identifier, classifier } = &p.models else {
        panic!("expected two models");
    };
    let mut ids = identifier.labels().to_vec();
    ids.sort();
    assert_eq!(ids, ["ARG", "NULL"]);
    assert!(!classifier.labels().iter().any(|l| l == "NULL"));
}

#[test]
fn predictions_are_candidate_spans() {
    let corpus = synthetic();
    let cfg = config("phi1", Strategy::OneStep, ClassifierKind::Maxent);
    let p = train_pipeline(&corpus, &cfg, None).unwrap();
    for inst in &corpus.instances {
        let sentence = corpus.sentence(&inst.sentence_id).unwrap();
        let pred_node = srl_core::extraction::find_predicate_node(&sentence.tree, inst.predicate_index).unwrap();
        let cands = cfg.extractor.extract(&sentence.tree, &pred_node).unwrap();
        let spans: Vec<_> = cands.spans().collect();
        let out = p.label_sentence(sentence, inst.predicate_index).unwrap();
        assert!(out.predictions.iter().all(|(s, _)| spans.contains(s)));
    }
}

#[test]
fn pipeline_text_round_trip_preserves_labels() {
    let corpus = synthetic();
    let p = train_pipeline(&corpus, &config("phi8", Strategy::TwoStep, ClassifierKind::Maxent), Some(clusters())).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("p.txt");
    p.save(&path).unwrap();
    let back = SrlPipeline::load(&path).unwrap();
    assert_eq!(back.to_text(), p.to_text());
    assert_eq!(back.label_corpus(&corpus).unwrap(), p.label_corpus(&corpus).unwrap());
}

#[test]
fn cross_validation_on_toy_corpus_is_perfect() {
    let corpus = synthetic();
    let r = cross_validate(&corpus, &config("phi8", Strategy::OneStep, ClassifierKind::Svm), Some(clusters()), 10, 42)
        .unwrap();
    assert_eq!(r.folds.len(), 10);
    assert_eq!(r.mean.f1, 1.0);
    let again = cross_validate(&corpus, &config("phi8", Strategy::OneStep, ClassifierKind::Svm), Some(clusters()), 10, 42)
        .unwrap();
    assert_eq!(r, again);
}

#[test]
fn function_tag_helps_on_toy_corpus() {
    let corpus = synthetic();
    let base = config("phi0", Strategy::OneStep, ClassifierKind::Maxent);
    let names = vec!["phi0".to_string(), "phi1".to_string()];
    let rows = ablation_suite(&corpus, &names, &base, None, 5, 0).unwrap();
    assert!(rows[1].report.mean.f1 >= rows[0].report.mean.f1, "{} < {}", rows[1].report.mean.f1, rows[0].report.mean.f1);
    assert!(ablation_suite(&corpus, &["phi99".to_string()], &base, None, 5, 0).is_err());
}

#[test]
fn full_size_learning_curve_point_equals_cv() {
    let corpus = synthetic();
    let cfg = config("phi1", Strategy::OneStep, ClassifierKind::Maxent);
    let n = corpus.len();
    let curve = learning_curve(&corpus, &[20, 35, n], &cfg, None, 5, 9).unwrap();
    let full: CvReport = cross_validate(&corpus, &cfg, None, 5, 9).unwrap();
    assert_eq!(curve.last().unwrap().mean, full.mean);
    assert_eq!(curve.iter().map(|p| p.size).collect::<Vec<_>>(), [20, 35, n]);
    assert!(learning_curve(&corpus, &[30, 20], &cfg, None, 5, 9).is_err());
    assert!(learning_curve(&corpus, &[n + 1], &cfg, None, 5, 9).is_err());
}

#[test]
fn scoring_ignores_order_and_reserved_roles() {
    let corpus = synthetic();
    let mut shuffled = corpus.instances.clone();
    shuffled.reverse();
    let prf = score_props(&shuffled, &corpus.instances).unwrap();
    assert_eq!((prf.precision, prf.recall, prf.f1), (1.0, 1.0, 1.0));
    let mut missing = corpus.instances.clone();
    missing.pop();
    assert!(score_props(&missing, &corpus.instances).is_err());
}
