mod common;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use srl_core::classifiers::{train, ClassifierKind, FeatureVector, LinearModel, TrainConfig};
use srl_core::clustering::{fit_gmm, ClusterModel, EmbeddingTable, GmmConfig, VARIANCE_FLOOR};
use srl_core::corpus::Corpus;
use srl_core::evaluation::partition_folds;
use srl_core::extraction::{extract_constituents, find_predicate_node, node_mapping_candidates, Alg1Mode};
use srl_core::features::{distance, parse_tree_path, partial_path, preset};
use srl_core::metrics::Prf;
use srl_core::synthetic;
use srl_core::treebank::{parse_bracketed, NodeLabel, NodePath, PhrasalCategories, Sentence, Tree};

use common::*;

fn tree_from_seed(seed: u64) -> Tree {
    random_sentence_tree(&mut ChaCha8Rng::seed_from_u64(seed))
}

fn internal_spans_partition(t: &Tree) -> bool {
    if t.is_terminal() {
        return t.span().len() == 1 && t.children().is_empty() && t.token().is_some();
    }
    let kids = t.children();
    let adjacent = kids.windows(2).all(|w| w[0].span().end == w[1].span().start);
    adjacent
        && kids[0].span().start == t.span().start
        && kids[kids.len() - 1].span().end == t.span().end
        && t.token().is_none()
        && kids.iter().all(internal_spans_partition)
}

fn flip(path: &str) -> String {
    path.chars()
        .rev()
        .collect::<String>()
        .chars()
        .map(|c| match c {
            '↑' => '↓',
            '↓' => '↑',
            c => c,
        })
        .collect()
}

/// Reverses the category sequence of a path, flipping each arrow.
fn reverse_path(path: &str) -> String {
    let mut cats = Vec::new();
    let mut arrows = Vec::new();
    let mut cur = String::new();
    for c in path.chars() {
        if c == '↑' || c == '↓' {
            cats.push(std::mem::take(&mut cur));
            arrows.push(c);
        } else {
            cur.push(c);
        }
    }
    cats.push(cur);
    cats.reverse();
    let flipped: Vec<String> = arrows.iter().rev().map(|a| flip(&a.to_string())).collect();
    let mut out = cats[0].clone();
    for (a, c) in flipped.iter().zip(&cats[1..]) {
        out.push_str(a);
        out.push_str(c);
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn tree_round_trip_and_structure(seed in any::<u64>()) {
        let t = tree_from_seed(seed);
        let text = t.serialize();
        let back = parse_bracketed(&text).unwrap();
        prop_assert_eq!(&back, &t);
        prop_assert!(internal_spans_partition(&t));
        let s = Sentence::new("x", t.clone());
        prop_assert_eq!(s.len(), t.span().len());
        prop_assert_eq!(t.preorder().iter().filter(|(_, n)| n.is_terminal()).count(), s.len());
        prop_assert!(t.check_invariants());
    }

    #[test]
    fn label_parse_inverse(cat in "[A-Z]{1,4}", tags in proptest::collection::vec("[A-Z]{1,3}", 0..3)) {
        let mut raw = cat.clone();
        for t in &tags {
            raw.push('-');
            raw.push_str(t);
        }
        let l = NodeLabel::parse(&raw).unwrap();
        prop_assert_eq!(l.category(), cat.as_str());
        let mut joined = vec![l.category().to_string()];
        joined.extend(l.function_tags().iter().cloned());
        prop_assert_eq!(joined.join("-"), raw);
    }

    #[test]
    fn extraction_invariants(seed in any::<u64>(), pick in any::<prop::sample::Index>()) {
        let t = tree_from_seed(seed);
        let p = pick.index(t.span().len());
        let pred = find_predicate_node(&t, p).unwrap();
        let nm = node_mapping_candidates(&t, &pred).unwrap();
        let nm_spans: std::collections::HashSet<_> = nm.spans().collect();
        for mode in [Alg1Mode::Strict, Alg1Mode::Repaired] {
            let set = extract_constituents(&t, &pred, &PhrasalCategories::default(), mode).unwrap();
            let again = extract_constituents(&t, &pred, &PhrasalCategories::default(), mode).unwrap();
            prop_assert_eq!(&set, &again);
            let spans: Vec<_> = set.spans().collect();
            for (i, a) in spans.iter().enumerate() {
                prop_assert!(!a.contains_index(p));
                prop_assert!(nm_spans.contains(a));
                for b in &spans[i + 1..] {
                    prop_assert!(!a.overlaps(b), "{} overlaps {}", a, b);
                }
            }
        }
        for s in &nm_spans {
            prop_assert!(!s.contains_index(p));
        }
    }

    #[test]
    fn path_feature_algebra(seed in any::<u64>(), a in any::<prop::sample::Index>(), b in any::<prop::sample::Index>()) {
        let t = tree_from_seed(seed);
        let nodes: Vec<NodePath> = t.preorder().into_iter().map(|(p, _)| p).collect();
        let (x, y) = (&nodes[a.index(nodes.len())], &nodes[b.index(nodes.len())]);
        prop_assume!(x != y);
        let xy = parse_tree_path(&t, x, y).unwrap().value;
        let yx = parse_tree_path(&t, y, x).unwrap().value;
        prop_assert_eq!(reverse_path(&xy), yx);
        let arrows = xy.chars().filter(|c| *c == '↑' || *c == '↓').count();
        prop_assert_eq!(distance(&t, x, y).unwrap().value, arrows.to_string());
        let partial = partial_path(&t, x, y).unwrap().value;
        prop_assert!(xy.starts_with(&partial));
        let lca = t.get(&x.common_ancestor(y)).unwrap().category().to_string();
        prop_assert!(partial.ends_with(&lca));
        prop_assert!(!partial.contains('↓'));
    }

    #[test]
    fn f1_algebra(m in 0usize..500, extra_p in 0usize..500, extra_g in 0usize..500) {
        let prf = Prf::from_counts(m, m + extra_p, m + extra_g);
        let (p, r) = (prf.precision, prf.recall);
        let f = if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
        prop_assert!((prf.f1 - f).abs() <= 1e-12);
        prop_assert!(prf.f1 <= 2.0 * p.min(r) + 1e-12);
        prop_assert!(prf.f1 <= (p + r) / 2.0 + 1e-12);
        prop_assert!((0.0..=1.0).contains(&prf.f1));
    }

    #[test]
    fn fold_partition(n in 2usize..200, k in 2usize..12, seed in any::<u64>(), other in any::<u64>()) {
        prop_assume!(k <= n);
        let folds = partition_folds(n, k, seed);
        prop_assert_eq!(folds.len(), k);
        let sizes: Vec<usize> = folds.iter().map(Vec::len).collect();
        prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        let mut all = folds.concat();
        all.sort_unstable();
        prop_assert_eq!(&all, &(0..n).collect::<Vec<_>>());
        let mut all2 = partition_folds(n, k, other).concat();
        all2.sort_unstable();
        prop_assert_eq!(all, all2);
    }

    #[test]
    fn feature_vector_strictly_increasing(idx in proptest::collection::vec(0u32..1000, 0..50)) {
        let v = FeatureVector::from_indices(idx.clone());
        prop_assert!(v.indices().windows(2).all(|w| w[0] < w[1]));
        let mut expected = idx;
        expected.sort_unstable();
        expected.dedup();
        prop_assert_eq!(v.indices(), expected.as_slice());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn corpus_properties(seed in any::<u64>(), n in 1usize..30, doubles in 0usize..5) {
        let g = synthetic::generate(n, doubles, seed);
        let c = Corpus::from_strs(&g.trees, &g.props).unwrap();
        let (once, _) = c.filter_simple();
        let (twice, stats) = once.filter_simple();
        prop_assert_eq!(once.instances.clone(), twice.instances.clone());
        prop_assert_eq!(stats.dropped_sentences, 0);
        for inst in &c.instances {
            let mut from_gold: Vec<_> = inst.arguments.iter().map(|a| inst.gold_label_of(a.span)).collect();
            let mut roles: Vec<_> = inst.arguments.iter().map(|a| a.role).collect();
            from_gold.sort();
            roles.sort();
            prop_assert_eq!(from_gold, roles);
        }
    }

    #[test]
    fn maxent_probabilities_and_bias_shift(seed in any::<u64>(), shift in -50.0f64..50.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let set = random_small_set(&mut rng, 20, 6, 3);
        let cfg = TrainConfig { kind: ClassifierKind::Maxent, ..TrainConfig::default() };
        let m = train(&set, &cfg).unwrap();
        let mut shifted = m.clone();
        shifted.biases_mut().iter_mut().for_each(|b| *b += shift);
        for e in &set.examples {
            let p = m.probabilities(&e.features);
            prop_assert!(p.iter().all(|&x| x > 0.0));
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
            prop_assert_eq!(m.predict(&e.features).label, shifted.predict(&e.features).label);
        }
        let bytes = m.to_text();
        prop_assert_eq!(train(&set, &cfg).unwrap().to_text(), bytes.clone());
        prop_assert_eq!(LinearModel::from_text(&bytes).unwrap(), m);
    }

    #[test]
    fn gmm_invariants(seed in any::<u64>(), k in 1usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        use rand::Rng;
        let mut table = EmbeddingTable::new(3);
        for i in 0..40 {
            let c = (i % 4) as f64;
            let v: Vec<f64> = (0..3).map(|_| c * 3.0 + rng.gen_range(-1.0..1.0)).collect();
            table.insert(&format!("w{i}"), &v);
        }
        let fit = fit_gmm(&table, &GmmConfig { k, seed, max_iter: 50, tol: 1e-8 }).unwrap();
        let m = &fit.model;
        prop_assert!((m.weights().iter().sum::<f64>() - 1.0).abs() < 1e-9);
        prop_assert!(m.weights().iter().all(|&w| w >= 0.0));
        for c in 0..k {
            prop_assert!(m.variance(c).iter().all(|&v| v >= VARIANCE_FLOOR));
        }
        prop_assert!(fit.log_likelihood.windows(2).all(|w| w[1] >= w[0] - 1e-9 * w[0].abs().max(1.0)));
        let back = ClusterModel::from_text(&m.to_text()).unwrap();
        for w in table.words() {
            prop_assert_eq!(back.get(w), m.get(w));
        }
        for i in 0..table.len() {
            prop_assert_eq!(back.classify(table.vector(i)), m.classify(table.vector(i)));
        }
    }
}

#[test]
fn phi16_is_intersection() {
    let a = preset("phi10").unwrap().templates;
    let b = preset("phi15").unwrap().templates;
    let c = preset("phi16").unwrap().templates;
    assert_eq!(c, a.intersection(&b).copied().collect());
}
