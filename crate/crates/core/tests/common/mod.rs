#![allow(dead_code)]

use std::path::PathBuf;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use srl_core::classifiers::{Example, FeatureVector, TrainingSet};
use srl_core::features::FeatureDictionary;
use srl_core::treebank::{NodeLabel, Tree};

pub const REPORTED: &str = "(S (NP-SUB (N-H Bà)) (VP (V-H nói) (SBAR (S (NP-SUB (P-H nó)) (VP (V-H là) (NP (N-H con_trai) (P tôi) (T mà)))))))";

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

const PHRASES: &[&str] = &["S", "NP", "VP", "PP", "SBAR", "AP", "QP", "X"];
const WORD_CATS: &[&str] = &["N", "V", "P", "E", "A", "R", "C", "T", "L"];
const TAGS: &[&str] = &["SUB", "H", "TMP", "DIR", "LOC", "MNR", "DOB"];
const WORDS: &[&str] = &["Nam", "đá", "bóng", "con trai", "tôi", "hôm qua", "là", "mà", "sách", "Hà Nội", "x"];

fn random_label(rng: &mut ChaCha8Rng, cats: &[&str]) -> NodeLabel {
    let mut raw = cats.choose(rng).unwrap().to_string();
    for _ in 0..rng.gen_range(0..3) {
        if rng.gen_bool(0.5) {
            raw.push('-');
            raw.push_str(TAGS.choose(rng).unwrap());
        }
    }
    NodeLabel::parse(&raw).expect("generated label is valid")
}

/// A random tree with at most `depth` internal levels.
pub fn random_tree(rng: &mut ChaCha8Rng, depth: usize) -> Tree {
    if depth == 0 || rng.gen_bool(0.3) {
        let word = WORDS.choose(rng).unwrap();
        return Tree::leaf(random_label(rng, WORD_CATS), *word);
    }
    let n = rng.gen_range(1..=3);
    let kids = (0..n).map(|_| random_tree(rng, depth - 1)).collect();
    Tree::internal(random_label(rng, PHRASES), kids)
}

/// A random tree whose root is internal.
pub fn random_sentence_tree(rng: &mut ChaCha8Rng) -> Tree {
    loop {
        let t = random_tree(rng, 5);
        if !t.is_terminal() {
            return t;
        }
    }
}

pub fn dictionary(n: usize) -> FeatureDictionary {
    FeatureDictionary::from_names((0..n).map(|i| format!("f{i}")))
}

/// Three classes, each owning six indicator features of which every point
/// carries at least two, plus two noise features shared by all classes.
pub fn separable_three_class(rng: &mut ChaCha8Rng, points: usize) -> TrainingSet {
    let labels = ["Arg0", "Arg1", "ArgM-TMP"];
    let examples = (0..points)
        .map(|i| {
            let c = i % 3;
            let own: Vec<u32> = (0..6).map(|j| (c * 6 + j) as u32).collect();
            let take = rng.gen_range(2..=4);
            let mut idx: Vec<u32> = own.choose_multiple(rng, take).copied().collect();
            for noise in [18u32, 19] {
                if rng.gen_bool(0.5) {
                    idx.push(noise);
                }
            }
            Example {
                features: FeatureVector::from_indices(idx),
                label: labels[c].to_string(),
            }
        })
        .collect();
    TrainingSet {
        dictionary: dictionary(20),
        examples,
    }
}

/// Random small multiclass data: `n` points over `f` features and `l` labels.
pub fn random_small_set(rng: &mut ChaCha8Rng, n: usize, f: usize, l: usize) -> TrainingSet {
    let examples = (0..n)
        .map(|i| {
            let idx: Vec<u32> = (0..f as u32).filter(|_| rng.gen_bool(0.4)).collect();
            // every label appears at least once
            let label = if i < l { i } else { rng.gen_range(0..l) };
            Example {
                features: FeatureVector::from_indices(idx),
                label: format!("Arg{label}"),
            }
        })
        .collect();
    TrainingSet {
        dictionary: dictionary(f),
        examples,
    }
}

/// Penalised multinomial NLL computed directly from dense weights, with the
/// same parameter layout as the library objective.
pub fn naive_maxent_loss(set: &TrainingSet, labels: &[String], l2_strength: f64, params: &[f64]) -> f64 {
    let l = labels.len();
    let f = set.dictionary.len();
    let w = |j: usize, k: usize| params[j * l + k];
    let b = |k: usize| params[f * l + k];
    let mut loss = 0.0;
    for e in &set.examples {
        let x: Vec<f64> = (0..f)
            .map(|j| if e.features.indices().contains(&(j as u32)) { 1.0 } else { 0.0 })
            .collect();
        let scores: Vec<f64> = (0..l).map(|k| b(k) + (0..f).map(|j| w(j, k) * x[j]).sum::<f64>()).collect();
        let y = labels.iter().position(|s| *s == e.label).unwrap();
        let z: f64 = scores.iter().map(|s| s.exp()).sum();
        loss += z.ln() - scores[y];
    }
    let sq: f64 = params[..f * l].iter().map(|v| v * v).sum();
    loss + sq / (2.0 * l2_strength)
}
