//! Multiclass linear classifiers over sparse binary feature vectors.
//!
//! * Maximum entropy (multinomial logistic regression) minimising the summed
//!   negative log-likelihood plus `||W||^2 / (2 * l2_strength)` with
//!   L-BFGS.
//! * One-vs-rest linear SVM minimising `||w||^2 / 2 + C * sum hinge` per
//!   label. The weights come from dual coordinate descent at a fixed bias; the
//!   bias itself is found by bisection on the dual equality condition
//!   `sum alpha_i y_i = 0`, so it is not regularised.
//!
//! Both are deterministic: identical data and configuration give identical
//! model bytes.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::label_order_key;
use crate::features::FeatureDictionary;

const FORMAT_HEADER: &str = "srl-linear-model v1";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ClassifierError {
    #[error("no training data")]
    EmptyData,
    #[error("training data has a single label {0:?}")]
    SingleLabelData(String),
    #[error("feature index {index} outside dictionary of {size}")]
    FeatureOutOfRange { index: u32, size: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("unsupported model version: {0:?}")]
    VersionMismatch(String),
    #[error("corrupt model: {0}")]
    CorruptModel(String),
    #[error("{0}")]
    Io(String),
}

/// Sorted set of active binary features.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct FeatureVector {
    indices: Vec<u32>,
}

impl FeatureVector {
    pub fn from_indices(indices: impl IntoIterator<Item = u32>) -> Self {
        let mut indices: Vec<u32> = indices.into_iter().collect();
        indices.sort_unstable();
        indices.dedup();
        FeatureVector { indices }
    }

    pub fn indices(&self) -> &[u32] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum ClassifierKind {
    Maxent,
    #[default]
    Svm,
}

impl fmt::Display for ClassifierKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ClassifierKind::Maxent => "maxent",
            ClassifierKind::Svm => "svm",
        })
    }
}

impl FromStr for ClassifierKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "maxent" | "me" => Ok(ClassifierKind::Maxent),
            "svm" => Ok(ClassifierKind::Svm),
            _ => Err(format!("unknown classifier {s:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub kind: ClassifierKind,
    /// Inverse L2 penalty for maxent (the penalty is `||W||^2 / (2 * l2_strength)`).
    pub l2_strength: f64,
    pub svm_c: f64,
    pub max_iter: usize,
    pub tol: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            kind: ClassifierKind::Svm,
            l2_strength: 1.0,
            svm_c: 1.0,
            max_iter: 1000,
            tol: 1e-4,
            seed: 0,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<(), ClassifierError> {
        if !(self.l2_strength > 0.0) {
            return Err(ClassifierError::InvalidConfig("l2_strength must be > 0".into()));
        }
        if !(self.svm_c > 0.0) {
            return Err(ClassifierError::InvalidConfig("svm_c must be > 0".into()));
        }
        if !(self.tol > 0.0) {
            return Err(ClassifierError::InvalidConfig("tol must be > 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Example {
    pub features: FeatureVector,
    pub label: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TrainingSet {
    pub dictionary: FeatureDictionary,
    pub examples: Vec<Example>,
}

impl TrainingSet {
    /// Distinct labels in canonical order.
    pub fn labels(&self) -> Vec<String> {
        let mut labels: Vec<String> = self.examples.iter().map(|e| e.label.clone()).collect();
        labels.sort_by_key(|l| label_order_key(l));
        labels.dedup();
        labels
    }

    fn check(&self) -> Result<Vec<String>, ClassifierError> {
        if self.examples.is_empty() {
            return Err(ClassifierError::EmptyData);
        }
        let size = self.dictionary.len();
        for e in &self.examples {
            if let Some(&index) = e.features.indices().iter().find(|&&i| i as usize >= size) {
                return Err(ClassifierError::FeatureOutOfRange { index, size });
            }
        }
        let labels = self.labels();
        if labels.len() < 2 {
            return Err(ClassifierError::SingleLabelData(labels[0].clone()));
        }
        Ok(labels)
    }

    fn label_ids(&self, labels: &[String]) -> Vec<usize> {
        let pos: BTreeMap<&str, usize> = labels.iter().enumerate().map(|(i, l)| (l.as_str(), i)).collect();
        self.examples.iter().map(|e| pos[e.label.as_str()]).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    kind: ClassifierKind,
    labels: Vec<String>,
    /// Feature-major: the weight of feature `j` for label `l` is at
    /// `j * labels.len() + l`.
    weights: Vec<f64>,
    biases: Vec<f64>,
    dictionary: FeatureDictionary,
    metadata: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub label: String,
    /// Linear score per label, aligned with [`LinearModel::labels`].
    pub scores: Vec<f64>,
}

impl LinearModel {
    pub fn from_parts(
        kind: ClassifierKind,
        labels: Vec<String>,
        weights: Vec<f64>,
        biases: Vec<f64>,
        dictionary: FeatureDictionary,
        metadata: BTreeMap<String, String>,
    ) -> Result<Self, ClassifierError> {
        if labels.is_empty() {
            return Err(ClassifierError::CorruptModel("no labels".into()));
        }
        if biases.len() != labels.len() || weights.len() != labels.len() * dictionary.len() {
            return Err(ClassifierError::CorruptModel("weight shape mismatch".into()));
        }
        Ok(LinearModel {
            kind,
            labels,
            weights,
            biases,
            dictionary: dictionary.frozen(),
            metadata,
        })
    }

    /// A model that always predicts `label`.
    pub fn constant(kind: ClassifierKind, label: &str, dictionary: FeatureDictionary) -> Self {
        let n = dictionary.len();
        let mut metadata = BTreeMap::new();
        metadata.insert("constant".to_string(), "true".to_string());
        LinearModel {
            kind,
            labels: vec![label.to_string()],
            weights: vec![0.0; n],
            biases: vec![0.0],
            dictionary: dictionary.frozen(),
            metadata,
        }
    }

    pub fn kind(&self) -> ClassifierKind {
        self.kind
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn dictionary(&self) -> &FeatureDictionary {
        &self.dictionary
    }

    pub fn metadata(&self) -> &BTreeMap<String, String> {
        &self.metadata
    }

    pub fn feature_count(&self) -> usize {
        self.dictionary.len()
    }

    pub fn biases(&self) -> &[f64] {
        &self.biases
    }

    pub fn biases_mut(&mut self) -> &mut [f64] {
        &mut self.biases
    }

    pub fn weight(&self, feature: usize, label: usize) -> f64 {
        self.weights[feature * self.labels.len() + label]
    }

    /// Per-label linear scores. Indices beyond the dictionary are ignored.
    pub fn scores(&self, fv: &FeatureVector) -> Vec<f64> {
        let l = self.labels.len();
        let mut s = self.biases.clone();
        for &j in fv.indices() {
            let j = j as usize;
            if j >= self.dictionary.len() {
                continue;
            }
            let row = &self.weights[j * l..(j + 1) * l];
            s.iter_mut().zip(row).for_each(|(a, w)| *a += w);
        }
        s
    }

    /// Argmax label; ties go to the earlier label.
    pub fn predict(&self, fv: &FeatureVector) -> Prediction {
        let scores = self.scores(fv);
        let mut best = 0;
        for (i, s) in scores.iter().enumerate() {
            if *s > scores[best] {
                best = i;
            }
        }
        Prediction {
            label: self.labels[best].clone(),
            scores,
        }
    }

    /// Softmax of the scores (meaningful for maxent models).
    pub fn probabilities(&self, fv: &FeatureVector) -> Vec<f64> {
        softmax(&self.scores(fv))
    }

    pub fn to_text(&self) -> String {
        use std::fmt::Write as _;
        let mut s = String::new();
        let join = |v: &[f64]| v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(" ");
        writeln!(s, "{FORMAT_HEADER}").unwrap();
        writeln!(s, "kind {}", self.kind).unwrap();
        writeln!(s, "labels {}", self.labels.len()).unwrap();
        for l in &self.labels {
            writeln!(s, "{l}").unwrap();
        }
        writeln!(s, "meta {}", self.metadata.len()).unwrap();
        for (k, v) in &self.metadata {
            writeln!(s, "{k} {v}").unwrap();
        }
        writeln!(s, "features {}", self.dictionary.len()).unwrap();
        for f in self.dictionary.names() {
            writeln!(s, "{f}").unwrap();
        }
        writeln!(s, "biases {}", join(&self.biases)).unwrap();
        let l = self.labels.len();
        for row in self.weights.chunks(l) {
            writeln!(s, "{}", join(row)).unwrap();
        }
        writeln!(s, "end").unwrap();
        s
    }

    pub fn from_text(text: &str) -> Result<Self, ClassifierError> {
        let mut lines = text.lines();
        let header = lines.next().unwrap_or_default();
        if header != FORMAT_HEADER {
            return Err(ClassifierError::VersionMismatch(header.to_string()));
        }
        Self::read_body(&mut lines)
    }

    /// Reads a model from `lines` positioned just after the header line.
    pub(crate) fn read_body<'a>(lines: &mut impl Iterator<Item = &'a str>) -> Result<Self, ClassifierError> {
        let corrupt = |m: String| ClassifierError::CorruptModel(m);
        let mut next = |what: &str| lines.next().ok_or_else(|| corrupt(format!("missing {what}")));
        let field = |line: &'a str, key: &str| -> Result<&'a str, ClassifierError> {
            line.strip_prefix(key)
                .and_then(|r| r.strip_prefix(' '))
                .ok_or_else(|| corrupt(format!("expected {key:?}, found {line:?}")))
        };
        let count = |s: &str| s.parse::<usize>().map_err(|_| corrupt(format!("bad count {s:?}")));
        let floats = |s: &str, n: usize| -> Result<Vec<f64>, ClassifierError> {
            let v = s
                .split(' ')
                .map(|x| x.parse::<f64>().map_err(|_| corrupt(format!("bad float {x:?}"))))
                .collect::<Result<Vec<_>, _>>()?;
            if v.len() != n {
                return Err(corrupt(format!("expected {n} values, found {}", v.len())));
            }
            Ok(v)
        };

        let kind: ClassifierKind = field(next("kind")?, "kind")?.parse().map_err(corrupt)?;
        let n_labels = count(field(next("labels")?, "labels")?)?;
        let mut labels = Vec::with_capacity(n_labels);
        for _ in 0..n_labels {
            labels.push(next("label")?.to_string());
        }
        let n_meta = count(field(next("meta")?, "meta")?)?;
        let mut metadata = BTreeMap::new();
        for _ in 0..n_meta {
            let line = next("metadata")?;
            let (k, v) = line.split_once(' ').ok_or_else(|| corrupt(format!("bad metadata {line:?}")))?;
            metadata.insert(k.to_string(), v.to_string());
        }
        let n_features = count(field(next("features")?, "features")?)?;
        let mut names = Vec::with_capacity(n_features);
        for _ in 0..n_features {
            names.push(next("feature")?.to_string());
        }
        let dictionary = FeatureDictionary::from_names(names);
        if dictionary.len() != n_features {
            return Err(corrupt("duplicate feature names".into()));
        }
        let biases = floats(field(next("biases")?, "biases")?, n_labels)?;
        let mut weights = Vec::with_capacity(n_features * n_labels);
        for _ in 0..n_features {
            weights.extend(floats(next("weights")?, n_labels)?);
        }
        if next("end")? != "end" {
            return Err(corrupt("missing end marker".into()));
        }
        LinearModel::from_parts(kind, labels, weights, biases, dictionary, metadata)
    }

    pub fn save(&self, path: &Path) -> Result<(), ClassifierError> {
        fs::write(path, self.to_text()).map_err(|e| ClassifierError::Io(format!("{}: {e}", path.display())))
    }

    pub fn load(path: &Path) -> Result<Self, ClassifierError> {
        let text = fs::read_to_string(path).map_err(|e| ClassifierError::Io(format!("{}: {e}", path.display())))?;
        Self::from_text(&text)
    }
}

fn softmax(scores: &[f64]) -> Vec<f64> {
    let m = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = scores.iter().map(|s| (s - m).exp()).collect();
    let z: f64 = e.iter().sum();
    e.into_iter().map(|x| x / z).collect()
}

/// Trains a model of `config.kind`.
pub fn train(set: &TrainingSet, config: &TrainConfig) -> Result<LinearModel, ClassifierError> {
    match config.kind {
        ClassifierKind::Maxent => train_maxent(set, config),
        ClassifierKind::Svm => train_svm(set, config),
    }
}

/// Penalised multinomial negative log-likelihood over sparse binary rows.
///
/// Parameters are laid out as `n_features * n_labels` feature-major weights
/// followed by `n_labels` biases.
pub struct MaxentObjective<'a> {
    rows: Vec<(&'a FeatureVector, usize)>,
    n_features: usize,
    n_labels: usize,
    l2_strength: f64,
}

impl<'a> MaxentObjective<'a> {
    pub fn new(rows: Vec<(&'a FeatureVector, usize)>, n_features: usize, n_labels: usize, l2_strength: f64) -> Self {
        MaxentObjective {
            rows,
            n_features,
            n_labels,
            l2_strength,
        }
    }

    pub fn param_len(&self) -> usize {
        (self.n_features + 1) * self.n_labels
    }

    pub fn value_and_gradient(&self, params: &[f64]) -> (f64, Vec<f64>) {
        let l = self.n_labels;
        let nw = self.n_features * l;
        let (w, b) = params.split_at(nw);
        let mut grad = vec![0.0; params.len()];
        let mut value = 0.0;
        let mut scores = vec![0.0; l];
        for &(fv, y) in &self.rows {
            scores.copy_from_slice(b);
            for &j in fv.indices() {
                let row = &w[j as usize * l..(j as usize + 1) * l];
                scores.iter_mut().zip(row).for_each(|(s, wj)| *s += wj);
            }
            let m = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = scores.iter().map(|s| (s - m).exp()).sum();
            let lse = m + z.ln();
            value += lse - scores[y];
            for k in 0..l {
                let g = (scores[k] - lse).exp() - if k == y { 1.0 } else { 0.0 };
                grad[nw + k] += g;
                for &j in fv.indices() {
                    grad[j as usize * l + k] += g;
                }
            }
        }
        let inv = 1.0 / self.l2_strength;
        value += 0.5 * inv * w.iter().map(|x| x * x).sum::<f64>();
        grad[..nw].iter_mut().zip(w).for_each(|(g, x)| *g += inv * x);
        (value, grad)
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

struct LbfgsOutcome {
    params: Vec<f64>,
    value: f64,
    grad_norm: f64,
    iterations: usize,
    converged: bool,
}

/// Limited-memory BFGS with backtracking Armijo line search. Stops when the
/// gradient norm drops to `tol`.
fn lbfgs<F>(f: F, x0: Vec<f64>, max_iter: usize, tol: f64) -> LbfgsOutcome
where
    F: Fn(&[f64]) -> (f64, Vec<f64>),
{
    const MEMORY: usize = 10;
    const ARMIJO: f64 = 1e-4;
    let mut x = x0;
    let (mut fx, mut g) = f(&x);
    let mut hist: Vec<(Vec<f64>, Vec<f64>, f64)> = Vec::new();
    let mut iterations = 0;
    while iterations < max_iter {
        let gn = norm(&g);
        if gn <= tol {
            return LbfgsOutcome {
                params: x,
                value: fx,
                grad_norm: gn,
                iterations,
                converged: true,
            };
        }
        // two-loop recursion
        let mut q = g.clone();
        let mut alphas = Vec::with_capacity(hist.len());
        for (s, y, rho) in hist.iter().rev() {
            let a = rho * dot(s, &q);
            q.iter_mut().zip(y).for_each(|(qi, yi)| *qi -= a * yi);
            alphas.push(a);
        }
        let gamma = match hist.last() {
            Some((s, y, _)) => dot(s, y) / dot(y, y),
            None => 1.0 / gn.max(1.0),
        };
        q.iter_mut().for_each(|v| *v *= gamma);
        for ((s, y, rho), a) in hist.iter().zip(alphas.into_iter().rev()) {
            let beta = rho * dot(y, &q);
            q.iter_mut().zip(s).for_each(|(qi, si)| *qi += (a - beta) * si);
        }
        let mut dir: Vec<f64> = q.into_iter().map(|v| -v).collect();
        let mut slope = dot(&g, &dir);
        if !(slope < 0.0) {
            // not a descent direction: restart from steepest descent
            hist.clear();
            dir = g.iter().map(|v| -v / gn.max(1.0)).collect();
            slope = dot(&g, &dir);
        }
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let xn: Vec<f64> = x.iter().zip(&dir).map(|(a, d)| a + step * d).collect();
            let (fn_, gn_) = f(&xn);
            if fn_ <= fx + ARMIJO * step * slope {
                accepted = Some((xn, fn_, gn_));
                break;
            }
            step *= 0.5;
        }
        iterations += 1;
        let Some((xn, fn_, gn_)) = accepted else {
            break;
        };
        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gn_.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * norm(&s) * norm(&y) {
            if hist.len() == MEMORY {
                hist.remove(0);
            }
            hist.push((s, y, 1.0 / sy));
        }
        x = xn;
        fx = fn_;
        g = gn_;
    }
    let grad_norm = norm(&g);
    LbfgsOutcome {
        params: x,
        value: fx,
        grad_norm,
        iterations,
        converged: grad_norm <= tol,
    }
}

fn common_metadata(config: &TrainConfig, n: usize) -> BTreeMap<String, String> {
    let mut m = BTreeMap::new();
    m.insert("examples".into(), n.to_string());
    m.insert("max_iter".into(), config.max_iter.to_string());
    m.insert("tol".into(), format!("{:?}", config.tol));
    m.insert("seed".into(), config.seed.to_string());
    m
}

pub fn train_maxent(set: &TrainingSet, config: &TrainConfig) -> Result<LinearModel, ClassifierError> {
    config.validate()?;
    let labels = set.check()?;
    let ids = set.label_ids(&labels);
    let rows = set.examples.iter().zip(ids).map(|(e, y)| (&e.features, y)).collect();
    let objective = MaxentObjective::new(rows, set.dictionary.len(), labels.len(), config.l2_strength);
    let x0 = vec![0.0; objective.param_len()];
    let out = lbfgs(|p| objective.value_and_gradient(p), x0, config.max_iter, config.tol);

    let nw = set.dictionary.len() * labels.len();
    let mut params = out.params;
    let biases = params.split_off(nw);
    let mut metadata = common_metadata(config, set.examples.len());
    metadata.insert("l2_strength".into(), format!("{:?}", config.l2_strength));
    metadata.insert(
        "penalty".into(),
        "sum_nll+||W||^2/(2*l2_strength),bias_unpenalised".into(),
    );
    metadata.insert("iterations".into(), out.iterations.to_string());
    metadata.insert("converged".into(), out.converged.to_string());
    metadata.insert("objective".into(), format!("{:?}", out.value));
    metadata.insert("gradient_norm".into(), format!("{:?}", out.grad_norm));
    LinearModel::from_parts(
        ClassifierKind::Maxent,
        labels,
        params,
        biases,
        set.dictionary.clone(),
        metadata,
    )
}

/// One binary hinge-loss problem: `y_i` in {-1, +1}.
struct BinarySvm<'a> {
    rows: &'a [&'a FeatureVector],
    y: Vec<f64>,
    c: f64,
    n_features: usize,
    tol: f64,
    max_passes: usize,
}

struct BinarySolution {
    w: Vec<f64>,
    b: f64,
    passes: usize,
}

impl BinarySvm<'_> {
    fn margin(&self, w: &[f64], i: usize) -> f64 {
        self.rows[i].indices().iter().map(|&j| w[j as usize]).sum()
    }

    /// Dual coordinate descent at fixed bias `b`, warm-started from
    /// `alpha`/`w`. Returns the number of passes.
    fn solve_fixed_bias(&self, b: f64, alpha: &mut [f64], w: &mut [f64], rng: &mut ChaCha8Rng) -> usize {
        let n = self.rows.len();
        let mut order: Vec<usize> = (0..n).collect();
        for pass in 1..=self.max_passes {
            order.shuffle(rng);
            let (mut pg_max, mut pg_min) = (f64::NEG_INFINITY, f64::INFINITY);
            for &i in &order {
                let yi = self.y[i];
                let g = yi * (self.margin(w, i) + b) - 1.0;
                let a = alpha[i];
                let pg = if a <= 0.0 {
                    g.min(0.0)
                } else if a >= self.c {
                    g.max(0.0)
                } else {
                    g
                };
                pg_max = pg_max.max(pg);
                pg_min = pg_min.min(pg);
                if pg == 0.0 {
                    continue;
                }
                let qii = self.rows[i].len() as f64;
                let new = if qii > 0.0 {
                    (a - g / qii).clamp(0.0, self.c)
                } else if g < 0.0 {
                    self.c
                } else {
                    0.0
                };
                let delta = (new - a) * yi;
                if delta != 0.0 {
                    for &j in self.rows[i].indices() {
                        w[j as usize] += delta;
                    }
                    alpha[i] = new;
                }
            }
            if pg_max - pg_min <= self.tol {
                return pass;
            }
        }
        self.max_passes
    }

    fn solve(&self, rng: &mut ChaCha8Rng) -> BinarySolution {
        let n = self.rows.len();
        let mut alpha = vec![0.0; n];
        let mut w = vec![0.0; self.n_features];
        let mut passes = 0;
        // the derivative of min_w P(w, b) in b is -sum(alpha_i y_i), which is
        // non-decreasing in b; bisect for its zero
        let mut balance = |b: f64, alpha: &mut Vec<f64>, w: &mut Vec<f64>, passes: &mut usize| {
            *passes += self.solve_fixed_bias(b, alpha, w, rng);
            alpha.iter().zip(&self.y).map(|(a, y)| a * y).sum::<f64>()
        };
        let mut lo = -1.0;
        while balance(lo, &mut alpha, &mut w, &mut passes) < 0.0 {
            lo *= 2.0;
        }
        let mut hi = 1.0;
        while balance(hi, &mut alpha, &mut w, &mut passes) > 0.0 {
            hi *= 2.0;
        }
        let mut b = 0.5 * (lo + hi);
        for _ in 0..100 {
            if hi - lo <= 1e-7 * (1.0 + b.abs()) {
                break;
            }
            let h = balance(b, &mut alpha, &mut w, &mut passes);
            if h > 0.0 {
                lo = b;
            } else if h < 0.0 {
                hi = b;
            } else {
                break;
            }
            b = 0.5 * (lo + hi);
        }
        balance(b, &mut alpha, &mut w, &mut passes);
        BinarySolution { w, b, passes }
    }
}

pub fn train_svm(set: &TrainingSet, config: &TrainConfig) -> Result<LinearModel, ClassifierError> {
    config.validate()?;
    let labels = set.check()?;
    let ids = set.label_ids(&labels);
    let rows: Vec<&FeatureVector> = set.examples.iter().map(|e| &e.features).collect();
    let n_features = set.dictionary.len();
    let solutions: Vec<BinarySolution> = (0..labels.len())
        .into_par_iter()
        .map(|l| {
            let problem = BinarySvm {
                rows: &rows,
                y: ids.iter().map(|&y| if y == l { 1.0 } else { -1.0 }).collect(),
                c: config.svm_c,
                n_features,
                tol: config.tol,
                max_passes: config.max_iter,
            };
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ (l as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
            problem.solve(&mut rng)
        })
        .collect();

    let nl = labels.len();
    let mut weights = vec![0.0; n_features * nl];
    let mut biases = Vec::with_capacity(nl);
    let mut passes = 0;
    for (l, sol) in solutions.iter().enumerate() {
        for j in 0..n_features {
            weights[j * nl + l] = sol.w[j];
        }
        biases.push(sol.b);
        passes += sol.passes;
    }
    let mut metadata = common_metadata(config, set.examples.len());
    metadata.insert("svm_c".into(), format!("{:?}", config.svm_c));
    metadata.insert("loss".into(), "hinge,one-vs-rest,bias_unpenalised".into());
    metadata.insert("passes".into(), passes.to_string());
    LinearModel::from_parts(ClassifierKind::Svm, labels, weights, biases, set.dictionary.clone(), metadata)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dict(n: usize) -> FeatureDictionary {
        FeatureDictionary::from_names((0..n).map(|i| format!("f{i}")))
    }

    fn ex(idx: &[u32], label: &str) -> Example {
        Example {
            features: FeatureVector::from_indices(idx.iter().copied()),
            label: label.to_string(),
        }
    }

    fn toy() -> TrainingSet {
        TrainingSet {
            dictionary: dict(4),
            examples: vec![
                ex(&[0, 3], "Arg0"),
                ex(&[0], "Arg0"),
                ex(&[1, 3], "Arg1"),
                ex(&[1], "Arg1"),
                ex(&[2], "NULL"),
                ex(&[2, 3], "NULL"),
            ],
        }
    }

    #[test]
    fn feature_vector_sorted_unique() {
        let v = FeatureVector::from_indices([5, 1, 5, 3]);
        assert_eq!(v.indices(), [1, 3, 5]);
    }

    #[test]
    fn label_order_is_canonical() {
        for kind in [ClassifierKind::Maxent, ClassifierKind::Svm] {
            let m = train(&toy(), &TrainConfig { kind, ..TrainConfig::default() }).unwrap();
            assert_eq!(m.labels(), ["NULL", "Arg0", "Arg1"]);
        }
    }

    #[test]
    fn fits_toy_data() {
        for kind in [ClassifierKind::Maxent, ClassifierKind::Svm] {
            let set = toy();
            let m = train(&set, &TrainConfig { kind, ..TrainConfig::default() }).unwrap();
            for e in &set.examples {
                assert_eq!(m.predict(&e.features).label, e.label, "{kind}");
            }
        }
    }

    #[test]
    fn training_errors() {
        let empty = TrainingSet::default();
        assert_eq!(train_maxent(&empty, &TrainConfig::default()), Err(ClassifierError::EmptyData));
        let single = TrainingSet {
            dictionary: dict(1),
            examples: vec![ex(&[0], "Arg0"), ex(&[], "Arg0")],
        };
        assert_eq!(
            train_svm(&single, &TrainConfig::default()),
            Err(ClassifierError::SingleLabelData("Arg0".into()))
        );
        let out = TrainingSet {
            dictionary: dict(1),
            examples: vec![ex(&[4], "a"), ex(&[], "b")],
        };
        assert!(matches!(
            train_svm(&out, &TrainConfig::default()),
            Err(ClassifierError::FeatureOutOfRange { index: 4, size: 1 })
        ));
        let bad = TrainConfig {
            l2_strength: 0.0,
            ..TrainConfig::default()
        };
        assert!(matches!(train_maxent(&toy(), &bad), Err(ClassifierError::InvalidConfig(_))));
    }

    #[test]
    fn featureless_balanced_data_is_uniform() {
        let set = TrainingSet {
            dictionary: dict(0),
            examples: ["a", "b", "c", "a", "b", "c"].iter().map(|l| ex(&[], l)).collect(),
        };
        let m = train_maxent(&set, &TrainConfig { kind: ClassifierKind::Maxent, ..TrainConfig::default() }).unwrap();
        for p in m.probabilities(&FeatureVector::default()) {
            assert!((p - 1.0 / 3.0).abs() < 1e-6);
        }
    }

    #[test]
    fn predict_edge_cases() {
        let mut set = toy();
        set.dictionary = dict(5);
        let m = train_maxent(&set, &TrainConfig::default()).unwrap();
        // empty vector: argmax of the biases
        let p = m.predict(&FeatureVector::default());
        let best = m
            .biases()
            .iter()
            .enumerate()
            .fold(0, |b, (i, v)| if *v > m.biases()[b] { i } else { b });
        assert_eq!(p.label, m.labels()[best]);
        // index 4 never fires in training, so it has zero weight
        let a = m.scores(&FeatureVector::from_indices([0]));
        let b = m.scores(&FeatureVector::from_indices([0, 4]));
        assert_eq!(a, b);
        // indices past the dictionary are ignored
        let c = m.scores(&FeatureVector::from_indices([0, 99]));
        assert_eq!(a, c);
    }

    #[test]
    fn ties_go_to_first_label() {
        let m = LinearModel::from_parts(
            ClassifierKind::Svm,
            vec!["NULL".into(), "Arg0".into()],
            vec![0.0, 0.0],
            vec![0.5, 0.5],
            dict(1),
            BTreeMap::new(),
        )
        .unwrap();
        assert_eq!(m.predict(&FeatureVector::default()).label, "NULL");
    }

    #[test]
    fn model_text_round_trip() {
        for kind in [ClassifierKind::Maxent, ClassifierKind::Svm] {
            let m = train(&toy(), &TrainConfig { kind, ..TrainConfig::default() }).unwrap();
            let text = m.to_text();
            let back = LinearModel::from_text(&text).unwrap();
            assert_eq!(back, m);
            assert_eq!(back.to_text(), text);
        }
        let zero = LinearModel::constant(ClassifierKind::Svm, "NULL", dict(3));
        assert_eq!(LinearModel::from_text(&zero.to_text()).unwrap(), zero);
    }

    #[test]
    fn corrupt_and_version_errors() {
        let m = train(&toy(), &TrainConfig::default()).unwrap();
        let text = m.to_text();
        for cut in [FORMAT_HEADER.len() + 5, text.len() / 2, text.len() - 4] {
            assert!(
                matches!(LinearModel::from_text(&text[..cut]), Err(ClassifierError::CorruptModel(_))),
                "cut at {cut}"
            );
        }
        assert!(matches!(
            LinearModel::from_text(&text.replacen("v1", "v2", 1)),
            Err(ClassifierError::VersionMismatch(_))
        ));
    }

    #[test]
    fn deterministic_models() {
        for kind in [ClassifierKind::Maxent, ClassifierKind::Svm] {
            let cfg = TrainConfig { kind, seed: 9, ..TrainConfig::default() };
            let a = train(&toy(), &cfg).unwrap().to_text();
            let b = train(&toy(), &cfg).unwrap().to_text();
            assert_eq!(a, b);
        }
    }
}
