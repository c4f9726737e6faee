//! Scoring of labelled output and the experiment harness built on it.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::clustering::ClusterModel;
use crate::corpus::{Corpus, PropInstance, Role};
use crate::features::{preset, FeatureError};
use crate::labelling::{train_pipeline, LabelledSentence, LabellingError, PipelineConfig};
use crate::metrics::Prf;
use crate::treebank::Span;

#[derive(Debug, Error)]
pub enum EvaluationError {
    #[error("alignment error: {0}")]
    Alignment(String),
    #[error("{have} instances is too few for {k} folds")]
    TooFewInstances { have: usize, k: usize },
    #[error("fold count must be at least 2, got {0}")]
    InvalidFoldCount(usize),
    #[error("unknown feature set {0:?}")]
    UnknownFeatureSet(String),
    #[error("sample size {size} exceeds corpus of {len} instances")]
    SizeExceedsCorpus { size: usize, len: usize },
    #[error("sample sizes must be strictly increasing")]
    SizesNotIncreasing,
    #[error(transparent)]
    Labelling(#[from] LabellingError),
}

impl From<FeatureError> for EvaluationError {
    fn from(e: FeatureError) -> Self {
        EvaluationError::Labelling(e.into())
    }
}

fn scored_arguments(args: impl Iterator<Item = (Span, Role)>) -> Vec<(Span, Role)> {
    args.filter(|(_, r)| r.is_argument()).collect()
}

/// Labelled precision/recall/F1: a prediction counts iff its span and role
/// both match a gold argument not already matched. Predictions and gold are
/// paired by `(sentence id, predicate index)`.
pub fn score_labelled(pred: &[LabelledSentence], gold: &[PropInstance]) -> Result<Prf, EvaluationError> {
    let mut by_key: HashMap<(&str, usize), &PropInstance> = HashMap::new();
    for g in gold {
        if by_key.insert(g.key(), g).is_some() {
            return Err(EvaluationError::Alignment(format!(
                "duplicate gold instance {} {}",
                g.sentence_id, g.predicate_index
            )));
        }
    }
    if pred.len() != gold.len() {
        return Err(EvaluationError::Alignment(format!(
            "{} predicted instances for {} gold instances",
            pred.len(),
            gold.len()
        )));
    }
    let (mut matched, mut predicted, mut total) = (0, 0, 0);
    let mut seen = HashMap::new();
    for p in pred {
        let key = (p.sentence_id.as_str(), p.predicate_index);
        let g = by_key.get(&key).ok_or_else(|| {
            EvaluationError::Alignment(format!("no gold instance for {} {}", key.0, key.1))
        })?;
        if seen.insert(key, ()).is_some() {
            return Err(EvaluationError::Alignment(format!("duplicate prediction for {} {}", key.0, key.1)));
        }
        let mut remaining = scored_arguments(g.arguments.iter().map(|a| (a.span, a.role)));
        total += remaining.len();
        for item in scored_arguments(p.predictions.iter().copied()) {
            predicted += 1;
            if let Some(i) = remaining.iter().position(|x| *x == item) {
                remaining.swap_remove(i);
                matched += 1;
            }
        }
    }
    Ok(Prf::from_counts(matched, predicted, total))
}

/// Scores prop-format predictions against prop-format gold.
pub fn score_props(pred: &[PropInstance], gold: &[PropInstance]) -> Result<Prf, EvaluationError> {
    let pred: Vec<LabelledSentence> = pred
        .iter()
        .map(|p| LabelledSentence {
            sentence_id: p.sentence_id.clone(),
            predicate_index: p.predicate_index,
            predictions: p.arguments.iter().map(|a| (a.span, a.role)).collect(),
        })
        .collect();
    score_labelled(&pred, gold)
}

/// Arithmetic means of per-fold scores.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeanPrf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl MeanPrf {
    pub fn of(folds: &[Prf]) -> MeanPrf {
        let n = folds.len().max(1) as f64;
        MeanPrf {
            precision: folds.iter().map(|f| f.precision).sum::<f64>() / n,
            recall: folds.iter().map(|f| f.recall).sum::<f64>() / n,
            f1: folds.iter().map(|f| f.f1).sum::<f64>() / n,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CvReport {
    pub k: usize,
    pub seed: u64,
    pub config: Vec<(String, String)>,
    pub folds: Vec<Prf>,
    pub mean: MeanPrf,
}

/// Seeded permutation of `0..n` split into `k` contiguous folds whose sizes
/// differ by at most one. Each fold is returned sorted.
pub fn partition_folds(n: usize, k: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (base, extra) = (n / k, n % k);
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for f in 0..k {
        let size = base + usize::from(f < extra);
        let mut fold = order[start..start + size].to_vec();
        fold.sort_unstable();
        folds.push(fold);
        start += size;
    }
    folds
}

fn check_folds(n: usize, k: usize) -> Result<(), EvaluationError> {
    if k < 2 {
        return Err(EvaluationError::InvalidFoldCount(k));
    }
    if n < k {
        return Err(EvaluationError::TooFewInstances { have: n, k });
    }
    Ok(())
}

/// Scores one held-out fold after training on the rest.
fn run_fold(
    corpus: &Corpus,
    test: &[usize],
    config: &PipelineConfig,
    clusters: &Option<Arc<ClusterModel>>,
) -> Result<Prf, EvaluationError> {
    let mut held_out = vec![false; corpus.len()];
    test.iter().for_each(|&i| held_out[i] = true);
    let train_idx: Vec<usize> = (0..corpus.len()).filter(|&i| !held_out[i]).collect();
    let train = corpus.subset(&train_idx);
    let test = corpus.subset(test);
    let pipeline = train_pipeline(&train, config, clusters.clone())?;
    let labelled = pipeline.label_corpus(&test)?;
    score_labelled(&labelled, &test.instances)
}

/// k-fold cross-validation over prop instances. Folds run in parallel on the
/// current rayon pool; results keep fold order.
pub fn cross_validate(
    corpus: &Corpus,
    config: &PipelineConfig,
    clusters: Option<Arc<ClusterModel>>,
    k: usize,
    seed: u64,
) -> Result<CvReport, EvaluationError> {
    check_folds(corpus.len(), k)?;
    let folds = partition_folds(corpus.len(), k, seed);
    let scores: Vec<Prf> = folds
        .par_iter()
        .map(|test| run_fold(corpus, test, config, &clusters))
        .collect::<Result<_, _>>()?;
    let mut echo = config.echo();
    echo.push(("k".into(), k.to_string()));
    echo.push(("cv_seed".into(), seed.to_string()));
    echo.push(("clusters".into(), if clusters.is_some() { "yes" } else { "no" }.into()));
    echo.push(("instances".into(), corpus.len().to_string()));
    Ok(CvReport {
        k,
        seed,
        config: echo,
        mean: MeanPrf::of(&scores),
        folds: scores,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationRow {
    pub name: String,
    pub templates: String,
    pub report: CvReport,
}

/// Cross-validates each named preset with the same fold partition.
pub fn ablation_suite(
    corpus: &Corpus,
    names: &[String],
    base: &PipelineConfig,
    clusters: Option<Arc<ClusterModel>>,
    k: usize,
    seed: u64,
) -> Result<Vec<AblationRow>, EvaluationError> {
    let sets = names
        .iter()
        .map(|n| preset(n).ok_or_else(|| EvaluationError::UnknownFeatureSet(n.clone())))
        .collect::<Result<Vec<_>, _>>()?;
    sets.into_iter()
        .map(|features| {
            let config = PipelineConfig {
                features: features.clone(),
                ..base.clone()
            };
            Ok(AblationRow {
                name: features.name.clone(),
                templates: features.template_list(),
                report: cross_validate(corpus, &config, clusters.clone(), k, seed)?,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurvePoint {
    pub size: usize,
    pub mean: MeanPrf,
}

/// The instance indices used at each size: nested prefixes of one seeded
/// permutation, each sorted back into corpus order.
pub fn nested_samples(n: usize, sizes: &[usize], seed: u64) -> Result<Vec<Vec<usize>>, EvaluationError> {
    if sizes.windows(2).any(|w| w[0] >= w[1]) {
        return Err(EvaluationError::SizesNotIncreasing);
    }
    if let Some(&size) = sizes.iter().find(|&&s| s > n) {
        return Err(EvaluationError::SizeExceedsCorpus { size, len: n });
    }
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    order.shuffle(&mut rng);
    Ok(sizes
        .iter()
        .map(|&s| {
            let mut sample = order[..s].to_vec();
            sample.sort_unstable();
            sample
        })
        .collect())
}

pub fn learning_curve(
    corpus: &Corpus,
    sizes: &[usize],
    config: &PipelineConfig,
    clusters: Option<Arc<ClusterModel>>,
    k: usize,
    seed: u64,
) -> Result<Vec<CurvePoint>, EvaluationError> {
    let samples = nested_samples(corpus.len(), sizes, seed)?;
    samples
        .into_iter()
        .map(|sample| {
            let sub = corpus.subset(&sample);
            let report = cross_validate(&sub, config, clusters.clone(), k, seed)?;
            Ok(CurvePoint {
                size: sample.len(),
                mean: report.mean,
            })
        })
        .collect()
}

fn pct(x: f64) -> String {
    format!("{:.2}", 100.0 * x)
}

fn config_block(out: &mut String, config: &[(String, String)]) {
    for (k, v) in config {
        writeln!(out, "# {k}={v}").unwrap();
    }
}

impl CvReport {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        config_block(&mut s, &self.config);
        writeln!(s, "{:<6} {:>8} {:>8} {:>8} {:>8} {:>9} {:>6}", "fold", "P", "R", "F1", "matched", "predicted", "gold")
            .unwrap();
        for (i, f) in self.folds.iter().enumerate() {
            writeln!(
                s,
                "{:<6} {:>8} {:>8} {:>8} {:>8} {:>9} {:>6}",
                i + 1,
                pct(f.precision),
                pct(f.recall),
                pct(f.f1),
                f.matched,
                f.predicted,
                f.gold
            )
            .unwrap();
        }
        writeln!(
            s,
            "{:<6} {:>8} {:>8} {:>8}",
            "mean",
            pct(self.mean.precision),
            pct(self.mean.recall),
            pct(self.mean.f1)
        )
        .unwrap();
        s
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&json_report(self)).expect("report serialises")
    }
}

fn json_report(r: &CvReport) -> serde_json::Value {
    let config: BTreeMap<&str, &str> = r.config.iter().map(|(k, v)| (k.as_str(), v.as_str())).collect();
    serde_json::json!({
        "config": config,
        "k": r.k,
        "seed": r.seed,
        "folds": r.folds,
        "mean": r.mean,
    })
}

pub fn ablation_text(rows: &[AblationRow]) -> String {
    let mut s = String::new();
    if let Some(first) = rows.first() {
        let shared: Vec<(String, String)> = first
            .report
            .config
            .iter()
            .filter(|(k, _)| k != "features" && k != "templates")
            .cloned()
            .collect();
        config_block(&mut s, &shared);
    }
    writeln!(s, "{:<8} {:>8} {:>8} {:>8}  templates", "set", "P", "R", "F1").unwrap();
    for r in rows {
        let m = &r.report.mean;
        writeln!(
            s,
            "{:<8} {:>8} {:>8} {:>8}  {}",
            r.name,
            pct(m.precision),
            pct(m.recall),
            pct(m.f1),
            r.templates
        )
        .unwrap();
    }
    s
}

pub fn ablation_json(rows: &[AblationRow]) -> String {
    let v: Vec<serde_json::Value> = rows
        .iter()
        .map(|r| serde_json::json!({ "name": r.name, "templates": r.templates, "report": json_report(&r.report) }))
        .collect();
    serde_json::to_string_pretty(&v).expect("report serialises")
}

/// Two-column `size f1` data preceded by the configuration as comments.
pub fn curve_text(points: &[CurvePoint], config: &[(String, String)]) -> String {
    let mut s = String::new();
    config_block(&mut s, config);
    writeln!(s, "# size f1").unwrap();
    for p in points {
        writeln!(s, "{} {:.6}", p.size, p.mean.f1).unwrap();
    }
    s
}

pub fn curve_json(points: &[CurvePoint], config: &[(String, String)]) -> String {
    let config: BTreeMap<&str, &str> = config.iter().map(|(k, v)| (k.as_str(), v.as_str())).collect();
    serde_json::to_string_pretty(&serde_json::json!({ "config": config, "points": points })).expect("report serialises")
}
