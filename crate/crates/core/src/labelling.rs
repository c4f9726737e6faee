//! Candidate generation, feature vectorisation and role assignment for whole
//! predicate instances.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use rayon::prelude::*;
use thiserror::Error;

use crate::classifiers::{train, ClassifierError, Example, LinearModel, TrainConfig, TrainingSet};
use crate::clustering::{ClusterError, ClusterModel};
use crate::corpus::{Argument, Corpus, PropInstance, Role};
use crate::extraction::{find_predicate_node, ExtractionError, Extractor};
use crate::features::{extract_features, FeatureContext, FeatureDictionary, FeatureError, FeatureInstance, FeatureOptions, FeatureSetConfig};
use crate::treebank::{PhrasalCategories, Sentence, Span};

const FORMAT_HEADER: &str = "srl-pipeline v1";

/// Label used by the identifier of the two-step strategy.
pub const ARG_LABEL: &str = "ARG";

#[derive(Debug, Error)]
pub enum LabellingError {
    #[error(transparent)]
    Extraction(#[from] ExtractionError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
    #[error(transparent)]
    Cluster(#[from] ClusterError),
    #[error("unknown sentence id {0:?}")]
    UnknownSentenceId(String),
    #[error("no training candidates in corpus")]
    EmptyCorpus,
    #[error("model predicted unknown role {0:?}")]
    UnknownRole(String),
    #[error("unsupported pipeline version: {0:?}")]
    VersionMismatch(String),
    #[error("corrupt pipeline: {0}")]
    CorruptPipeline(String),
    #[error("{0}")]
    Io(String),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum Strategy {
    #[default]
    OneStep,
    TwoStep,
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::OneStep => "one-step",
            Strategy::TwoStep => "two-step",
        })
    }
}

impl FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "one-step" | "onestep" => Ok(Strategy::OneStep),
            "two-step" | "twostep" => Ok(Strategy::TwoStep),
            _ => Err(format!("unknown strategy {s:?}")),
        }
    }
}

/// Everything needed to train a pipeline apart from the data.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub strategy: Strategy,
    pub features: FeatureSetConfig,
    pub extractor: Extractor,
    pub train: TrainConfig,
    pub options: FeatureOptions,
}

impl PipelineConfig {
    pub fn new(features: FeatureSetConfig) -> Self {
        PipelineConfig {
            strategy: Strategy::default(),
            features,
            extractor: Extractor::default(),
            train: TrainConfig::default(),
            options: FeatureOptions::default(),
        }
    }

    /// Key/value description of the configuration, in a stable order.
    pub fn echo(&self) -> Vec<(String, String)> {
        let t = &self.train;
        [
            ("strategy", self.strategy.to_string()),
            ("features", self.features.name.clone()),
            ("templates", self.features.template_list()),
            ("extractor", self.extractor.kind.to_string()),
            ("alg1_mode", self.extractor.mode.to_string()),
            ("classifier", t.kind.to_string()),
            ("l2_strength", format!("{:?}", t.l2_strength)),
            ("svm_c", format!("{:?}", t.svm_c)),
            ("max_iter", t.max_iter.to_string()),
            ("tol", format!("{:?}", t.tol)),
            ("seed", t.seed.to_string()),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect()
    }
}

/// The trained model(s). The variant fixes how many models exist.
#[derive(Debug, Clone, PartialEq)]
pub enum PipelineModels {
    OneStep(LinearModel),
    TwoStep {
        identifier: LinearModel,
        classifier: LinearModel,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SrlPipeline {
    pub config: PipelineConfig,
    pub models: PipelineModels,
    pub clusters: Option<Arc<ClusterModel>>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelledSentence {
    pub sentence_id: String,
    pub predicate_index: usize,
    pub predictions: Vec<(Span, Role)>,
}

impl LabelledSentence {
    pub fn to_prop(&self) -> PropInstance {
        PropInstance {
            sentence_id: self.sentence_id.clone(),
            predicate_index: self.predicate_index,
            arguments: self.predictions.iter().map(|&(span, role)| Argument { span, role }).collect(),
        }
    }

    /// The prediction in prop-file syntax.
    pub fn to_line(&self) -> String {
        self.to_prop().to_line()
    }
}

fn instance_features(
    sentence: &Sentence,
    predicate_index: usize,
    extractor: &Extractor,
    features: &FeatureSetConfig,
    options: &FeatureOptions,
    clusters: Option<&ClusterModel>,
) -> Result<Vec<(Span, Vec<FeatureInstance>)>, LabellingError> {
    let tree = &sentence.tree;
    let pred = find_predicate_node(tree, predicate_index)?;
    let set = extractor.extract(tree, &pred)?;
    set.candidates
        .iter()
        .map(|c| {
            let ctx = FeatureContext {
                tree,
                predicate: &pred,
                candidate: c,
            };
            Ok((c.span, extract_features(ctx, features, options, clusters)?))
        })
        .collect()
}

/// One row per extracted candidate, labelled with its gold role (or `NULL`),
/// vectorised with a dictionary grown in corpus order.
pub fn build_training_data(
    corpus: &Corpus,
    extractor: &Extractor,
    features: &FeatureSetConfig,
    options: &FeatureOptions,
    clusters: Option<&ClusterModel>,
) -> Result<TrainingSet, LabellingError> {
    let per_instance: Vec<Vec<(Span, Vec<FeatureInstance>)>> = corpus
        .instances
        .par_iter()
        .map(|inst| {
            let sentence = corpus
                .sentence(&inst.sentence_id)
                .ok_or_else(|| LabellingError::UnknownSentenceId(inst.sentence_id.clone()))?;
            instance_features(sentence, inst.predicate_index, extractor, features, options, clusters)
        })
        .collect::<Result<_, _>>()?;

    let mut dictionary = FeatureDictionary::new();
    let mut examples = Vec::new();
    for (inst, rows) in corpus.instances.iter().zip(per_instance) {
        for (span, feats) in rows {
            examples.push(Example {
                features: dictionary.vectorize(&feats),
                label: inst.gold_label_of(span).to_string(),
            });
        }
    }
    Ok(TrainingSet { dictionary, examples })
}

/// Trains a model, falling back to a constant predictor when the data
/// contain a single label.
fn train_or_constant(set: &TrainingSet, config: &TrainConfig) -> Result<LinearModel, ClassifierError> {
    match train(set, config) {
        Err(ClassifierError::SingleLabelData(label)) => {
            Ok(LinearModel::constant(config.kind, &label, set.dictionary.clone()))
        }
        other => other,
    }
}

pub fn train_pipeline(
    corpus: &Corpus,
    config: &PipelineConfig,
    clusters: Option<Arc<ClusterModel>>,
) -> Result<SrlPipeline, LabellingError> {
    let data = build_training_data(
        corpus,
        &config.extractor,
        &config.features,
        &config.options,
        clusters.as_deref(),
    )?;
    if data.examples.is_empty() {
        return Err(LabellingError::EmptyCorpus);
    }
    let null = Role::Null.as_str();
    let models = match config.strategy {
        Strategy::OneStep => PipelineModels::OneStep(train_or_constant(&data, &config.train)?),
        Strategy::TwoStep => {
            let ident = TrainingSet {
                dictionary: data.dictionary.clone(),
                examples: data
                    .examples
                    .iter()
                    .map(|e| Example {
                        features: e.features.clone(),
                        label: if e.label == null { null.to_string() } else { ARG_LABEL.to_string() },
                    })
                    .collect(),
            };
            let identifier = train_or_constant(&ident, &config.train)?;
            let args: Vec<Example> = data.examples.iter().filter(|e| e.label != null).cloned().collect();
            let classifier = if args.is_empty() {
                LinearModel::constant(config.train.kind, null, data.dictionary.clone())
            } else {
                let set = TrainingSet {
                    dictionary: data.dictionary.clone(),
                    examples: args,
                };
                train_or_constant(&set, &config.train)?
            };
            PipelineModels::TwoStep { identifier, classifier }
        }
    };
    Ok(SrlPipeline {
        config: config.clone(),
        models,
        clusters,
    })
}

impl SrlPipeline {
    fn dictionary(&self) -> &FeatureDictionary {
        match &self.models {
            PipelineModels::OneStep(m) => m.dictionary(),
            PipelineModels::TwoStep { identifier, .. } => identifier.dictionary(),
        }
    }

    fn classify(&self, feats: &[FeatureInstance]) -> Result<Option<Role>, LabellingError> {
        let fv = self.dictionary().encode(feats);
        let label = match &self.models {
            PipelineModels::OneStep(m) => m.predict(&fv).label,
            PipelineModels::TwoStep { identifier, classifier } => {
                if identifier.predict(&fv).label != ARG_LABEL {
                    return Ok(None);
                }
                classifier.predict(&fv).label
            }
        };
        let role: Role = label.parse().map_err(|_| LabellingError::UnknownRole(label.clone()))?;
        Ok(role.is_argument().then_some(role))
    }

    /// Labels every candidate of one predicate independently; candidates
    /// predicted `NULL` are dropped.
    pub fn label_sentence(&self, sentence: &Sentence, predicate_index: usize) -> Result<LabelledSentence, LabellingError> {
        let rows = instance_features(
            sentence,
            predicate_index,
            &self.config.extractor,
            &self.config.features,
            &self.config.options,
            self.clusters.as_deref(),
        )?;
        let mut predictions = Vec::new();
        for (span, feats) in rows {
            if let Some(role) = self.classify(&feats)? {
                predictions.push((span, role));
            }
        }
        Ok(LabelledSentence {
            sentence_id: sentence.id.clone(),
            predicate_index,
            predictions,
        })
    }

    /// Labels every instance of `corpus`, in corpus order.
    pub fn label_corpus(&self, corpus: &Corpus) -> Result<Vec<LabelledSentence>, LabellingError> {
        corpus
            .instances
            .par_iter()
            .map(|inst| {
                let sentence = corpus
                    .sentence(&inst.sentence_id)
                    .ok_or_else(|| LabellingError::UnknownSentenceId(inst.sentence_id.clone()))?;
                self.label_sentence(sentence, inst.predicate_index)
            })
            .collect()
    }

    pub fn to_text(&self) -> String {
        let c = &self.config;
        let mut s = format!("{FORMAT_HEADER}\n");
        s += &format!("strategy {}\n", c.strategy);
        s += &format!("features {} {}\n", c.features.name, c.features.template_list());
        s += &format!("extractor {} {}\n", c.extractor.kind, c.extractor.mode);
        s += &format!("phrasal {}\n", c.extractor.phrasal.iter().collect::<Vec<_>>().join(","));
        s += &format!("passive {}\n", c.options.passive_markers.iter().cloned().collect::<Vec<_>>().join(","));
        s += &format!("clauses {}\n", c.options.clause_categories.iter().cloned().collect::<Vec<_>>().join(","));
        let t = &c.train;
        s += &format!(
            "train {} {:?} {:?} {} {:?} {}\n",
            t.kind, t.l2_strength, t.svm_c, t.max_iter, t.tol, t.seed
        );
        let models: Vec<&LinearModel> = match &self.models {
            PipelineModels::OneStep(m) => vec![m],
            PipelineModels::TwoStep { identifier, classifier } => vec![identifier, classifier],
        };
        s += &format!("models {}\n", models.len());
        for m in models {
            s += &m.to_text();
        }
        match &self.clusters {
            Some(cm) => {
                s += "clusters 1\n";
                s += &cm.to_text();
            }
            None => s += "clusters 0\n",
        }
        s += "end\n";
        s
    }

    pub fn from_text(text: &str) -> Result<Self, LabellingError> {
        let corrupt = |m: String| LabellingError::CorruptPipeline(m);
        let mut lines = text.lines();
        let header = lines.next().unwrap_or_default();
        if header != FORMAT_HEADER {
            return Err(LabellingError::VersionMismatch(header.to_string()));
        }
        let mut field = |key: &str| -> Result<String, LabellingError> {
            let line = lines.next().ok_or_else(|| corrupt(format!("missing {key}")))?;
            line.strip_prefix(key)
                .and_then(|r| r.strip_prefix(' ').or(if r.is_empty() { Some("") } else { None }))
                .map(str::to_string)
                .ok_or_else(|| corrupt(format!("expected {key:?}, found {line:?}")))
        };
        let list = |s: &str| -> Vec<String> { s.split(',').filter(|x| !x.is_empty()).map(String::from).collect() };

        let strategy: Strategy = field("strategy")?.parse().map_err(corrupt)?;
        let feats = field("features")?;
        let (name, templates) = feats.split_once(' ').ok_or_else(|| corrupt("bad features line".into()))?;
        let templates = FeatureSetConfig::resolve(templates)?.templates;
        let features = FeatureSetConfig::new(name, templates);
        let ex = field("extractor")?;
        let (kind, mode) = ex.split_once(' ').ok_or_else(|| corrupt("bad extractor line".into()))?;
        let mut extractor = Extractor::new(kind.parse().map_err(corrupt)?, mode.parse().map_err(corrupt)?);
        extractor.phrasal = PhrasalCategories::new(list(&field("phrasal")?));
        let options = FeatureOptions {
            passive_markers: list(&field("passive")?).into_iter().collect(),
            clause_categories: list(&field("clauses")?).into_iter().collect(),
        };
        let tr = field("train")?;
        let parts: Vec<&str> = tr.split(' ').collect();
        let bad = |_| corrupt(format!("bad train line {tr:?}"));
        if parts.len() != 6 {
            return Err(corrupt(format!("bad train line {tr:?}")));
        }
        let train = TrainConfig {
            kind: parts[0].parse().map_err(corrupt)?,
            l2_strength: parts[1].parse().map_err(|_| bad(()))?,
            svm_c: parts[2].parse().map_err(|_| bad(()))?,
            max_iter: parts[3].parse().map_err(|_| bad(()))?,
            tol: parts[4].parse().map_err(|_| bad(()))?,
            seed: parts[5].parse().map_err(|_| bad(()))?,
        };
        let n_models: usize = field("models")?.parse().map_err(|_| corrupt("bad model count".into()))?;
        let mut models = Vec::new();
        for _ in 0..n_models {
            models.push(read_section(&mut lines, |t| LinearModel::from_text(t).map_err(Into::into))?);
        }
        let models = match (strategy, models.len()) {
            (Strategy::OneStep, 1) => PipelineModels::OneStep(models.pop().unwrap()),
            (Strategy::TwoStep, 2) => {
                let classifier = models.pop().unwrap();
                let identifier = models.pop().unwrap();
                PipelineModels::TwoStep { identifier, classifier }
            }
            _ => return Err(corrupt(format!("{strategy} pipeline with {n_models} models"))),
        };
        let clusters = match lines.next() {
            Some("clusters 0") => None,
            Some("clusters 1") => Some(Arc::new(read_section(&mut lines, |t| {
                ClusterModel::from_text(t).map_err(Into::into)
            })?)),
            other => return Err(corrupt(format!("expected clusters, found {other:?}"))),
        };
        if lines.next() != Some("end") {
            return Err(corrupt("missing end marker".into()));
        }
        let config = PipelineConfig {
            strategy,
            features,
            extractor,
            train,
            options,
        };
        Ok(SrlPipeline {
            config,
            models,
            clusters,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), LabellingError> {
        fs::write(path, self.to_text()).map_err(|e| LabellingError::Io(format!("{}: {e}", path.display())))
    }

    pub fn load(path: &Path) -> Result<Self, LabellingError> {
        let text = fs::read_to_string(path).map_err(|e| LabellingError::Io(format!("{}: {e}", path.display())))?;
        Self::from_text(&text)
    }
}

/// Collects an embedded section up to and including its `end` line and
/// parses it.
fn read_section<'a, T>(
    lines: &mut impl Iterator<Item = &'a str>,
    parse: impl Fn(&str) -> Result<T, LabellingError>,
) -> Result<T, LabellingError> {
    let mut buf = String::new();
    for line in lines.by_ref() {
        buf.push_str(line);
        buf.push('\n');
        if line == "end" {
            return parse(&buf);
        }
    }
    Err(LabellingError::CorruptPipeline("truncated section".into()))
}
