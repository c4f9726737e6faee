//! Feature templates over (candidate, predicate, tree) triples, the named
//! feature-set presets `phi0`..`phi16`, and the string-to-index dictionary.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifiers::FeatureVector;
use crate::clustering::ClusterModel;
use crate::treebank::{Constituent, NodePath, Tree};

/// Value of the function-tag template when the node has no tag.
pub const NO_TAG: &str = "∅";
const HEAD_MARKER: &str = "H";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FeatureError {
    #[error("candidate node and predicate node are the same node")]
    SameNode,
    #[error("predicate node is the root")]
    PredicateIsRoot,
    #[error("feature set uses cluster templates but no cluster model was given")]
    MissingClusterModel,
    #[error("unknown feature set or template {0:?}")]
    UnknownFeatureSet(String),
    #[error("node {0} is not in the tree")]
    NodeNotInTree(NodePath),
}

macro_rules! templates {
    ($($variant:ident => $name:literal,)*) => {
        /// Feature templates, declared in canonical extraction order.
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        pub enum Template {
            $($variant,)*
        }

        impl Template {
            pub const ALL: &'static [Template] = &[$(Template::$variant,)*];

            pub fn name(self) -> &'static str {
                match self {
                    $(Template::$variant => $name,)*
                }
            }
        }

        impl FromStr for Template {
            type Err = FeatureError;

            fn from_str(s: &str) -> Result<Self, Self::Err> {
                match s {
                    $($name => Ok(Template::$variant),)*
                    _ => Err(FeatureError::UnknownFeatureSet(s.to_string())),
                }
            }
        }
    };
}

templates! {
    PhraseType => "PhraseType",
    Path => "Path",
    PartialPath => "PartialPath",
    Distance => "Distance",
    Position => "Position",
    Voice => "Voice",
    HeadWord => "HeadWord",
    HeadWordCluster => "HeadWordCluster",
    Subcat => "Subcat",
    FunctionTag => "FunctionTag",
    PredicateType => "PredicateType",
    Predicate => "Predicate",
    PredicateCluster => "PredicateCluster",
}

impl Template {
    pub fn needs_clusters(self) -> bool {
        matches!(self, Template::HeadWordCluster | Template::PredicateCluster)
    }
}

impl fmt::Display for Template {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct FeatureInstance {
    pub template: Template,
    pub value: String,
}

impl FeatureInstance {
    fn new(template: Template, value: impl Into<String>) -> Self {
        FeatureInstance {
            template,
            value: value.into(),
        }
    }

    /// `Template=value`, the form stored in feature dictionaries.
    pub fn render(&self) -> String {
        format!("{}={}", self.template.name(), self.value)
    }
}

impl fmt::Display for FeatureInstance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}={}", self.template.name(), self.value)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureSetConfig {
    pub name: String,
    pub templates: BTreeSet<Template>,
}

impl FeatureSetConfig {
    pub fn new(name: impl Into<String>, templates: impl IntoIterator<Item = Template>) -> Self {
        FeatureSetConfig {
            name: name.into(),
            templates: templates.into_iter().collect(),
        }
    }

    pub fn needs_clusters(&self) -> bool {
        self.templates.iter().any(|t| t.needs_clusters())
    }

    /// Resolves a preset name (`phi0`..`phi16`) or a comma-separated template
    /// list such as `PhraseType,Path,Position`.
    pub fn resolve(text: &str) -> Result<Self, FeatureError> {
        if let Some(p) = preset(text) {
            return Ok(p);
        }
        let templates = text
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(str::parse)
            .collect::<Result<BTreeSet<Template>, _>>()?;
        if templates.is_empty() {
            return Err(FeatureError::UnknownFeatureSet(text.to_string()));
        }
        Ok(FeatureSetConfig {
            name: text.to_string(),
            templates,
        })
    }

    pub fn template_list(&self) -> String {
        self.templates
            .iter()
            .map(|t| t.name())
            .collect::<Vec<_>>()
            .join(",")
    }
}

pub const PRESET_NAMES: [&str; 17] = [
    "phi0", "phi1", "phi2", "phi3", "phi4", "phi5", "phi6", "phi7", "phi8", "phi9", "phi10", "phi11",
    "phi12", "phi13", "phi14", "phi15", "phi16",
];

fn preset_set(name: &str) -> Option<BTreeSet<Template>> {
    use Template::*;
    let with = |base: &str, add: &[Template]| {
        let mut s = preset_set(base)?;
        s.extend(add.iter().copied());
        Some(s)
    };
    let swap = |base: &str, remove: Template, add: Option<Template>| {
        let mut s = preset_set(base)?;
        s.remove(&remove);
        s.extend(add);
        Some(s)
    };
    match name {
        "phi0" => Some([PhraseType, Path, Position, Voice, HeadWord, Subcat, Predicate].into()),
        "phi1" => with("phi0", &[FunctionTag]),
        "phi2" => with("phi0", &[PredicateType]),
        "phi3" => with("phi0", &[Distance]),
        "phi4" => with("phi0", &[FunctionTag, Distance]),
        "phi5" | "phi8" => swap("phi4", Predicate, Some(PredicateCluster)),
        "phi6" => swap("phi4", HeadWord, Some(HeadWordCluster)),
        "phi7" => swap("phi4", Path, Some(PartialPath)),
        "phi9" => swap("phi8", FunctionTag, None),
        "phi10" => swap("phi8", PredicateCluster, None),
        "phi11" => swap("phi8", HeadWord, None),
        "phi12" => swap("phi8", Path, None),
        "phi13" => swap("phi8", Position, None),
        "phi14" => swap("phi8", Voice, None),
        "phi15" => swap("phi8", Subcat, None),
        "phi16" => {
            let a = preset_set("phi10")?;
            let b = preset_set("phi15")?;
            Some(a.intersection(&b).copied().collect())
        }
        _ => None,
    }
}

pub fn preset(name: &str) -> Option<FeatureSetConfig> {
    preset_set(name).map(|templates| FeatureSetConfig {
        name: name.to_string(),
        templates,
    })
}

/// Settings for the templates that depend on lexical resources.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureOptions {
    /// Tokens marking passive voice when they precede the predicate in its
    /// clause.
    pub passive_markers: BTreeSet<String>,
    /// Categories that delimit a clause for voice detection.
    pub clause_categories: BTreeSet<String>,
}

impl Default for FeatureOptions {
    fn default() -> Self {
        FeatureOptions {
            passive_markers: ["bị", "được"].into_iter().map(String::from).collect(),
            clause_categories: ["S"].into_iter().map(String::from).collect(),
        }
    }
}

fn node<'t>(tree: &'t Tree, path: &NodePath) -> Result<&'t Tree, FeatureError> {
    tree.get(path)
        .ok_or_else(|| FeatureError::NodeNotInTree(path.clone()))
}

pub fn phrase_type(tree: &Tree, candidate: &Constituent) -> Result<FeatureInstance, FeatureError> {
    Ok(FeatureInstance::new(
        Template::PhraseType,
        node(tree, &candidate.node)?.category(),
    ))
}

/// Categories going up from `from` to the lowest common ancestor (inclusive),
/// then down to `to` (inclusive).
fn path_parts(tree: &Tree, from: &NodePath, to: &NodePath) -> Result<(Vec<String>, Vec<String>), FeatureError> {
    if from == to {
        return Err(FeatureError::SameNode);
    }
    node(tree, from)?;
    node(tree, to)?;
    let lca = from.common_ancestor(to);
    let up = from
        .ancestors_inclusive()
        .take(from.depth() - lca.depth() + 1)
        .map(|p| tree.get(&p).expect("ancestor exists").category().to_string())
        .collect();
    let mut down = Vec::new();
    let mut cur = lca.clone();
    for &i in &to.indices()[lca.depth()..] {
        cur = cur.child(i);
        down.push(tree.get(&cur).expect("descendant exists").category().to_string());
    }
    Ok((up, down))
}

fn render_path(up: &[String], down: &[String]) -> String {
    let mut s = up.join("↑");
    for cat in down {
        s.push('↓');
        s.push_str(cat);
    }
    s
}

pub fn parse_tree_path(tree: &Tree, candidate: &NodePath, predicate: &NodePath) -> Result<FeatureInstance, FeatureError> {
    let (up, down) = path_parts(tree, candidate, predicate)?;
    Ok(FeatureInstance::new(Template::Path, render_path(&up, &down)))
}

pub fn partial_path(tree: &Tree, candidate: &NodePath, predicate: &NodePath) -> Result<FeatureInstance, FeatureError> {
    let (up, _) = path_parts(tree, candidate, predicate)?;
    Ok(FeatureInstance::new(Template::PartialPath, up.join("↑")))
}

/// Number of edges on the full parse tree path.
pub fn distance(tree: &Tree, candidate: &NodePath, predicate: &NodePath) -> Result<FeatureInstance, FeatureError> {
    let (up, down) = path_parts(tree, candidate, predicate)?;
    let edges = up.len() - 1 + down.len();
    Ok(FeatureInstance::new(Template::Distance, edges.to_string()))
}

/// `0` when the candidate ends at or before the predicate, `1` otherwise.
pub fn position(candidate: &Constituent, predicate_index: usize) -> FeatureInstance {
    let v = if candidate.span.end <= predicate_index { "0" } else { "1" };
    FeatureInstance::new(Template::Position, v)
}

/// `1` for active, `0` when a passive marker precedes the predicate inside
/// the smallest clause containing it.
pub fn voice(tree: &Tree, predicate: &NodePath, opts: &FeatureOptions) -> Result<FeatureInstance, FeatureError> {
    let pred_index = node(tree, predicate)?.span().start;
    let clause = predicate
        .ancestors_inclusive()
        .skip(1)
        .map(|p| tree.get(&p).expect("ancestor exists"))
        .find(|n| opts.clause_categories.contains(n.category()))
        .unwrap_or(tree);
    let tokens = clause.tokens();
    let start = clause.span().start;
    let passive = tokens[..pred_index.saturating_sub(start)]
        .iter()
        .any(|t| opts.passive_markers.contains(&t.to_lowercase()));
    Ok(FeatureInstance::new(Template::Voice, if passive { "0" } else { "1" }))
}

/// First word of the candidate.
pub fn head_word(tree: &Tree, candidate: &Constituent) -> Result<FeatureInstance, FeatureError> {
    let n = node(tree, &candidate.node)?;
    let first = n.tokens().first().copied().unwrap_or_default().to_string();
    Ok(FeatureInstance::new(Template::HeadWord, first))
}

/// The production rooted at the predicate's parent, e.g. `VP(V,NP)`.
pub fn subcategorization(tree: &Tree, predicate: &NodePath) -> Result<FeatureInstance, FeatureError> {
    node(tree, predicate)?;
    let parent = predicate.parent().ok_or(FeatureError::PredicateIsRoot)?;
    let p = node(tree, &parent)?;
    let kids: Vec<&str> = p.children().iter().map(Tree::category).collect();
    Ok(FeatureInstance::new(
        Template::Subcat,
        format!("{}({})", p.category(), kids.join(",")),
    ))
}

/// First function tag of the candidate node other than the head marker.
pub fn function_tag(tree: &Tree, candidate: &Constituent) -> Result<FeatureInstance, FeatureError> {
    let n = node(tree, &candidate.node)?;
    let tag = n
        .label()
        .function_tags()
        .iter()
        .find(|t| *t != HEAD_MARKER)
        .map_or(NO_TAG, String::as_str);
    Ok(FeatureInstance::new(Template::FunctionTag, tag))
}

pub fn predicate_type(tree: &Tree, predicate: &NodePath) -> Result<FeatureInstance, FeatureError> {
    Ok(FeatureInstance::new(
        Template::PredicateType,
        node(tree, predicate)?.category(),
    ))
}

fn predicate_token<'t>(tree: &'t Tree, predicate: &NodePath) -> Result<&'t str, FeatureError> {
    let n = node(tree, predicate)?;
    Ok(n.tokens().first().copied().unwrap_or_default())
}

pub fn predicate(tree: &Tree, predicate: &NodePath) -> Result<FeatureInstance, FeatureError> {
    Ok(FeatureInstance::new(
        Template::Predicate,
        predicate_token(tree, predicate)?.to_lowercase(),
    ))
}

/// Cluster id of `word`. Multi-word tokens are looked up in their file form
/// (`hôm_qua`), falling back to the lowercased form.
pub fn cluster_id(word: &str, model: &ClusterModel) -> usize {
    let key = word.replace(' ', "_");
    model
        .get(&key)
        .or_else(|| model.get(&key.to_lowercase()))
        .unwrap_or(model.unknown_id())
}

pub fn word_cluster(template: Template, word: &str, model: &ClusterModel) -> FeatureInstance {
    FeatureInstance::new(template, cluster_id(word, model).to_string())
}

/// Everything needed to compute features for one candidate.
#[derive(Debug, Clone, Copy)]
pub struct FeatureContext<'a> {
    pub tree: &'a Tree,
    pub predicate: &'a NodePath,
    pub candidate: &'a Constituent,
}

/// One instance per template of `config`, in canonical template order.
pub fn extract_features(
    ctx: FeatureContext<'_>,
    config: &FeatureSetConfig,
    opts: &FeatureOptions,
    clusters: Option<&ClusterModel>,
) -> Result<Vec<FeatureInstance>, FeatureError> {
    if config.needs_clusters() && clusters.is_none() {
        return Err(FeatureError::MissingClusterModel);
    }
    let FeatureContext {
        tree,
        predicate: pred,
        candidate,
    } = ctx;
    let pred_index = node(tree, pred)?.span().start;
    config
        .templates
        .iter()
        .map(|&t| {
            Ok(match t {
                Template::PhraseType => phrase_type(tree, candidate)?,
                Template::Path => parse_tree_path(tree, &candidate.node, pred)?,
                Template::PartialPath => partial_path(tree, &candidate.node, pred)?,
                Template::Distance => distance(tree, &candidate.node, pred)?,
                Template::Position => position(candidate, pred_index),
                Template::Voice => voice(tree, pred, opts)?,
                Template::HeadWord => head_word(tree, candidate)?,
                Template::HeadWordCluster => {
                    let hw = head_word(tree, candidate)?.value;
                    word_cluster(t, &hw, clusters.expect("checked above"))
                }
                Template::Subcat => subcategorization(tree, pred)?,
                Template::FunctionTag => function_tag(tree, candidate)?,
                Template::PredicateType => predicate_type(tree, pred)?,
                Template::Predicate => predicate(tree, pred)?,
                Template::PredicateCluster => {
                    let tok = predicate_token(tree, pred)?;
                    word_cluster(t, tok, clusters.expect("checked above"))
                }
            })
        })
        .collect()
}

/// Dense string-to-index map for rendered features.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FeatureDictionary {
    names: Vec<String>,
    index: HashMap<String, u32>,
    frozen: bool,
}

impl FeatureDictionary {
    pub fn new() -> Self {
        Self::default()
    }

    /// A dictionary holding `names` at indices `0..n`, in order. Duplicates
    /// keep their first index.
    pub fn from_names<I, S>(names: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut d = FeatureDictionary::new();
        for n in names {
            d.insert(n.into());
        }
        d
    }

    fn insert(&mut self, name: String) -> u32 {
        if let Some(&i) = self.index.get(&name) {
            return i;
        }
        let i = self.names.len() as u32;
        self.index.insert(name.clone(), i);
        self.names.push(name);
        i
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    pub fn freeze(&mut self) {
        self.frozen = true;
    }

    pub fn frozen(mut self) -> Self {
        self.frozen = true;
        self
    }

    pub fn get(&self, name: &str) -> Option<u32> {
        self.index.get(name).copied()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    /// Binary vector of `instances`. Unseen features get fresh indices unless
    /// the dictionary is frozen, in which case they are dropped.
    pub fn vectorize(&mut self, instances: &[FeatureInstance]) -> FeatureVector {
        if self.frozen {
            return self.encode(instances);
        }
        FeatureVector::from_indices(instances.iter().map(|f| self.insert(f.render())))
    }

    /// Binary vector of `instances` using known features only.
    pub fn encode(&self, instances: &[FeatureInstance]) -> FeatureVector {
        FeatureVector::from_indices(instances.iter().filter_map(|f| self.get(&f.render())))
    }
}
