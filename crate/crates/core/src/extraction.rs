//! Candidate argument extraction for a predicate.
//!
//! Two extractors are provided. The sibling walk ([`extract_constituents`])
//! climbs from the predicate to the root and collects the sisters met on the
//! way, splitting a sister into its children when they form a run of
//! same-category phrases with pairwise-distinct leading function tags. The
//! baseline ([`node_mapping_candidates`]) maps every tree node not dominating
//! the predicate to a candidate.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::PropInstance;
use crate::metrics::Prf;
use crate::treebank::{collect_words, Constituent, NodePath, PhrasalCategories, Span, Tree, TreeError};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ExtractionError {
    #[error("predicate index {index} out of range for {len} terminals")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("node {0} is not in the tree")]
    NodeNotInTree(NodePath),
    #[error("{candidate_sets} candidate sets for {gold} gold instances")]
    LengthMismatch { candidate_sets: usize, gold: usize },
}

impl From<TreeError> for ExtractionError {
    fn from(e: TreeError) -> Self {
        match e {
            TreeError::NodeNotInTree(p) => ExtractionError::NodeNotInTree(p),
            other => unreachable!("unexpected tree error during extraction: {other}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CandidateSet {
    pub predicate_node: NodePath,
    pub candidates: Vec<Constituent>,
}

impl CandidateSet {
    pub fn spans(&self) -> impl Iterator<Item = Span> + '_ {
        self.candidates.iter().map(|c| c.span)
    }
}

/// Behaviour of the sibling walk when a sister passes the phrase test but its
/// children fail the same-category/distinct-tag check.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum Alg1Mode {
    /// Collect nothing for that sister.
    #[default]
    Strict,
    /// Collect the sister whole.
    Repaired,
}

impl fmt::Display for Alg1Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Alg1Mode::Strict => "strict",
            Alg1Mode::Repaired => "repaired",
        })
    }
}

impl FromStr for Alg1Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "strict" | "strict-alg1" => Ok(Alg1Mode::Strict),
            "repaired" => Ok(Alg1Mode::Repaired),
            _ => Err(format!("unknown extraction mode {s:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum ExtractorKind {
    #[default]
    Alg1,
    NodeMapping,
}

impl fmt::Display for ExtractorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ExtractorKind::Alg1 => "alg1",
            ExtractorKind::NodeMapping => "node-mapping",
        })
    }
}

impl FromStr for ExtractorKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "alg1" => Ok(ExtractorKind::Alg1),
            "node-mapping" | "nodemapping" => Ok(ExtractorKind::NodeMapping),
            _ => Err(format!("unknown extractor {s:?}")),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Extractor {
    pub kind: ExtractorKind,
    pub mode: Alg1Mode,
    pub phrasal: PhrasalCategories,
}

impl Extractor {
    pub fn new(kind: ExtractorKind, mode: Alg1Mode) -> Self {
        Extractor {
            kind,
            mode,
            phrasal: PhrasalCategories::default(),
        }
    }

    pub fn extract(&self, tree: &Tree, predicate: &NodePath) -> Result<CandidateSet, ExtractionError> {
        match self.kind {
            ExtractorKind::Alg1 => extract_constituents(tree, predicate, &self.phrasal, self.mode),
            ExtractorKind::NodeMapping => node_mapping_candidates(tree, predicate),
        }
    }
}

/// The deepest node spanning exactly the predicate terminal, i.e. the
/// part-of-speech node carrying its token.
pub fn find_predicate_node(tree: &Tree, index: usize) -> Result<NodePath, ExtractionError> {
    let len = tree.span().end;
    if index >= len {
        return Err(ExtractionError::IndexOutOfRange { index, len });
    }
    let mut path = NodePath::root();
    let mut node = tree;
    while let Some((i, child)) = node
        .children()
        .iter()
        .enumerate()
        .find(|(_, c)| c.span().contains_index(index))
    {
        path = path.child(i);
        node = child;
    }
    Ok(path)
}

struct Collector<'t> {
    tree: &'t Tree,
    seen: HashSet<Span>,
    out: Vec<Constituent>,
}

impl Collector<'_> {
    fn collect(&mut self, path: &NodePath) -> Result<(), ExtractionError> {
        let c = collect_words(self.tree, path)?;
        if self.seen.insert(c.span) {
            self.out.push(c);
        }
        Ok(())
    }
}

fn same_first_tag(a: &Tree, b: &Tree) -> bool {
    a.label().first_function_tag() == b.label().first_function_tag()
}

/// True when the children of `node` are all of the first child's category
/// and none repeats the first child's leading function tag.
fn splits_into_children(node: &Tree) -> bool {
    let children = node.children();
    let first = &children[0];
    for child in &children[1..] {
        if child.category() != first.category() {
            return false;
        }
        if same_first_tag(child, first) {
            return false;
        }
    }
    true
}

/// Sibling-walk constituent extraction. Candidates come out in discovery
/// order: nearest level first, left to right within a level.
pub fn extract_constituents(
    tree: &Tree,
    predicate: &NodePath,
    phrasal: &PhrasalCategories,
    mode: Alg1Mode,
) -> Result<CandidateSet, ExtractionError> {
    tree.node(predicate)?;
    let mut col = Collector {
        tree,
        seen: HashSet::new(),
        out: Vec::new(),
    };
    let mut current = predicate.clone();
    while let Some(parent) = current.parent() {
        for (path, sister) in tree.siblings(&current)? {
            let kids = sister.children();
            if kids.len() > 1 && phrasal.is_phrase(&kids[0]) {
                if splits_into_children(sister) {
                    for i in 0..kids.len() {
                        col.collect(&path.child(i))?;
                    }
                } else if mode == Alg1Mode::Repaired {
                    col.collect(&path)?;
                }
            } else {
                col.collect(&path)?;
            }
        }
        current = parent;
    }
    Ok(CandidateSet {
        predicate_node: predicate.clone(),
        candidates: col.out,
    })
}

/// Every non-root node whose span does not contain the predicate terminal,
/// deduplicated by span (the shallowest node wins).
pub fn node_mapping_candidates(tree: &Tree, predicate: &NodePath) -> Result<CandidateSet, ExtractionError> {
    let pred_node = tree.node(predicate)?;
    let pred_index = pred_node.span().start;
    let mut col = Collector {
        tree,
        seen: HashSet::new(),
        out: Vec::new(),
    };
    for (path, node) in tree.preorder() {
        if path.is_root() || node.span().contains_index(pred_index) {
            continue;
        }
        col.collect(&path)?;
    }
    Ok(CandidateSet {
        predicate_node: predicate.clone(),
        candidates: col.out,
    })
}

/// Unlabelled exact-span scoring of candidate sets against gold arguments,
/// pooled over all instances.
pub fn score_extraction(sets: &[CandidateSet], gold: &[PropInstance]) -> Result<Prf, ExtractionError> {
    if sets.len() != gold.len() {
        return Err(ExtractionError::LengthMismatch {
            candidate_sets: sets.len(),
            gold: gold.len(),
        });
    }
    let (mut matched, mut predicted, mut total_gold) = (0, 0, 0);
    for (set, inst) in sets.iter().zip(gold) {
        let gold_spans: HashSet<Span> = inst.arguments.iter().map(|a| a.span).collect();
        let cand_spans: HashSet<Span> = set.spans().collect();
        matched += cand_spans.intersection(&gold_spans).count();
        predicted += cand_spans.len();
        total_gold += gold_spans.len();
    }
    Ok(Prf::from_counts(matched, predicted, total_gold))
}
