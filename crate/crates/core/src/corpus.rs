//! Role-annotated corpora: bracketed trees plus predicate/argument lines.
//!
//! A prop file holds one predicate instance per line:
//!
//! ```text
//! <sentence-id> <predicate-terminal-index> (<role>:<start>-<end>)*
//! ```
//!
//! with half-open spans over terminal indices.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::treebank::{read_tree_str, Sentence, Span, TreeLineError};

macro_rules! roles {
    ($($variant:ident => $name:literal,)*) => {
        /// Semantic role inventory: five core arguments, twenty adjuncts, the
        /// predicate marker `V` and the synthetic `NULL` (not an argument).
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        pub enum Role {
            $($variant,)*
        }

        impl Role {
            pub const ALL: &'static [Role] = &[$(Role::$variant,)*];

            pub fn as_str(self) -> &'static str {
                match self {
                    $(Role::$variant => $name,)*
                }
            }
        }

        impl FromStr for Role {
            type Err = CorpusError;

            fn from_str(s: &str) -> Result<Self, Self::Err> {
                match s {
                    $($name => Ok(Role::$variant),)*
                    _ => Err(CorpusError::UnknownRole(s.to_string())),
                }
            }
        }
    };
}

roles! {
    Null => "NULL",
    Arg0 => "Arg0",
    Arg1 => "Arg1",
    Arg2 => "Arg2",
    Arg3 => "Arg3",
    Arg4 => "Arg4",
    ArgMAdj => "ArgM-ADJ",
    ArgMAdv => "ArgM-ADV",
    ArgMCau => "ArgM-CAU",
    ArgMCom => "ArgM-COM",
    ArgMDir => "ArgM-DIR",
    ArgMDis => "ArgM-DIS",
    ArgMExt => "ArgM-EXT",
    ArgMGol => "ArgM-GOL",
    ArgMI => "ArgM-I",
    ArgMLvb => "ArgM-LVB",
    ArgMMnr => "ArgM-MNR",
    ArgMMod => "ArgM-MOD",
    ArgMNeg => "ArgM-NEG",
    ArgMPartice => "ArgM-Partice",
    ArgMPnc => "ArgM-PNC",
    ArgMPrd => "ArgM-PRD",
    ArgMPrp => "ArgM-PRP",
    ArgMRec => "ArgM-REC",
    ArgMRes => "ArgM-RES",
    ArgMTmp => "ArgM-TMP",
    V => "V",
}

impl Role {
    pub fn is_core(self) -> bool {
        matches!(
            self,
            Role::Arg0 | Role::Arg1 | Role::Arg2 | Role::Arg3 | Role::Arg4
        )
    }

    pub fn is_adjunct(self) -> bool {
        self.as_str().starts_with("ArgM-")
    }

    /// Roles that may label an argument span in a corpus file.
    pub fn is_argument(self) -> bool {
        self != Role::Null && self != Role::V
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Sort key for label names: `NULL` first, then `Arg0`..`Arg4`, then the
/// `ArgM-*` adjuncts alphabetically, then anything else alphabetically.
pub fn label_order_key(label: &str) -> (u8, String) {
    let rank = if label == "NULL" {
        0
    } else if label.starts_with("ArgM-") {
        2
    } else if label.starts_with("Arg") {
        1
    } else {
        3
    };
    (rank, label.to_string())
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CorpusError {
    #[error("unknown role {0:?}")]
    UnknownRole(String),
    #[error("role {0} cannot label an argument")]
    ReservedRole(Role),
    #[error("line {line}: malformed prop line: {reason}")]
    MalformedPropLine { line: usize, reason: String },
    #[error("unknown sentence id {0:?}")]
    UnknownSentenceId(String),
    #[error("instance {sentence_id}@{predicate_index}: span {span} out of range for {len} tokens")]
    SpanOutOfRange {
        sentence_id: String,
        predicate_index: usize,
        span: Span,
        len: usize,
    },
    #[error("instance {sentence_id}@{predicate_index}: overlapping spans {a} and {b}")]
    OverlappingSpans {
        sentence_id: String,
        predicate_index: usize,
        a: Span,
        b: Span,
    },
    #[error("instance {sentence_id}@{predicate_index}: argument {span} covers the predicate")]
    ArgumentCoversPredicate {
        sentence_id: String,
        predicate_index: usize,
        span: Span,
    },
    #[error("tree line {}: {}", .0.line, .0.error)]
    Tree(TreeLineError),
    #[error("duplicate sentence id {0:?}")]
    DuplicateSentenceId(String),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Argument {
    pub span: Span,
    pub role: Role,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PropInstance {
    pub sentence_id: String,
    pub predicate_index: usize,
    pub arguments: Vec<Argument>,
}

impl PropInstance {
    /// The role whose span equals `span` exactly, else `NULL`.
    pub fn gold_label_of(&self, span: Span) -> Role {
        self.arguments
            .iter()
            .find(|a| a.span == span)
            .map_or(Role::Null, |a| a.role)
    }

    pub fn key(&self) -> (&str, usize) {
        (&self.sentence_id, self.predicate_index)
    }

    /// Renders the instance in prop-file syntax.
    pub fn to_line(&self) -> String {
        let mut s = format!("{} {}", self.sentence_id, self.predicate_index);
        for a in &self.arguments {
            s.push_str(&format!(" {}:{}", a.role, a.span));
        }
        s
    }

    /// Checks spans against a sentence of `len` tokens.
    pub fn validate(&self, len: usize) -> Result<(), CorpusError> {
        let (sid, p) = (self.sentence_id.clone(), self.predicate_index);
        if p >= len {
            return Err(CorpusError::SpanOutOfRange {
                sentence_id: sid,
                predicate_index: p,
                span: Span::new(p, p + 1),
                len,
            });
        }
        for a in &self.arguments {
            if !a.role.is_argument() {
                return Err(CorpusError::ReservedRole(a.role));
            }
            if a.span.start >= a.span.end || a.span.end > len {
                return Err(CorpusError::SpanOutOfRange {
                    sentence_id: sid,
                    predicate_index: p,
                    span: a.span,
                    len,
                });
            }
            if a.span.contains_index(p) {
                return Err(CorpusError::ArgumentCoversPredicate {
                    sentence_id: sid,
                    predicate_index: p,
                    span: a.span,
                });
            }
        }
        let mut spans: Vec<Span> = self.arguments.iter().map(|a| a.span).collect();
        spans.sort();
        for w in spans.windows(2) {
            if w[0].overlaps(&w[1]) {
                return Err(CorpusError::OverlappingSpans {
                    sentence_id: sid,
                    predicate_index: p,
                    a: w[0],
                    b: w[1],
                });
            }
        }
        Ok(())
    }
}

fn parse_span(s: &str) -> Option<Span> {
    let (a, b) = s.split_once('-')?;
    let (a, b) = (a.parse().ok()?, b.parse().ok()?);
    (a <= b).then(|| Span::new(a, b))
}

/// Parses one prop line. `line` is the 1-based line number used in errors.
pub fn parse_prop_line(text: &str, line: usize) -> Result<PropInstance, CorpusError> {
    let malformed = |reason: String| CorpusError::MalformedPropLine { line, reason };
    let mut fields = text.split_whitespace();
    let sentence_id = fields
        .next()
        .ok_or_else(|| malformed("empty line".into()))?
        .to_string();
    let pred = fields
        .next()
        .ok_or_else(|| malformed("missing predicate index".into()))?;
    let predicate_index = pred
        .parse()
        .map_err(|_| malformed(format!("bad predicate index {pred:?}")))?;
    let mut arguments = Vec::new();
    for field in fields {
        // role names contain '-', so split at the last ':'
        let (role, span) = field
            .rsplit_once(':')
            .ok_or_else(|| malformed(format!("bad argument {field:?}")))?;
        let role: Role = role.parse()?;
        let span = parse_span(span).ok_or_else(|| malformed(format!("bad span in {field:?}")))?;
        arguments.push(Argument { span, role });
    }
    Ok(PropInstance {
        sentence_id,
        predicate_index,
        arguments,
    })
}

/// A diagnostic for one input line dropped by the lenient loader.
#[derive(Debug, Clone)]
pub struct Diagnostic {
    pub file: &'static str,
    pub line: usize,
    pub error: CorpusError,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} line {}: {}", self.file, self.line, self.error)
    }
}

/// Parses prop lines without checking them against trees. Blank lines and
/// `#` comments are skipped.
pub fn read_props_str(text: &str) -> (Vec<PropInstance>, Vec<Diagnostic>) {
    let mut out = Vec::new();
    let mut diags = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        match parse_prop_line(trimmed, i + 1) {
            Ok(p) => out.push(p),
            Err(error) => diags.push(Diagnostic {
                file: "props",
                line: i + 1,
                error,
            }),
        }
    }
    (out, diags)
}

#[derive(Debug, Clone, Default)]
pub struct Corpus {
    pub sentences: BTreeMap<String, Arc<Sentence>>,
    pub instances: Vec<PropInstance>,
}

/// Counts reported by [`Corpus::filter_simple`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FilterStats {
    pub kept_sentences: usize,
    pub dropped_sentences: usize,
    pub dropped_instances: usize,
}

impl Corpus {
    pub fn sentence(&self, id: &str) -> Option<&Sentence> {
        self.sentences.get(id).map(Arc::as_ref)
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    /// Builds a corpus, rejecting any invalid line. Errors carry the first
    /// problem found.
    pub fn from_strs(trees: &str, props: &str) -> Result<Corpus, CorpusError> {
        let (sentences, tree_errs) = read_tree_str(trees);
        if let Some(e) = tree_errs.into_iter().next() {
            return Err(CorpusError::Tree(e));
        }
        let mut corpus = Corpus::default();
        for s in sentences {
            if corpus.sentences.contains_key(&s.id) {
                return Err(CorpusError::DuplicateSentenceId(s.id));
            }
            corpus.sentences.insert(s.id.clone(), Arc::new(s));
        }
        for (i, line) in props.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let inst = parse_prop_line(line, i + 1)?;
            corpus.check_instance(&inst)?;
            corpus.instances.push(inst);
        }
        Ok(corpus)
    }

    /// Builds a corpus, dropping invalid tree and prop lines and reporting
    /// each with its line number.
    pub fn from_strs_lenient(trees: &str, props: &str) -> (Corpus, Vec<Diagnostic>) {
        let (sentences, tree_errs) = read_tree_str(trees);
        let mut diags: Vec<Diagnostic> = tree_errs
            .into_iter()
            .map(|e| Diagnostic {
                file: "trees",
                line: e.line,
                error: CorpusError::Tree(e),
            })
            .collect();
        let mut corpus = Corpus::default();
        for s in sentences {
            if corpus.sentences.contains_key(&s.id) {
                diags.push(Diagnostic {
                    file: "trees",
                    line: 0,
                    error: CorpusError::DuplicateSentenceId(s.id),
                });
                continue;
            }
            corpus.sentences.insert(s.id.clone(), Arc::new(s));
        }
        for (i, line) in props.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            match parse_prop_line(line, i + 1).and_then(|p| corpus.check_instance(&p).map(|_| p)) {
                Ok(p) => corpus.instances.push(p),
                Err(error) => diags.push(Diagnostic {
                    file: "props",
                    line: i + 1,
                    error,
                }),
            }
        }
        (corpus, diags)
    }

    fn check_instance(&self, inst: &PropInstance) -> Result<(), CorpusError> {
        let sentence = self
            .sentences
            .get(&inst.sentence_id)
            .ok_or_else(|| CorpusError::UnknownSentenceId(inst.sentence_id.clone()))?;
        inst.validate(sentence.len())
    }

    pub fn load(tree_path: &Path, prop_path: &Path) -> Result<Corpus, CorpusError> {
        Corpus::from_strs(&read(tree_path)?, &read(prop_path)?)
    }

    pub fn load_lenient(
        tree_path: &Path,
        prop_path: &Path,
    ) -> Result<(Corpus, Vec<Diagnostic>), CorpusError> {
        Ok(Corpus::from_strs_lenient(&read(tree_path)?, &read(prop_path)?))
    }

    /// Keeps only sentences annotated with exactly one predicate instance.
    pub fn filter_simple(&self) -> (Corpus, FilterStats) {
        let mut counts: HashMap<&str, usize> = HashMap::new();
        for inst in &self.instances {
            *counts.entry(inst.sentence_id.as_str()).or_default() += 1;
        }
        let keep = |id: &str| counts.get(id) == Some(&1);
        let sentences: BTreeMap<_, _> = self
            .sentences
            .iter()
            .filter(|(id, _)| keep(id))
            .map(|(id, s)| (id.clone(), Arc::clone(s)))
            .collect();
        let instances: Vec<_> = self
            .instances
            .iter()
            .filter(|i| keep(&i.sentence_id))
            .cloned()
            .collect();
        let stats = FilterStats {
            kept_sentences: sentences.len(),
            dropped_sentences: self.sentences.len() - sentences.len(),
            dropped_instances: self.instances.len() - instances.len(),
        };
        (
            Corpus {
                sentences,
                instances,
            },
            stats,
        )
    }

    /// A corpus restricted to the given instances (by index), keeping only
    /// the sentences they reference. Sentences are shared, not copied.
    pub fn subset(&self, indices: &[usize]) -> Corpus {
        let instances: Vec<PropInstance> =
            indices.iter().map(|&i| self.instances[i].clone()).collect();
        let sentences = instances
            .iter()
            .map(|i| {
                let s = &self.sentences[&i.sentence_id];
                (i.sentence_id.clone(), Arc::clone(s))
            })
            .collect();
        Corpus {
            sentences,
            instances,
        }
    }
}

fn read(path: &Path) -> Result<String, CorpusError> {
    fs::read_to_string(path).map_err(|e| CorpusError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const TREE5: &str = "s1 (S (NP-SUB (N-H Nam)) (VP (V-H giúp) (NP (N-H Huy)) (PP-TMP (E-H vào) (NP (N-H hôm_qua)))))";

    #[test]
    fn inventory_size() {
        assert_eq!(Role::ALL.len(), 27);
        assert_eq!(Role::ALL.iter().filter(|r| r.is_core()).count(), 5);
        assert_eq!(Role::ALL.iter().filter(|r| r.is_adjunct()).count(), 20);
        for r in Role::ALL {
            assert_eq!(r.as_str().parse::<Role>().unwrap(), *r);
        }
    }

    #[test]
    fn loads_instance() {
        let c = Corpus::from_strs(TREE5, "s1 1 Arg0:0-1 Arg1:2-3 ArgM-TMP:3-5\n").unwrap();
        assert_eq!(c.instances.len(), 1);
        let inst = &c.instances[0];
        assert_eq!(inst.arguments.len(), 3);
        assert_eq!(inst.arguments[2].role, Role::ArgMTmp);
        assert_eq!(inst.arguments[2].span, Span::new(3, 5));
        assert_eq!(inst.to_line(), "s1 1 Arg0:0-1 Arg1:2-3 ArgM-TMP:3-5");
    }

    #[test]
    fn empty_props() {
        let c = Corpus::from_strs(TREE5, "").unwrap();
        assert!(c.is_empty());
        assert_eq!(c.sentences.len(), 1);
    }

    #[test]
    fn load_errors() {
        assert_eq!(
            Corpus::from_strs(TREE5, "s1 1 ArgZ:0-1").unwrap_err(),
            CorpusError::UnknownRole("ArgZ".into())
        );
        assert_eq!(
            Corpus::from_strs(TREE5, "s9 1 Arg0:0-1").unwrap_err(),
            CorpusError::UnknownSentenceId("s9".into())
        );
        assert!(matches!(
            Corpus::from_strs(TREE5, "s1 1 Arg0:0-2 Arg1:2-3").unwrap_err(),
            CorpusError::ArgumentCoversPredicate { .. }
        ));
        assert!(matches!(
            Corpus::from_strs(TREE5, "s1 1 Arg1:2-4 ArgM-TMP:3-5").unwrap_err(),
            CorpusError::OverlappingSpans { .. }
        ));
        assert!(matches!(
            Corpus::from_strs(TREE5, "s1 1 Arg1:2-9").unwrap_err(),
            CorpusError::SpanOutOfRange { .. }
        ));
        assert!(matches!(
            Corpus::from_strs(TREE5, "\n\ns1 x").unwrap_err(),
            CorpusError::MalformedPropLine { line: 3, .. }
        ));
        assert!(matches!(
            Corpus::from_strs(TREE5, "s1 1 Arg0:1-0").unwrap_err(),
            CorpusError::MalformedPropLine { .. }
        ));
        assert_eq!(
            Corpus::from_strs(TREE5, "s1 1 V:1-2").unwrap_err(),
            CorpusError::ReservedRole(Role::V)
        );
        assert_eq!(
            Corpus::from_strs(TREE5, "s1 1 NULL:0-1").unwrap_err(),
            CorpusError::ReservedRole(Role::Null)
        );
    }

    #[test]
    fn lenient_drops_bad_lines() {
        let props = "s1 1 Arg0:0-1\ns1 1 ArgZ:0-1\ns7 0\n";
        let (c, diags) = Corpus::from_strs_lenient(TREE5, props);
        assert_eq!(c.instances.len(), 1);
        let lines: Vec<_> = diags.iter().map(|d| d.line).collect();
        assert_eq!(lines, [2, 3]);
    }

    fn multi_corpus(n: usize, multi: &[usize]) -> Corpus {
        let mut trees = String::new();
        let mut props = String::new();
        for i in 0..n {
            trees.push_str(&format!("t{i} (S (N a) (V b) (N c))\n"));
            props.push_str(&format!("t{i} 1 Arg0:0-1\n"));
            if multi.contains(&i) {
                props.push_str(&format!("t{i} 2 Arg0:0-1\n"));
            }
        }
        Corpus::from_strs(&trees, &props).unwrap()
    }

    #[test]
    fn filter_simple_counts() {
        let c = multi_corpus(2, &[1]);
        let (f, stats) = c.filter_simple();
        assert_eq!(f.sentences.keys().collect::<Vec<_>>(), ["t0"]);
        assert_eq!(stats.dropped_sentences, 1);
        assert_eq!(stats.dropped_instances, 2);

        let c = multi_corpus(10, &[2, 5, 7]);
        let (f, stats) = c.filter_simple();
        assert_eq!(f.sentences.len(), 7);
        assert_eq!(f.instances.len(), 7);
        assert_eq!(stats.kept_sentences, 7);

        let (again, _) = f.filter_simple();
        assert_eq!(again.instances, f.instances);
        assert_eq!(again.sentences.len(), f.sentences.len());
    }

    #[test]
    fn filter_simple_fixpoint() {
        let c = multi_corpus(4, &[]);
        let (f, stats) = c.filter_simple();
        assert_eq!(f.instances, c.instances);
        assert_eq!(stats.dropped_sentences, 0);
    }

    #[test]
    fn gold_label_exact_match_only() {
        let c = Corpus::from_strs(TREE5, "s1 1 Arg0:0-1 Arg1:2-3 ArgM-TMP:3-5").unwrap();
        let inst = &c.instances[0];
        let mut found = Vec::new();
        for s in 0..5 {
            for e in s + 1..=5 {
                let span = Span::new(s, e);
                let label = inst.gold_label_of(span);
                let expected = inst.arguments.iter().any(|a| a.span == span);
                assert_eq!(label != Role::Null, expected, "span {span}");
                if label != Role::Null {
                    found.push(label);
                }
            }
        }
        found.sort();
        let mut roles: Vec<_> = inst.arguments.iter().map(|a| a.role).collect();
        roles.sort();
        assert_eq!(found, roles);
    }

    #[test]
    fn label_order() {
        let mut labels = vec!["ArgM-TMP", "Arg1", "NULL", "ArgM-ADV", "Arg0", "ARG"];
        labels.sort_by_key(|l| label_order_key(l));
        assert_eq!(labels, ["NULL", "Arg0", "Arg1", "ArgM-ADV", "ArgM-TMP", "ARG"]);
    }
}
