//! Bracketed constituency trees.
//!
//! Trees are read from Penn-style S-expressions such as
//! `(S (NP-SUB (N-H Nam)) (VP (V-H đá) (NP (N-H bóng))))`. A node label is a
//! syntactic category followed by `-`-separated function tags; the head marker
//! `H` is an ordinary tag. A node carrying a token is a terminal; its label is
//! the part-of-speech tag of that token.

use std::collections::BTreeSet;
use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TreeError {
    #[error("empty input")]
    EmptyInput,
    #[error("unbalanced parentheses at byte {position}")]
    UnbalancedParens { position: usize },
    #[error("empty label {raw:?} at byte {position}")]
    EmptyLabel { raw: String, position: usize },
    #[error("node {label:?} has both children and a token")]
    NodeWithBothChildrenAndToken { label: String },
    #[error("node {label:?} has neither children nor a token")]
    EmptyNode { label: String },
    #[error("node {label:?} has more than one token")]
    MultipleTokens { label: String },
    #[error("unexpected input after the root node at byte {position}")]
    TrailingInput { position: usize },
    #[error("node is the root")]
    NodeIsRoot,
    #[error("node path {0} is not in the tree")]
    NodeNotInTree(NodePath),
}

/// Half-open interval `[start, end)` over terminal indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        debug_assert!(start <= end);
        Span { start, end }
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.start == self.end
    }

    pub fn contains_index(&self, index: usize) -> bool {
        self.start <= index && index < self.end
    }

    pub fn overlaps(&self, other: &Span) -> bool {
        self.start < other.end && other.start < self.end
    }

    fn shifted(self, offset: usize) -> Span {
        Span::new(self.start + offset, self.end + offset)
    }
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.start, self.end)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct NodeLabel {
    category: String,
    function_tags: Vec<String>,
    raw: String,
}

impl NodeLabel {
    /// Splits `raw` on `-`: the first segment is the category, the rest are
    /// function tags in order.
    pub fn parse(raw: &str) -> Result<NodeLabel, TreeError> {
        let empty = || TreeError::EmptyLabel {
            raw: raw.to_string(),
            position: 0,
        };
        if raw.is_empty() {
            return Err(empty());
        }
        let mut parts = raw.split('-');
        let category = parts.next().unwrap_or_default();
        if category.is_empty() {
            return Err(empty());
        }
        let function_tags: Vec<String> = parts.map(str::to_string).collect();
        if function_tags.iter().any(String::is_empty) {
            return Err(empty());
        }
        Ok(NodeLabel {
            category: category.to_string(),
            function_tags,
            raw: raw.to_string(),
        })
    }

    pub fn category(&self) -> &str {
        &self.category
    }

    pub fn function_tags(&self) -> &[String] {
        &self.function_tags
    }

    pub fn first_function_tag(&self) -> Option<&str> {
        self.function_tags.first().map(String::as_str)
    }

    pub fn raw(&self) -> &str {
        &self.raw
    }
}

impl fmt::Display for NodeLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.raw)
    }
}

/// Position of a node as the sequence of child indices from the root.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodePath(Vec<usize>);

impl NodePath {
    pub fn root() -> Self {
        NodePath(Vec::new())
    }

    pub fn is_root(&self) -> bool {
        self.0.is_empty()
    }

    pub fn depth(&self) -> usize {
        self.0.len()
    }

    pub fn indices(&self) -> &[usize] {
        &self.0
    }

    pub fn parent(&self) -> Option<NodePath> {
        if self.0.is_empty() {
            None
        } else {
            Some(NodePath(self.0[..self.0.len() - 1].to_vec()))
        }
    }

    pub fn child(&self, index: usize) -> NodePath {
        let mut v = self.0.clone();
        v.push(index);
        NodePath(v)
    }

    /// True when `self` is a proper ancestor of `other`.
    pub fn is_ancestor_of(&self, other: &NodePath) -> bool {
        self.0.len() < other.0.len() && other.0.starts_with(&self.0)
    }

    /// Longest shared prefix, i.e. the lowest common ancestor.
    pub fn common_ancestor(&self, other: &NodePath) -> NodePath {
        let n = self
            .0
            .iter()
            .zip(&other.0)
            .take_while(|(a, b)| a == b)
            .count();
        NodePath(self.0[..n].to_vec())
    }

    /// All prefixes of this path, from the path itself up to the root.
    pub fn ancestors_inclusive(&self) -> impl Iterator<Item = NodePath> + '_ {
        (0..=self.0.len()).rev().map(move |n| NodePath(self.0[..n].to_vec()))
    }
}

impl From<Vec<usize>> for NodePath {
    fn from(v: Vec<usize>) -> Self {
        NodePath(v)
    }
}

impl fmt::Display for NodePath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("/")?;
        for (i, idx) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str("/")?;
            }
            write!(f, "{idx}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Tree {
    label: NodeLabel,
    children: Vec<Tree>,
    token: Option<String>,
    span: Span,
}

impl Tree {
    /// A terminal node at position 0. `token` is stored as given (spaces, not
    /// underscores).
    pub fn leaf(label: NodeLabel, token: impl Into<String>) -> Tree {
        Tree {
            label,
            children: Vec::new(),
            token: Some(token.into()),
            span: Span::new(0, 1),
        }
    }

    /// An internal node; children are laid out left to right starting at 0.
    ///
    /// Panics if `children` is empty.
    pub fn internal(label: NodeLabel, children: Vec<Tree>) -> Tree {
        assert!(!children.is_empty(), "internal node needs children");
        let mut offset = 0;
        let children: Vec<Tree> = children
            .into_iter()
            .map(|mut c| {
                let width = c.span.len();
                c.shift(offset - c.span.start);
                offset += width;
                c
            })
            .collect();
        Tree {
            label,
            children,
            token: None,
            span: Span::new(0, offset),
        }
    }

    fn shift(&mut self, offset: usize) {
        if offset == 0 {
            return;
        }
        self.span = self.span.shifted(offset);
        for c in &mut self.children {
            c.shift(offset);
        }
    }

    pub fn label(&self) -> &NodeLabel {
        &self.label
    }

    pub fn category(&self) -> &str {
        self.label.category()
    }

    pub fn children(&self) -> &[Tree] {
        &self.children
    }

    pub fn token(&self) -> Option<&str> {
        self.token.as_deref()
    }

    pub fn span(&self) -> Span {
        self.span
    }

    pub fn is_terminal(&self) -> bool {
        self.token.is_some()
    }

    pub fn get(&self, path: &NodePath) -> Option<&Tree> {
        path.indices()
            .iter()
            .try_fold(self, |node, &i| node.children.get(i))
    }

    pub fn node(&self, path: &NodePath) -> Result<&Tree, TreeError> {
        self.get(path)
            .ok_or_else(|| TreeError::NodeNotInTree(path.clone()))
    }

    /// In-order terminal tokens.
    pub fn tokens(&self) -> Vec<&str> {
        let mut out = Vec::with_capacity(self.span.len());
        self.collect_tokens(&mut out);
        out
    }

    fn collect_tokens<'a>(&'a self, out: &mut Vec<&'a str>) {
        match &self.token {
            Some(t) => out.push(t),
            None => self.children.iter().for_each(|c| c.collect_tokens(out)),
        }
    }

    /// Pre-order traversal yielding every node with its path.
    pub fn preorder(&self) -> Vec<(NodePath, &Tree)> {
        let mut out = Vec::new();
        let mut stack = vec![(NodePath::root(), self)];
        while let Some((path, node)) = stack.pop() {
            for (i, c) in node.children.iter().enumerate().rev() {
                stack.push((path.child(i), c));
            }
            out.push((path, node));
        }
        out
    }

    /// Siblings of the node at `path` (all children of its parent except the
    /// node itself), in order, with their paths.
    pub fn siblings(&self, path: &NodePath) -> Result<Vec<(NodePath, &Tree)>, TreeError> {
        self.node(path)?;
        let parent_path = path.parent().ok_or(TreeError::NodeIsRoot)?;
        let own = *path.indices().last().expect("non-root path");
        let parent = self.node(&parent_path)?;
        Ok(parent
            .children
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != own)
            .map(|(i, c)| (parent_path.child(i), c))
            .collect())
    }

    /// Canonical single-line bracketing; spaces in tokens become `_`.
    pub fn serialize(&self) -> String {
        let mut out = String::new();
        self.write_into(&mut out);
        out
    }

    fn write_into(&self, out: &mut String) {
        out.push('(');
        out.push_str(self.label.raw());
        match &self.token {
            Some(t) => {
                out.push(' ');
                out.push_str(&t.replace(' ', "_"));
            }
            None => {
                for c in &self.children {
                    out.push(' ');
                    c.write_into(out);
                }
            }
        }
        out.push(')');
    }

    /// Checks the structural invariants. Used by tests on generated trees.
    pub fn check_invariants(&self) -> bool {
        match (&self.token, self.children.is_empty()) {
            (Some(_), true) => self.span.len() == 1,
            (None, false) => {
                let mut pos = self.span.start;
                for c in &self.children {
                    if c.span.start != pos || !c.check_invariants() {
                        return false;
                    }
                    pos = c.span.end;
                }
                pos == self.span.end
            }
            _ => false,
        }
    }
}

impl fmt::Display for Tree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.serialize())
    }
}

impl std::str::FromStr for Tree {
    type Err = TreeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_bracketed(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Tok<'a> {
    Open(usize),
    Close(usize),
    Atom(&'a str, usize),
}

fn lex(text: &str) -> Vec<Tok<'_>> {
    let mut toks = Vec::new();
    let mut atom_start: Option<usize> = None;
    for (i, ch) in text.char_indices() {
        if ch == '(' || ch == ')' || ch.is_whitespace() {
            if let Some(s) = atom_start.take() {
                toks.push(Tok::Atom(&text[s..i], s));
            }
            match ch {
                '(' => toks.push(Tok::Open(i)),
                ')' => toks.push(Tok::Close(i)),
                _ => {}
            }
        } else if atom_start.is_none() {
            atom_start = Some(i);
        }
    }
    if let Some(s) = atom_start {
        toks.push(Tok::Atom(&text[s..], s));
    }
    toks
}

struct Parser<'a> {
    toks: Vec<Tok<'a>>,
    pos: usize,
    next_terminal: usize,
}

impl<'a> Parser<'a> {
    fn node(&mut self) -> Result<Tree, TreeError> {
        let open_at = match self.toks.get(self.pos) {
            Some(Tok::Open(p)) => *p,
            Some(Tok::Close(p)) => return Err(TreeError::UnbalancedParens { position: *p }),
            Some(Tok::Atom(_, p)) => return Err(TreeError::TrailingInput { position: *p }),
            None => return Err(TreeError::EmptyInput),
        };
        self.pos += 1;
        let label = match self.toks.get(self.pos) {
            Some(Tok::Atom(raw, p)) => {
                self.pos += 1;
                NodeLabel::parse(raw).map_err(|_| TreeError::EmptyLabel {
                    raw: raw.to_string(),
                    position: *p,
                })?
            }
            Some(Tok::Open(p)) | Some(Tok::Close(p)) => {
                return Err(TreeError::EmptyLabel {
                    raw: String::new(),
                    position: *p,
                })
            }
            None => return Err(TreeError::UnbalancedParens { position: open_at }),
        };
        let start = self.next_terminal;
        let mut children = Vec::new();
        let mut token: Option<String> = None;
        loop {
            match self.toks.get(self.pos).copied() {
                Some(Tok::Close(_)) => {
                    self.pos += 1;
                    break;
                }
                Some(Tok::Open(_)) => {
                    if token.is_some() {
                        return Err(TreeError::NodeWithBothChildrenAndToken {
                            label: label.raw().to_string(),
                        });
                    }
                    children.push(self.node()?);
                }
                Some(Tok::Atom(a, _)) => {
                    if !children.is_empty() {
                        return Err(TreeError::NodeWithBothChildrenAndToken {
                            label: label.raw().to_string(),
                        });
                    }
                    if token.is_some() {
                        return Err(TreeError::MultipleTokens {
                            label: label.raw().to_string(),
                        });
                    }
                    token = Some(a.replace('_', " "));
                    self.pos += 1;
                }
                None => return Err(TreeError::UnbalancedParens { position: open_at }),
            }
        }
        match token {
            Some(t) => {
                self.next_terminal += 1;
                Ok(Tree {
                    label,
                    children,
                    token: Some(t),
                    span: Span::new(start, start + 1),
                })
            }
            None if children.is_empty() => Err(TreeError::EmptyNode {
                label: label.raw().to_string(),
            }),
            None => Ok(Tree {
                label,
                children,
                token: None,
                span: Span::new(start, self.next_terminal),
            }),
        }
    }
}

/// Parses a single bracketed tree. `_` inside tokens is read as a space.
pub fn parse_bracketed(text: &str) -> Result<Tree, TreeError> {
    let toks = lex(text);
    if toks.is_empty() {
        return Err(TreeError::EmptyInput);
    }
    let mut parser = Parser {
        toks,
        pos: 0,
        next_terminal: 0,
    };
    let tree = parser.node()?;
    match parser.toks.get(parser.pos) {
        None => Ok(tree),
        Some(Tok::Close(p)) => Err(TreeError::UnbalancedParens { position: *p }),
        Some(Tok::Open(p)) | Some(Tok::Atom(_, p)) => Err(TreeError::TrailingInput { position: *p }),
    }
}

/// Categories treated as phrasal by the extraction algorithm.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhrasalCategories(BTreeSet<String>);

impl Default for PhrasalCategories {
    fn default() -> Self {
        PhrasalCategories::new(["NP", "VP", "AP", "PP", "QP", "S", "SBAR", "MDP", "WHNP", "WHPP"])
    }
}

impl PhrasalCategories {
    pub fn new<I, S>(cats: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        PhrasalCategories(cats.into_iter().map(Into::into).collect())
    }

    pub fn contains(&self, category: &str) -> bool {
        self.0.contains(category)
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.0.iter().map(String::as_str)
    }

    /// True iff `node` is internal and its category is phrasal.
    pub fn is_phrase(&self, node: &Tree) -> bool {
        !node.is_terminal() && self.contains(node.category())
    }
}

/// A contiguous token span dominated by one tree node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Constituent {
    pub span: Span,
    pub text: String,
    pub node: NodePath,
}

/// Builds the constituent for the subtree at `path`.
pub fn collect_words(tree: &Tree, path: &NodePath) -> Result<Constituent, TreeError> {
    let node = tree.node(path)?;
    Ok(Constituent {
        span: node.span(),
        text: node.tokens().join(" "),
        node: path.clone(),
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sentence {
    pub id: String,
    pub tree: Tree,
    pub tokens: Vec<String>,
}

impl Sentence {
    pub fn new(id: impl Into<String>, tree: Tree) -> Self {
        let tokens = tree.tokens().into_iter().map(str::to_string).collect();
        Sentence {
            id: id.into(),
            tree,
            tokens,
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// One tree line that failed to parse.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TreeLineError {
    pub line: usize,
    pub id: String,
    pub error: TreeError,
}

impl fmt::Display for TreeLineError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {} ({}): {}", self.line, self.id, self.error)
    }
}

/// Reads a tree file: one bracketed tree per line, optionally preceded by a
/// sentence id (`s12 (S ...)`). Lines without an id get `s<n>`, where `n`
/// counts tree lines from 1. Blank lines and `#` comments are skipped.
pub fn read_tree_str(text: &str) -> (Vec<Sentence>, Vec<TreeLineError>) {
    let mut sentences = Vec::new();
    let mut errors = Vec::new();
    let mut ordinal = 0;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        ordinal += 1;
        let (id, body) = match line.find('(') {
            Some(0) | None => (format!("s{ordinal}"), line),
            Some(i) => (line[..i].trim().to_string(), &line[i..]),
        };
        match parse_bracketed(body) {
            Ok(tree) => sentences.push(Sentence::new(id, tree)),
            Err(error) => errors.push(TreeLineError {
                line: lineno + 1,
                id,
                error,
            }),
        }
    }
    (sentences, errors)
}

pub fn read_tree_file(path: &Path) -> std::io::Result<(Vec<Sentence>, Vec<TreeLineError>)> {
    Ok(read_tree_str(&fs::read_to_string(path)?))
}
