//! Sentence templates for premises and hypotheses, their parsers, and the
//! character-level tokenizer used by the classifier.

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::graph::{ConditioningSet, Dag, Edge, GraphError, NodeName};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TextError {
    #[error("premise has no edges")]
    EmptyPremise,
    #[error("edge order is not a permutation of {0} edges")]
    BadOrder(usize),
    #[error("premise parse failed: {0}")]
    Premise(String),
    #[error("hypothesis parse failed: {0}")]
    Hypothesis(String),
    #[error("invalid query: {0}")]
    Query(#[from] GraphError),
    #[error("character {0:?} is outside the vocabulary")]
    OutOfVocabulary(char),
    #[error("token id {0} is outside the vocabulary")]
    BadToken(u8),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Label {
    Yes,
    No,
}

impl Label {
    pub fn from_bool(holds: bool) -> Self {
        if holds {
            Label::Yes
        } else {
            Label::No
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Yes => "Yes",
            Label::No => "No",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "Yes" => Some(Label::Yes),
            "No" => Some(Label::No),
            _ => None,
        }
    }

    /// Output-logit index: 0 for Yes, 1 for No.
    pub fn index(self) -> usize {
        match self {
            Label::Yes => 0,
            Label::No => 1,
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            Label::Yes => Label::No,
            Label::No => Label::Yes,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One premise/hypothesis/label triple.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Example {
    pub premise: String,
    pub hypothesis: String,
    pub label: Label,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum QueryKind {
    Transitivity,
    DSeparation,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Query {
    kind: QueryKind,
    a: NodeName,
    b: NodeName,
    z: ConditioningSet,
}

impl Query {
    pub fn transitivity(a: NodeName, b: NodeName) -> Result<Self, GraphError> {
        if a == b {
            return Err(GraphError::InvalidQuery(format!("query nodes are both {a}")));
        }
        Ok(Query {
            kind: QueryKind::Transitivity,
            a,
            b,
            z: ConditioningSet::empty(),
        })
    }

    pub fn d_separation(a: NodeName, b: NodeName, z: ConditioningSet) -> Result<Self, GraphError> {
        if a == b {
            return Err(GraphError::InvalidQuery(format!("query nodes are both {a}")));
        }
        if z.contains(&a) || z.contains(&b) {
            return Err(GraphError::InvalidQuery("query node inside conditioning set".into()));
        }
        Ok(Query {
            kind: QueryKind::DSeparation,
            a,
            b,
            z,
        })
    }

    pub fn kind(&self) -> QueryKind {
        self.kind
    }

    pub fn a(&self) -> &NodeName {
        &self.a
    }

    pub fn b(&self) -> &NodeName {
        &self.b
    }

    pub fn z(&self) -> &ConditioningSet {
        &self.z
    }
}

/// One `"<source> causes <target>."` sentence per edge, in `order`.
pub fn render_premise(g: &Dag, order: &[usize]) -> Result<String, TextError> {
    let edges = g.edges();
    if edges.is_empty() {
        return Err(TextError::EmptyPremise);
    }
    let distinct: HashSet<usize> = order.iter().copied().collect();
    if order.len() != edges.len() || distinct.len() != edges.len() || order.iter().any(|&i| i >= edges.len()) {
        return Err(TextError::BadOrder(edges.len()));
    }
    Ok(render_edges(order.iter().map(|&i| &edges[i])))
}

/// Renders edges in iteration order.
pub fn render_edges<'a>(edges: impl IntoIterator<Item = &'a Edge>) -> String {
    edges
        .into_iter()
        .map(|e| format!("{} causes {}.", e.source, e.target))
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn render_hypothesis(q: &Query) -> String {
    match q.kind {
        QueryKind::Transitivity => format!("Does {} cause {}?", q.a, q.b),
        QueryKind::DSeparation if q.z.is_empty() => format!("Are {} and {} d-separated?", q.a, q.b),
        QueryKind::DSeparation => {
            let z: Vec<&str> = q.z.iter().map(NodeName::as_str).collect();
            format!("Are {} and {} d-separated given {}?", q.a, q.b, z.join(", "))
        }
    }
}

fn premise_pattern() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(\w+) causes (\w+)").expect("static pattern"))
}

fn transitivity_pattern() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^Does (\w+) cause (\w+)\?$").expect("static pattern"))
}

fn dsep_pattern() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^Are (\w+) and (\w+) d-separated(?: given ([^?]+))?\?$").expect("static pattern"))
}

/// Edges named in a premise, deduplicated, in order of first mention.
pub fn parse_premise(text: &str) -> Result<Vec<Edge>, TextError> {
    let mut seen = BTreeSet::new();
    let mut edges = Vec::new();
    for cap in premise_pattern().captures_iter(text) {
        let source = NodeName::new(&cap[1]).map_err(|e| TextError::Premise(e.to_string()))?;
        let target = NodeName::new(&cap[2]).map_err(|e| TextError::Premise(e.to_string()))?;
        let edge = Edge::new(source, target);
        if seen.insert(edge.clone()) {
            edges.push(edge);
        }
    }
    if edges.is_empty() {
        return Err(TextError::Premise("no \"X causes Y\" sentences".into()));
    }
    Ok(edges)
}

/// Parses a premise all the way to a validated graph.
pub fn parse_premise_graph(text: &str) -> Result<Dag, TextError> {
    Dag::from_edges(parse_premise(text)?).map_err(|e| TextError::Premise(e.to_string()))
}

pub fn parse_hypothesis(text: &str) -> Result<Query, TextError> {
    let text = text.trim();
    let hyp_err = |e: GraphError| TextError::Hypothesis(e.to_string());
    if let Some(cap) = transitivity_pattern().captures(text) {
        let a = NodeName::new(&cap[1]).map_err(hyp_err)?;
        let b = NodeName::new(&cap[2]).map_err(hyp_err)?;
        return Query::transitivity(a, b).map_err(hyp_err);
    }
    if let Some(cap) = dsep_pattern().captures(text) {
        let a = NodeName::new(&cap[1]).map_err(hyp_err)?;
        let b = NodeName::new(&cap[2]).map_err(hyp_err)?;
        let members = match cap.get(3) {
            None => Vec::new(),
            Some(list) => {
                let names = list
                    .as_str()
                    .split(", ")
                    .map(NodeName::new)
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(hyp_err)?;
                let count = names.len();
                let unique: BTreeSet<_> = names.iter().collect();
                if unique.len() != count {
                    return Err(TextError::Hypothesis("repeated conditioning node".into()));
                }
                names
            }
        };
        let z = ConditioningSet::new(members).map_err(hyp_err)?;
        return Query::d_separation(a, b, z).map_err(hyp_err);
    }
    Err(TextError::Hypothesis(format!("unrecognized query {text:?}")))
}

/// Token id reserved for the premise/hypothesis boundary.
pub const SEPARATOR: u8 = 0;

const VOCAB_CHARS: &str = "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789 .?,-";

/// Number of token ids: the separator plus one per character.
pub const VOCAB_SIZE: usize = VOCAB_CHARS.len() + 1;

/// Default sequence cap.
pub const MAX_SEQ_LEN: usize = 512;

fn char_id(c: char) -> Option<u8> {
    VOCAB_CHARS.find(c).map(|i| (i + 1) as u8)
}

/// Hex SHA-256 of the vocabulary table; models record it to detect mismatched tokenizers.
pub fn vocab_hash() -> String {
    let mut h = Sha256::new();
    h.update(b"<sep>");
    h.update(VOCAB_CHARS.as_bytes());
    hex::encode(h.finalize())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenSequence {
    pub ids: Vec<u8>,
    /// Set when the input did not fit in the cap.
    pub truncated: bool,
}

impl TokenSequence {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

/// Character tokens of the premise, a separator, then the hypothesis.
///
/// Over-long input loses premise characters from the end first so that the
/// query survives; only if the hypothesis alone overflows is it cut too.
pub fn tokenize(premise: &str, hypothesis: &str, max_seq_len: usize) -> Result<TokenSequence, TextError> {
    let encode = |s: &str| {
        s.chars()
            .map(|c| char_id(c).ok_or(TextError::OutOfVocabulary(c)))
            .collect::<Result<Vec<u8>, _>>()
    };
    let mut p = encode(premise)?;
    let mut h = encode(hypothesis)?;
    let max = max_seq_len.max(1);
    let total = p.len() + 1 + h.len();
    let truncated = total > max;
    if truncated {
        let room = max - 1;
        if h.len() >= room {
            p.clear();
            h.truncate(room);
        } else {
            p.truncate(room - h.len());
        }
    }
    let mut ids = p;
    ids.push(SEPARATOR);
    ids.extend(h);
    Ok(TokenSequence { ids, truncated })
}

/// Inverse of [`tokenize`] for untruncated sequences.
pub fn detokenize(tokens: &TokenSequence) -> Result<(String, String), TextError> {
    let mut parts = vec![String::new()];
    for &id in &tokens.ids {
        if id == SEPARATOR {
            parts.push(String::new());
            continue;
        }
        let c = VOCAB_CHARS
            .chars()
            .nth(id as usize - 1)
            .ok_or(TextError::BadToken(id))?;
        parts.last_mut().expect("nonempty").push(c);
    }
    if parts.len() != 2 {
        return Err(TextError::BadToken(SEPARATOR));
    }
    let h = parts.pop().expect("two parts");
    let p = parts.pop().expect("two parts");
    Ok((p, h))
}
