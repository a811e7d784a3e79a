//! Per-character tagging scheme for joint entity-relation extraction.
//!
//! Every character carries one tag: `O`, or a BIES boundary marker combined
//! with a relation and a role (1 = head entity, 2 = tail entity). A triple
//! `(head, relation, tail)` is written as a role-1 mention and a role-2
//! mention carrying the same relation.

use std::collections::{HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Id of the `O` tag.
pub const OUTSIDE: usize = 0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Position {
    Begin,
    Inside,
    End,
    Single,
}

impl Position {
    pub const ALL: [Position; 4] = [
        Position::Begin,
        Position::Inside,
        Position::End,
        Position::Single,
    ];

    fn letter(self) -> char {
        match self {
            Position::Begin => 'B',
            Position::Inside => 'I',
            Position::End => 'E',
            Position::Single => 'S',
        }
    }

    /// Boundary marker of offset `i` inside a mention of length `len`.
    pub fn within(i: usize, len: usize) -> Self {
        match (i, len) {
            (_, 1) => Position::Single,
            (0, _) => Position::Begin,
            (i, len) if i + 1 == len => Position::End,
            _ => Position::Inside,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Role {
    Head,
    Tail,
}

impl Role {
    fn number(self) -> u8 {
        match self {
            Role::Head => 1,
            Role::Tail => 2,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Tag {
    Outside,
    Entity {
        position: Position,
        relation: usize,
        role: Role,
    },
}

/// Relation inventory and the tag ids derived from it.
///
/// Ids: `O` is 0, then `(position, relation, role)` in lexicographic order
/// with positions `B < I < E < S` and roles `1 < 2`, giving `8·|R| + 1` tags.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TagScheme {
    relations: Vec<String>,
}

impl TagScheme {
    pub fn new(relations: Vec<String>) -> Result<Self> {
        if relations.is_empty() {
            return Err(Error::Contract("a tag scheme needs at least one relation".into()));
        }
        let mut seen = HashSet::new();
        for r in &relations {
            if !seen.insert(r.as_str()) {
                return Err(Error::DuplicateRelation(r.clone()));
            }
        }
        Ok(Self { relations })
    }

    pub fn relations(&self) -> &[String] {
        &self.relations
    }

    pub fn relation_index(&self, name: &str) -> Option<usize> {
        self.relations.iter().position(|r| r == name)
    }

    /// Number of tags `k`.
    pub fn len(&self) -> usize {
        8 * self.relations.len() + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn id(&self, tag: Tag) -> usize {
        match tag {
            Tag::Outside => OUTSIDE,
            Tag::Entity {
                position,
                relation,
                role,
            } => {
                let per_position = 2 * self.relations.len();
                1 + position as usize * per_position
                    + relation * 2
                    + (role.number() as usize - 1)
            }
        }
    }

    pub fn tag(&self, id: usize) -> Option<Tag> {
        if id == OUTSIDE {
            return Some(Tag::Outside);
        }
        if id >= self.len() {
            return None;
        }
        let per_position = 2 * self.relations.len();
        let rest = id - 1;
        let position = Position::ALL[rest / per_position];
        let within = rest % per_position;
        let role = if within.is_multiple_of(2) { Role::Head } else { Role::Tail };
        Some(Tag::Entity {
            position,
            relation: within / 2,
            role,
        })
    }

    pub fn name(&self, id: usize) -> String {
        match self.tag(id) {
            Some(Tag::Outside) => "O".to_string(),
            Some(Tag::Entity {
                position,
                relation,
                role,
            }) => format!(
                "{}-{}-{}",
                position.letter(),
                self.relations[relation],
                role.number()
            ),
            None => format!("<invalid {id}>"),
        }
    }
}

/// Half-open character span `[start, end)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "[usize; 2]", into = "[usize; 2]")]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        Self { start, end }
    }

    pub fn len(&self) -> usize {
        self.end.saturating_sub(self.start)
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    pub fn overlaps(&self, other: &Span) -> bool {
        self.start < other.end && other.start < self.end
    }

    /// Number of characters strictly between the two spans.
    pub fn gap(&self, other: &Span) -> usize {
        if other.start >= self.end {
            other.start - self.end
        } else {
            self.start.saturating_sub(other.end)
        }
    }
}

impl From<[usize; 2]> for Span {
    fn from([start, end]: [usize; 2]) -> Self {
        Self { start, end }
    }
}

impl From<Span> for [usize; 2] {
    fn from(s: Span) -> Self {
        [s.start, s.end]
    }
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{},{})", self.start, self.end)
    }
}

/// A `(head, relation, tail)` fact anchored to character spans.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Triple {
    pub head: String,
    pub head_span: Span,
    pub relation: String,
    pub tail: String,
    pub tail_span: Span,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub confidence: Option<f64>,
}

impl Triple {
    /// Builds a triple whose entity strings are read from `text`.
    pub fn from_spans(text: &[char], head: Span, relation: &str, tail: Span) -> Self {
        Self {
            head: text[head.start..head.end].iter().collect(),
            head_span: head,
            relation: relation.to_string(),
            tail: text[tail.start..tail.end].iter().collect(),
            tail_span: tail,
            confidence: None,
        }
    }

    /// Identity used for scoring: spans and relation.
    pub fn key(&self) -> (Span, Span, &str) {
        (self.head_span, self.tail_span, self.relation.as_str())
    }
}

/// Tags for a sentence of `n` characters.
///
/// Fails when a span is empty or out of range, when a relation is unknown,
/// or when any two entity mentions (across all triples) overlap.
pub fn encode_tags(n: usize, triples: &[Triple], scheme: &TagScheme) -> Result<Vec<usize>> {
    let mut tags = vec![OUTSIDE; n];
    let mut owner: Vec<Option<usize>> = vec![None; n];
    for (ti, triple) in triples.iter().enumerate() {
        let relation = scheme.relation_index(&triple.relation).ok_or_else(|| {
            Error::Encoding(format!(
                "triple {ti} uses unknown relation `{}`",
                triple.relation
            ))
        })?;
        if triple.head_span.overlaps(&triple.tail_span) {
            return Err(Error::Encoding(format!(
                "triple {ti}: head {} and tail {} overlap",
                triple.head_span, triple.tail_span
            )));
        }
        for (span, role) in [(triple.head_span, Role::Head), (triple.tail_span, Role::Tail)] {
            if span.is_empty() || span.end > n {
                return Err(Error::Encoding(format!(
                    "triple {ti}: span {span} is empty or exceeds sentence length {n}"
                )));
            }
            for i in span.start..span.end {
                if let Some(other) = owner[i] {
                    return Err(Error::Encoding(format!(
                        "triples {other} and {ti} collide at character {i}"
                    )));
                }
                owner[i] = Some(ti);
                tags[i] = scheme.id(Tag::Entity {
                    position: Position::within(i - span.start, span.len()),
                    relation,
                    role,
                });
            }
        }
    }
    Ok(tags)
}

/// A well-formed tagged entity mention.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Mention {
    pub span: Span,
    pub relation: usize,
    pub role: Role,
}

/// Maximal well-formed mentions: `S` alone, or `B I* E` with one
/// relation and role throughout. Anything else is dropped.
pub fn scan_mentions(tags: &[usize], scheme: &TagScheme) -> Vec<Mention> {
    let mut out = Vec::new();
    let mut open: Option<(usize, usize, Role)> = None;
    for (i, &id) in tags.iter().enumerate() {
        match scheme.tag(id) {
            Some(Tag::Entity {
                position,
                relation,
                role,
            }) => match position {
                Position::Single => {
                    open = None;
                    out.push(Mention {
                        span: Span::new(i, i + 1),
                        relation,
                        role,
                    });
                }
                Position::Begin => open = Some((i, relation, role)),
                Position::Inside => {
                    if open.is_none_or(|(_, r, ro)| (r, ro) != (relation, role)) {
                        open = None;
                    }
                }
                Position::End => {
                    if let Some((start, r, ro)) = open.take() {
                        if (r, ro) == (relation, role) {
                            out.push(Mention {
                                span: Span::new(start, i + 1),
                                relation,
                                role,
                            });
                        }
                    }
                }
            },
            _ => open = None,
        }
    }
    out
}

/// Pairs head and tail mentions per relation.
///
/// Heads are taken left to right; each takes the nearest still-unpaired tail
/// of the same relation (gap in characters, ties to the tail on the right).
/// Unpaired mentions are discarded. Returns `(head, tail)` pairs sorted by
/// head position.
pub fn pair_mentions(mentions: &[Mention]) -> Vec<(Mention, Mention)> {
    let mut by_relation: HashMap<usize, (Vec<Mention>, Vec<Mention>)> = HashMap::new();
    for m in mentions {
        let entry = by_relation.entry(m.relation).or_default();
        match m.role {
            Role::Head => entry.0.push(*m),
            Role::Tail => entry.1.push(*m),
        }
    }
    let mut pairs = Vec::new();
    for (_, (mut heads, mut tails)) in by_relation {
        heads.sort();
        tails.sort();
        let mut used = vec![false; tails.len()];
        for head in heads {
            let mut best: Option<usize> = None;
            for (j, tail) in tails.iter().enumerate() {
                if used[j] {
                    continue;
                }
                let better = match best {
                    None => true,
                    Some(b) => {
                        let (d, db) = (head.span.gap(&tail.span), head.span.gap(&tails[b].span));
                        d < db || (d == db && tail.span.start > tails[b].span.start)
                    }
                };
                if better {
                    best = Some(j);
                }
            }
            if let Some(j) = best {
                used[j] = true;
                pairs.push((head, tails[j]));
            }
        }
    }
    pairs.sort_by_key(|(h, t)| (h.span, t.span, h.relation));
    pairs
}

/// Triples read off an arbitrary (possibly ill-formed) tag sequence.
pub fn decode_triples(tags: &[usize], text: &[char], scheme: &TagScheme) -> Vec<Triple> {
    pair_mentions(&scan_mentions(tags, scheme))
        .into_iter()
        .map(|(h, t)| Triple::from_spans(text, h.span, &scheme.relations()[h.relation], t.span))
        .collect()
}

/// Micro-averaged precision, recall and F1 over exact `(head span, tail span, relation)` matches.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExtractionScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub predicted: usize,
    pub gold: usize,
    pub correct: usize,
}

impl ExtractionScore {
    pub fn from_counts(predicted: usize, gold: usize, correct: usize) -> Self {
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let precision = ratio(correct, predicted);
        let recall = ratio(correct, gold);
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        Self {
            precision,
            recall,
            f1,
            predicted,
            gold,
            correct,
        }
    }
}

/// Scores per-sentence predictions against gold; each gold triple matches at most once.
pub fn score(predicted: &[Vec<Triple>], gold: &[Vec<Triple>]) -> Result<ExtractionScore> {
    if predicted.len() != gold.len() {
        return Err(Error::Contract(format!(
            "score needs aligned sentence lists, got {} predicted vs {} gold",
            predicted.len(),
            gold.len()
        )));
    }
    let (mut n_pred, mut n_gold, mut n_correct) = (0, 0, 0);
    for (pred, gold) in predicted.iter().zip(gold) {
        let mut remaining: HashMap<(Span, Span, &str), usize> = HashMap::new();
        for g in gold {
            *remaining.entry(g.key()).or_default() += 1;
        }
        for p in pred {
            if let Some(c) = remaining.get_mut(&p.key()) {
                if *c > 0 {
                    *c -= 1;
                    n_correct += 1;
                }
            }
        }
        n_pred += pred.len();
        n_gold += gold.len();
    }
    Ok(ExtractionScore::from_counts(n_pred, n_gold, n_correct))
}
