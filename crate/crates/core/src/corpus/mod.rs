//! JSONL corpus reading and writing, plus the synthetic corpus generator.
//!
//! One object per line:
//!
//! ```json
//! {"text":"甲毕业于乙大","triples":[{"h":"甲","h_span":[0,1],"t":"乙大","t_span":[4,6],"r":"毕业院校"}]}
//! ```
//!
//! Spans are half-open and count Unicode scalar values.

mod synth;

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use log::info;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tagging::{encode_tags, Span, TagScheme, Triple};

pub use synth::{generate_synthetic, SynthConfig, SynthCorpus};

/// A sentence with its gold triples.
#[derive(Clone, Debug, PartialEq)]
pub struct Sentence {
    pub text: String,
    pub triples: Vec<Triple>,
}

impl Sentence {
    pub fn chars(&self) -> Vec<char> {
        self.text.chars().collect()
    }

    pub fn len(&self) -> usize {
        self.text.chars().count()
    }

    pub fn is_empty(&self) -> bool {
        self.text.is_empty()
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct TripleRecord {
    h: String,
    h_span: Span,
    t: String,
    t_span: Span,
    r: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct SentenceRecord {
    text: String,
    triples: Vec<TripleRecord>,
}

/// Sentences kept by [`parse_corpus`] and how many were excluded for overlap.
#[derive(Clone, Debug, PartialEq)]
pub struct LoadedCorpus {
    pub sentences: Vec<Sentence>,
    pub rejected_overlapping: usize,
}

/// Whether the single-tag-per-character scheme can express this sentence.
pub fn is_encodable(sentence: &Sentence) -> bool {
    let relations: BTreeSet<&str> = sentence.triples.iter().map(|t| t.relation.as_str()).collect();
    if relations.is_empty() {
        return true;
    }
    let scheme = TagScheme::new(relations.into_iter().map(String::from).collect())
        .expect("deduplicated relations");
    encode_tags(sentence.len(), &sentence.triples, &scheme).is_ok()
}

fn check_span(
    line: usize,
    chars: &[char],
    field: &str,
    span: Span,
    expected: &str,
) -> Result<()> {
    if span.is_empty() || span.end > chars.len() {
        return Err(Error::Validation {
            line,
            field: format!("{field}_span"),
            message: format!("span {span} is empty or outside a text of {} chars", chars.len()),
        });
    }
    let actual: String = chars[span.start..span.end].iter().collect();
    if actual != expected {
        return Err(Error::Validation {
            line,
            field: field.to_string(),
            message: format!("`{expected}` does not match text{span} = `{actual}`"),
        });
    }
    Ok(())
}

/// Parses and validates a JSONL corpus.
pub fn parse_corpus<R: Read>(reader: R) -> Result<LoadedCorpus> {
    let mut sentences = Vec::new();
    let mut rejected = 0;
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let lineno = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: SentenceRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: lineno,
            message: e.to_string(),
        })?;
        if record.text.is_empty() {
            return Err(Error::Validation {
                line: lineno,
                field: "text".into(),
                message: "empty sentence".into(),
            });
        }
        let chars: Vec<char> = record.text.chars().collect();
        let mut triples = Vec::with_capacity(record.triples.len());
        for t in record.triples {
            check_span(lineno, &chars, "h", t.h_span, &t.h)?;
            check_span(lineno, &chars, "t", t.t_span, &t.t)?;
            if t.r.is_empty() {
                return Err(Error::Validation {
                    line: lineno,
                    field: "r".into(),
                    message: "empty relation name".into(),
                });
            }
            triples.push(Triple {
                head: t.h,
                head_span: t.h_span,
                relation: t.r,
                tail: t.t,
                tail_span: t.t_span,
                confidence: None,
            });
        }
        let sentence = Sentence {
            text: record.text,
            triples,
        };
        if is_encodable(&sentence) {
            sentences.push(sentence);
        } else {
            rejected += 1;
        }
    }
    if rejected > 0 {
        info!("excluded {rejected} sentences with overlapping entity spans");
    }
    Ok(LoadedCorpus {
        sentences,
        rejected_overlapping: rejected,
    })
}

pub fn load_corpus(path: impl AsRef<Path>) -> Result<LoadedCorpus> {
    parse_corpus(File::open(path)?)
}

/// Serialises sentences as JSONL, one per line.
pub fn write_corpus<W: Write>(writer: W, sentences: &[Sentence]) -> Result<()> {
    let mut w = BufWriter::new(writer);
    for s in sentences {
        let record = SentenceRecord {
            text: s.text.clone(),
            triples: s
                .triples
                .iter()
                .map(|t| TripleRecord {
                    h: t.head.clone(),
                    h_span: t.head_span,
                    t: t.tail.clone(),
                    t_span: t.tail_span,
                    r: t.relation.clone(),
                })
                .collect(),
        };
        serde_json::to_writer(&mut w, &record)?;
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_corpus(path: impl AsRef<Path>, sentences: &[Sentence]) -> Result<()> {
    write_corpus(File::create(path)?, sentences)
}

/// Relation names in order of first appearance.
pub fn relations_of(sentences: &[Sentence]) -> Vec<String> {
    let mut seen = Vec::<String>::new();
    for t in sentences.iter().flat_map(|s| &s.triples) {
        if !seen.contains(&t.relation) {
            seen.push(t.relation.clone());
        }
    }
    seen
}
