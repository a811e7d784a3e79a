//! Character-word mixed embeddings.
//!
//! Each character gets a trainable vector. The sentence is also segmented
//! against a frozen pretrained word lexicon; every character of a matched
//! word additionally receives that word's vector, mapped to the character
//! dimension by a trainable projection. Unmatched segments add nothing.

use std::collections::{BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use log::warn;
use rand::Rng;

use crate::error::{Error, Result};
use crate::numerics::{Graph, ParamId, ParamStore, Tensor, Var};

/// Id reserved for characters outside the vocabulary.
pub const UNK: usize = 0;

/// Character to id map; id 0 is the unknown character.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CharVocab {
    chars: Vec<char>,
    index: HashMap<char, usize>,
}

impl CharVocab {
    /// Vocabulary over every character in `texts`, ids assigned in code-point order.
    pub fn build<'a>(texts: impl IntoIterator<Item = &'a str>) -> Self {
        let set: BTreeSet<char> = texts.into_iter().flat_map(str::chars).collect();
        Self::from_chars(set.into_iter().collect())
    }

    /// Rebuilds a vocabulary from its known characters (ids `1..=chars.len()`).
    pub fn from_chars(chars: Vec<char>) -> Self {
        let index = chars.iter().enumerate().map(|(i, &c)| (c, i + 1)).collect();
        Self { chars, index }
    }

    /// Number of ids including UNK.
    pub fn len(&self) -> usize {
        self.chars.len() + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn chars(&self) -> &[char] {
        &self.chars
    }

    pub fn id(&self, c: char) -> usize {
        self.index.get(&c).copied().unwrap_or(UNK)
    }

    pub fn ids(&self, text: &[char]) -> Vec<usize> {
        text.iter().map(|&c| self.id(c)).collect()
    }
}

/// Frozen pretrained word vectors.
#[derive(Clone, Debug, PartialEq)]
pub struct WordLexicon {
    words: Vec<String>,
    index: HashMap<String, usize>,
    vectors: Vec<f64>,
    dim: usize,
    max_word_len: usize,
}

impl WordLexicon {
    /// Builds a lexicon; a repeated word keeps its last vector.
    pub fn from_entries(dim: usize, entries: Vec<(String, Vec<f64>)>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Contract("word vector dimension must be positive".into()));
        }
        let mut lex = Self {
            words: Vec::new(),
            index: HashMap::new(),
            vectors: Vec::new(),
            dim,
            max_word_len: 0,
        };
        for (word, vec) in entries {
            if word.is_empty() {
                return Err(Error::Contract("empty word in lexicon".into()));
            }
            if vec.len() != dim {
                return Err(Error::Dimension {
                    op: "lexicon entry",
                    left: vec![dim],
                    right: vec![vec.len()],
                });
            }
            lex.insert(word, &vec);
        }
        Ok(lex)
    }

    fn insert(&mut self, word: String, vec: &[f64]) -> bool {
        if let Some(&i) = self.index.get(&word) {
            self.vectors[i * self.dim..(i + 1) * self.dim].copy_from_slice(vec);
            return false;
        }
        self.max_word_len = self.max_word_len.max(word.chars().count());
        self.index.insert(word.clone(), self.words.len());
        self.words.push(word);
        self.vectors.extend_from_slice(vec);
        true
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn max_word_len(&self) -> usize {
        self.max_word_len
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    /// All vectors, row-major in [`WordLexicon::words`] order.
    pub fn flat_vectors(&self) -> &[f64] {
        &self.vectors
    }

    pub fn get(&self, word: &str) -> Option<&[f64]> {
        self.index
            .get(word)
            .map(|&i| &self.vectors[i * self.dim..(i + 1) * self.dim])
    }

    /// Parses the text vector format: a `<count> <dim>` header, then one
    /// `word v1 .. v_dim` line per word.
    pub fn parse<R: Read>(reader: R) -> Result<Self> {
        let mut lines = BufReader::new(reader).lines();
        let header = match lines.next() {
            Some(line) => line?,
            None => {
                return Err(Error::Parse {
                    line: 1,
                    message: "empty file, expected `<count> <dim>` header".into(),
                })
            }
        };
        let bad_header = || Error::Parse {
            line: 1,
            message: format!("malformed header `{header}`, expected `<count> <dim>`"),
        };
        let fields: Vec<&str> = header.split_whitespace().collect();
        let [count, dim] = fields.as_slice() else {
            return Err(bad_header());
        };
        let count: usize = count.parse().map_err(|_| bad_header())?;
        let dim: usize = dim.parse().map_err(|_| bad_header())?;
        if dim == 0 {
            return Err(bad_header());
        }

        let mut lex = Self::from_entries(dim, Vec::new())?;
        let mut rows = 0;
        let mut buf = Vec::with_capacity(dim);
        for (i, line) in lines.enumerate() {
            let lineno = i + 2;
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            if rows == count {
                return Err(Error::Parse {
                    line: lineno,
                    message: format!("more rows than the {count} announced in the header"),
                });
            }
            let mut parts = line.split_whitespace();
            let word = parts.next().unwrap().to_string();
            buf.clear();
            for tok in parts {
                let v: f64 = tok.parse().map_err(|_| Error::Parse {
                    line: lineno,
                    message: format!("`{tok}` is not a number"),
                })?;
                buf.push(v);
            }
            if buf.len() != dim {
                return Err(Error::Parse {
                    line: lineno,
                    message: format!("ragged row: {} values, expected {dim}", buf.len()),
                });
            }
            if !lex.insert(word.clone(), &buf) {
                warn!("duplicate word `{word}` at line {lineno}; keeping the later vector");
            }
            rows += 1;
        }
        if rows != count {
            return Err(Error::Parse {
                line: rows + 2,
                message: format!("expected {count} rows, found {rows}"),
            });
        }
        Ok(lex)
    }

    /// Writes the lexicon in the same text format [`WordLexicon::parse`] reads.
    /// Values use shortest round-trip formatting, so reading back is bit-exact.
    pub fn write<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = BufWriter::new(writer);
        writeln!(w, "{} {}", self.len(), self.dim)?;
        for (i, word) in self.words.iter().enumerate() {
            write!(w, "{word}")?;
            for v in &self.vectors[i * self.dim..(i + 1) * self.dim] {
                write!(w, " {v}")?;
            }
            writeln!(w)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Reads a word-vector file from disk.
pub fn load_word_vectors(path: impl AsRef<Path>) -> Result<WordLexicon> {
    WordLexicon::parse(File::open(path)?)
}

/// One segment of a sentence: the matched word and its character span.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Segment {
    pub word: String,
    pub start: usize,
    pub len: usize,
}

/// Contiguous, non-overlapping cover of a sentence.
pub type Segmentation = Vec<Segment>;

/// Forward maximum matching against the lexicon with single-character fallback.
pub fn segment(text: &[char], lexicon: &WordLexicon) -> Segmentation {
    let mut out = Vec::new();
    let mut pos = 0;
    let mut word = String::new();
    while pos < text.len() {
        let longest = lexicon.max_word_len().min(text.len() - pos);
        let mut taken = 1;
        for len in (2..=longest).rev() {
            word.clear();
            word.extend(&text[pos..pos + len]);
            if lexicon.get(&word).is_some() {
                taken = len;
                break;
            }
        }
        out.push(Segment {
            word: text[pos..pos + taken].iter().collect(),
            start: pos,
            len: taken,
        });
        pos += taken;
    }
    out
}

/// Trainable parts of the embedding layer.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EmbedParams {
    pub char_table: ParamId,
    /// `d_w × m`; absent when word mixing is disabled.
    pub projection: Option<ParamId>,
    pub dim: usize,
}

impl EmbedParams {
    /// Fan-scaled uniform initialisation. `word_dim = None` disables mixing.
    pub fn init<R: Rng + ?Sized>(
        store: &mut ParamStore,
        vocab_size: usize,
        dim: usize,
        word_dim: Option<usize>,
        rng: &mut R,
    ) -> Self {
        let bound = (6.0 / (vocab_size + dim) as f64).sqrt();
        let char_table = store.add(
            "embed.char_table",
            Tensor::uniform(&[vocab_size, dim], bound, rng),
        );
        let projection = word_dim.map(|dw| {
            let bound = (6.0 / (dw + dim) as f64).sqrt();
            store.add("embed.projection", Tensor::uniform(&[dw, dim], bound, rng))
        });
        Self {
            char_table,
            projection,
            dim,
        }
    }
}

/// Character-only embedding: row `i` is the table row of `text[i]`.
pub fn char_embed(
    g: &mut Graph,
    store: &ParamStore,
    text: &[char],
    vocab: &CharVocab,
    params: &EmbedParams,
) -> Result<Var> {
    if text.is_empty() {
        return Err(Error::Contract("cannot embed an empty sentence".into()));
    }
    let table = g.param(store, params.char_table);
    g.gather_rows(table, &vocab.ids(text))
}

/// The `n × d_w` matrix whose row `i` is the lexicon vector of the segment
/// covering character `i`, or zeros when that segment is not in the lexicon.
pub fn aligned_word_vectors(text: &[char], lexicon: &WordLexicon) -> Tensor {
    let dw = lexicon.dim();
    let mut data = vec![0.0; text.len() * dw];
    for seg in segment(text, lexicon) {
        if let Some(v) = lexicon.get(&seg.word) {
            for i in seg.start..seg.start + seg.len {
                data[i * dw..(i + 1) * dw].copy_from_slice(v);
            }
        }
    }
    Tensor::new(&[text.len(), dw], data).expect("nonempty text")
}

/// Mixed embedding `n × m`: character vectors plus projected word vectors.
///
/// Lexicon vectors enter the graph as constants and never receive gradients.
pub fn mix_embed(
    g: &mut Graph,
    store: &ParamStore,
    text: &[char],
    vocab: &CharVocab,
    lexicon: &WordLexicon,
    params: &EmbedParams,
) -> Result<Var> {
    let chars = char_embed(g, store, text, vocab, params)?;
    let projection = params.projection.ok_or_else(|| {
        Error::Contract("mixed embedding requested but the model has no projection".into())
    })?;
    let words = g.constant_owned(aligned_word_vectors(text, lexicon));
    let proj = g.param(store, projection);
    let word_part = g.matmul(words, proj)?;
    g.add(chars, word_part)
}
