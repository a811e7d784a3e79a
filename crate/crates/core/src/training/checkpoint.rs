//! Checkpoint files.
//!
//! ```text
//! MIXTAG CHECKPOINT
//! version: 1
//! header-bytes: <N>
//! <N bytes of pretty-printed JSON: hyperparameters, vocabulary, relations,
//!  word list, tensor manifest>
//! <raw little-endian f64 payloads, one tensor after another in manifest order>
//! ```

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::model::Model;
use super::train::TrainConfig;
use crate::embed::{CharVocab, WordLexicon};
use crate::error::{CheckpointError, Result};
use crate::tagging::TagScheme;

pub const FORMAT_VERSION: u32 = 1;
const MAGIC: &str = "MIXTAG CHECKPOINT";
const LEXICON_TENSOR: &str = "lexicon.vectors";

/// A trained model with the configuration that produced it.
#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub train: TrainConfig,
    pub model: Model,
}

#[derive(Debug, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    hyperparameters: TrainConfig,
    vocab: String,
    relations: Vec<String>,
    lexicon_words: Option<Vec<String>>,
    tensors: Vec<TensorEntry>,
}

impl Checkpoint {
    fn manifest(&self) -> Vec<(String, Vec<usize>, &[f64])> {
        let mut out: Vec<_> = self
            .model
            .params
            .iter()
            .map(|(name, t)| (name.to_string(), t.shape().to_vec(), t.data()))
            .collect();
        if let Some(lex) = &self.model.lexicon {
            out.push((
                LEXICON_TENSOR.to_string(),
                vec![lex.len(), lex.dim()],
                lex.flat_vectors(),
            ));
        }
        out
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let manifest = self.manifest();
        let header = Header {
            hyperparameters: self.train.clone(),
            vocab: self.model.vocab.chars().iter().collect(),
            relations: self.model.scheme.relations().to_vec(),
            lexicon_words: self.model.lexicon.as_ref().map(|l| l.words().to_vec()),
            tensors: manifest
                .iter()
                .map(|(name, shape, _)| TensorEntry {
                    name: name.clone(),
                    shape: shape.clone(),
                })
                .collect(),
        };
        let json = serde_json::to_string_pretty(&header)?;
        let mut out = format!(
            "{MAGIC}\nversion: {FORMAT_VERSION}\nheader-bytes: {}\n",
            json.len() + 1
        )
        .into_bytes();
        out.extend_from_slice(json.as_bytes());
        out.push(b'\n');
        for (_, _, data) in manifest {
            for v in data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut rest = bytes;
        let mut next_line = |what: &str| -> Result<String, CheckpointError> {
            let end = rest
                .iter()
                .position(|&b| b == b'\n')
                .ok_or_else(|| CheckpointError::Header(format!("missing {what} line")))?;
            let line = std::str::from_utf8(&rest[..end])
                .map_err(|_| CheckpointError::Header(format!("{what} line is not UTF-8")))?
                .to_string();
            rest = &rest[end + 1..];
            Ok(line)
        };
        let magic = next_line("magic").map_err(|_| CheckpointError::BadMagic)?;
        if magic != MAGIC {
            return Err(CheckpointError::BadMagic.into());
        }
        let version_line = next_line("version")?;
        let found: u32 = version_line
            .strip_prefix("version: ")
            .and_then(|v| v.trim().parse().ok())
            .ok_or_else(|| CheckpointError::Header(format!("bad version line `{version_line}`")))?;
        if found != FORMAT_VERSION {
            return Err(CheckpointError::Version {
                found,
                expected: FORMAT_VERSION,
            }
            .into());
        }
        let len_line = next_line("header length")?;
        let header_len: usize = len_line
            .strip_prefix("header-bytes: ")
            .and_then(|v| v.trim().parse().ok())
            .ok_or_else(|| CheckpointError::Header(format!("bad length line `{len_line}`")))?;
        if rest.len() < header_len {
            return Err(CheckpointError::Truncated {
                expected: header_len,
                found: rest.len(),
            }
            .into());
        }
        let header: Header = serde_json::from_slice(&rest[..header_len])
            .map_err(|e| CheckpointError::Header(e.to_string()))?;
        let payload = &rest[header_len..];

        let lexicon_entry = header.tensors.iter().find(|t| t.name == LEXICON_TENSOR);
        let expected_bytes: usize = header
            .tensors
            .iter()
            .map(|t| t.shape.iter().product::<usize>() * 8)
            .sum();
        if payload.len() < expected_bytes {
            return Err(CheckpointError::Truncated {
                expected: expected_bytes,
                found: payload.len(),
            }
            .into());
        }
        if payload.len() > expected_bytes {
            return Err(CheckpointError::TrailingBytes(payload.len() - expected_bytes).into());
        }
        let mut values = payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()));

        let lexicon = match (&header.lexicon_words, lexicon_entry) {
            (Some(words), Some(entry)) => {
                let [count, dim] = entry.shape[..] else {
                    return Err(
                        CheckpointError::Manifest("lexicon tensor must be 2-D".into()).into(),
                    );
                };
                if count != words.len() {
                    return Err(CheckpointError::Manifest(format!(
                        "lexicon tensor has {count} rows for {} words",
                        words.len()
                    ))
                    .into());
                }
                // the lexicon payload sits after all parameters
                let skip: usize = header
                    .tensors
                    .iter()
                    .take_while(|t| t.name != LEXICON_TENSOR)
                    .map(|t| t.shape.iter().product::<usize>())
                    .sum();
                let flat: Vec<f64> = payload[skip * 8..(skip + count * dim) * 8]
                    .chunks_exact(8)
                    .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                    .collect();
                let entries = words
                    .iter()
                    .cloned()
                    .zip(flat.chunks(dim).map(<[f64]>::to_vec))
                    .collect();
                Some(WordLexicon::from_entries(dim, entries)?)
            }
            (None, None) => None,
            _ => {
                return Err(CheckpointError::Manifest(
                    "lexicon word list and lexicon tensor must appear together".into(),
                )
                .into())
            }
        };

        let cfg = header.hyperparameters;
        let vocab = CharVocab::from_chars(header.vocab.chars().collect());
        let scheme = TagScheme::new(header.relations)
            .map_err(|e| CheckpointError::Header(e.to_string()))?;
        let mut model = Model::new(cfg.model, vocab, scheme, lexicon, cfg.seed)
            .map_err(|e| CheckpointError::Manifest(e.to_string()))?;

        let params: Vec<&TensorEntry> = header
            .tensors
            .iter()
            .filter(|t| t.name != LEXICON_TENSOR)
            .collect();
        if params.len() != model.params.len() {
            return Err(CheckpointError::Manifest(format!(
                "{} parameter tensors listed, model layout has {}",
                params.len(),
                model.params.len()
            ))
            .into());
        }
        let ids: Vec<_> = model.params.ids().collect();
        for (entry, id) in params.into_iter().zip(ids) {
            let expected_name = model.params.name(id).to_string();
            let t = model.params.get_mut(id);
            if entry.name != expected_name || entry.shape != t.shape() {
                return Err(CheckpointError::Manifest(format!(
                    "tensor `{}` {:?} does not match expected `{}` {:?}",
                    entry.name,
                    entry.shape,
                    expected_name,
                    t.shape()
                ))
                .into());
            }
            for slot in t.data_mut() {
                *slot = values.next().expect("length checked");
            }
        }
        Ok(Self { train: cfg, model })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}
