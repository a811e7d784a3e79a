//! Deterministic templated corpus: `<filler><head><cue><tail><filler>` clauses
//! with relation-specific cue words, optional second clause and distractor
//! entities that take part in no triple.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::Sentence;
use crate::embed::WordLexicon;
use crate::error::{Error, Result};
use crate::tagging::{Span, Triple};

const ENTITY_CHARS: &str = "张王李赵刘陈杨黄周吴徐孙马朱胡林郭何高罗郑梁谢宋唐许韩冯邓曹彭曾萧田董袁潘蒋蔡余杜叶程苏魏吕丁";
const CUE_CHARS: &str = "毕业任职出生创办属于位发表著作导师研究担编写设立获得主持参与合编审领建";
const FILLER_CHARS: &str = "的了是和也就都而及着或一个这那有为以上下中其此";

#[derive(Clone, Debug, PartialEq)]
pub struct SynthConfig {
    pub seed: u64,
    pub n_relations: usize,
    pub n_sentences: usize,
    /// Number of distinct entity strings.
    pub entity_pool: usize,
    /// Fraction of sentences assigned to the training split.
    pub train_fraction: f64,
    /// Dimension of the generated word vectors.
    pub word_dim: usize,
    /// Probability that a sentence carries a second triple.
    pub second_triple_rate: f64,
    /// Probability of an untagged distractor entity.
    pub distractor_rate: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            n_relations: 4,
            n_sentences: 250,
            entity_pool: 60,
            train_fraction: 0.8,
            word_dim: 300,
            second_triple_rate: 0.3,
            distractor_rate: 0.3,
        }
    }
}

/// Output of [`generate_synthetic`].
#[derive(Clone, Debug)]
pub struct SynthCorpus {
    pub relations: Vec<String>,
    pub train: Vec<Sentence>,
    pub test: Vec<Sentence>,
    /// Vectors for every entity and cue word, standing in for pretrained embeddings.
    pub lexicon: WordLexicon,
}

fn random_word(rng: &mut ChaCha8Rng, pool: &[char], min: usize, max: usize) -> String {
    let len = rng.gen_range(min..=max);
    (0..len).map(|_| *pool.choose(rng).unwrap()).collect()
}

fn unique_words(
    rng: &mut ChaCha8Rng,
    pool: &[char],
    count: usize,
    min: usize,
    max: usize,
    taken: &mut BTreeSet<String>,
) -> Vec<String> {
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let w = random_word(rng, pool, min, max);
        if taken.insert(w.clone()) {
            out.push(w);
        }
    }
    out
}

struct Builder {
    chars: Vec<char>,
    triples: Vec<Triple>,
}

impl Builder {
    fn push(&mut self, s: &str) -> Span {
        let start = self.chars.len();
        self.chars.extend(s.chars());
        Span::new(start, self.chars.len())
    }
}

pub fn generate_synthetic(cfg: &SynthConfig) -> Result<SynthCorpus> {
    if cfg.n_relations == 0 {
        return Err(Error::Contract("need at least one relation".into()));
    }
    if cfg.entity_pool < 2 || cfg.word_dim == 0 {
        return Err(Error::Contract(
            "need at least two entities and a positive word dimension".into(),
        ));
    }
    if !(0.0..=1.0).contains(&cfg.train_fraction) {
        return Err(Error::Contract("train fraction must lie in [0, 1]".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let entity_chars: Vec<char> = ENTITY_CHARS.chars().collect();
    let cue_chars: Vec<char> = CUE_CHARS.chars().collect();
    let filler_chars: Vec<char> = FILLER_CHARS.chars().collect();

    let relations: Vec<String> = (0..cfg.n_relations).map(|i| format!("rel{i:02}")).collect();
    let mut taken = BTreeSet::new();
    let entities = unique_words(&mut rng, &entity_chars, cfg.entity_pool, 2, 3, &mut taken);
    let cues: Vec<Vec<String>> = (0..cfg.n_relations)
        .map(|_| unique_words(&mut rng, &cue_chars, 2, 2, 3, &mut taken))
        .collect();

    let clause = |b: &mut Builder, rng: &mut ChaCha8Rng, rel: usize| {
        let lead = random_word(rng, &filler_chars, 0, 2);
        b.push(&lead);
        let head = entities.choose(rng).unwrap();
        let tail = loop {
            let t = entities.choose(rng).unwrap();
            if t != head {
                break t;
            }
        };
        let hs = b.push(head);
        b.push(cues[rel].choose(rng).unwrap());
        let ts = b.push(tail);
        let trail = random_word(rng, &filler_chars, 0, 3);
        b.push(&trail);
        let text = b.chars.clone();
        b.triples
            .push(Triple::from_spans(&text, hs, &relations[rel], ts));
    };

    let mut sentences = Vec::with_capacity(cfg.n_sentences);
    let mut primary = Vec::with_capacity(cfg.n_sentences);
    for i in 0..cfg.n_sentences {
        let rel = i % cfg.n_relations;
        let mut b = Builder {
            chars: Vec::new(),
            triples: Vec::new(),
        };
        clause(&mut b, &mut rng, rel);
        if cfg.n_relations > 1 && rng.gen_bool(cfg.second_triple_rate) {
            b.push("，");
            let other = (rel + 1 + rng.gen_range(0..cfg.n_relations - 1)) % cfg.n_relations;
            clause(&mut b, &mut rng, other);
        }
        if rng.gen_bool(cfg.distractor_rate) {
            b.push("，");
            b.push(entities.choose(&mut rng).unwrap());
            let tail = random_word(&mut rng, &filler_chars, 1, 3);
            b.push(&tail);
        }
        b.push("。");
        sentences.push(Sentence {
            text: b.chars.iter().collect(),
            triples: b.triples,
        });
        primary.push(rel);
    }

    let in_train = stratified_split(&primary, cfg.n_relations, cfg.train_fraction);
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (s, keep) in sentences.into_iter().zip(in_train) {
        if keep {
            train.push(s);
        } else {
            test.push(s);
        }
    }

    let normal = Normal::new(0.0, 1.0 / (cfg.word_dim as f64).sqrt()).expect("positive std");
    let words: Vec<String> = entities.into_iter().chain(cues.into_iter().flatten()).collect();
    let entries = words
        .into_iter()
        .map(|w| {
            let v = (0..cfg.word_dim).map(|_| normal.sample(&mut rng)).collect();
            (w, v)
        })
        .collect();
    let lexicon = WordLexicon::from_entries(cfg.word_dim, entries)?;

    Ok(SynthCorpus {
        relations,
        train,
        test,
        lexicon,
    })
}

/// Train/test flags with `round(n · fraction)` training items, allotted to
/// each group in proportion to its size (largest remainder, ties to the lower group).
fn stratified_split(groups: &[usize], n_groups: usize, fraction: f64) -> Vec<bool> {
    let total = (groups.len() as f64 * fraction).round() as usize;
    let mut sizes = vec![0usize; n_groups];
    for &g in groups {
        sizes[g] += 1;
    }
    let exact: Vec<f64> = sizes.iter().map(|&s| s as f64 * fraction).collect();
    let mut quota: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let mut order: Vec<usize> = (0..n_groups).collect();
    order.sort_by(|&a, &b| {
        let (ra, rb) = (exact[a] - exact[a].floor(), exact[b] - exact[b].floor());
        rb.partial_cmp(&ra).unwrap().then(a.cmp(&b))
    });
    let mut missing = total.saturating_sub(quota.iter().sum());
    for g in order.into_iter().cycle() {
        if missing == 0 {
            break;
        }
        if quota[g] < sizes[g] {
            quota[g] += 1;
            missing -= 1;
        }
    }
    groups
        .iter()
        .map(|&g| {
            if quota[g] > 0 {
                quota[g] -= 1;
                true
            } else {
                false
            }
        })
        .collect()
}
