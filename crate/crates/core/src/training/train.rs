use std::io::Write;

use log::info;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::loss::{biased_loss, LossConfig};
use super::model::{Model, ModelConfig};
use super::Checkpoint;
use crate::corpus::Sentence;
use crate::embed::{CharVocab, WordLexicon};
use crate::error::{Error, Result};
use crate::numerics::{Graph, RmspropConfig, RmspropState};
use crate::tagging::{encode_tags, score, ExtractionScore, TagScheme};

/// Everything that determines a training run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Sentences whose gradients are summed before one optimiser step.
    pub batch_size: usize,
    pub learning_rate: f64,
    pub rho: f64,
    pub epsilon: f64,
    pub seed: u64,
    pub alpha: f64,
    pub use_bias: bool,
    pub model: ModelConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 16,
            learning_rate: 1e-3,
            rho: 0.9,
            epsilon: 1e-8,
            seed: 0,
            alpha: 3.0,
            use_bias: true,
            model: ModelConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if self.batch_size == 0 {
            return Err(Error::Contract("batch size must be at least 1".into()));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Contract("learning rate must be finite and non-negative".into()));
        }
        if !(self.rho > 0.0 && self.rho < 1.0) || self.epsilon.is_nan() || self.epsilon <= 0.0 {
            return Err(Error::Contract("RMSprop needs 0 < rho < 1 and epsilon > 0".into()));
        }
        LossConfig::new(self.alpha)?;
        Ok(())
    }

    /// Weighting actually applied: `alpha` with the bias on, 1 otherwise.
    pub fn loss_config(&self) -> LossConfig {
        LossConfig {
            alpha: if self.use_bias { self.alpha } else { 1.0 },
        }
    }

    pub fn rmsprop(&self) -> RmspropConfig {
        RmspropConfig {
            learning_rate: self.learning_rate,
            decay: self.rho,
            epsilon: self.epsilon,
        }
    }
}

/// One line of the training log.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub mean_loss: f64,
    pub train: ExtractionScore,
}

/// Final checkpoint plus the per-epoch history.
#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub history: Vec<EpochMetrics>,
}

/// Character ids and gold tags of a sentence, computed once.
pub struct Encoded {
    pub chars: Vec<char>,
    pub gold: Vec<usize>,
}

pub fn encode_corpus(corpus: &[Sentence], scheme: &TagScheme) -> Result<Vec<Encoded>> {
    corpus
        .iter()
        .map(|s| {
            let chars = s.chars();
            let gold = encode_tags(chars.len(), &s.triples, scheme)?;
            Ok(Encoded { chars, gold })
        })
        .collect()
}

/// Loss of one sentence with gradients accumulated into the model's store.
pub fn accumulate_sentence(model: &mut Model, item: &Encoded, loss: LossConfig) -> Result<f64> {
    let mut g = Graph::new();
    let f = model.forward(&mut g, &item.chars)?;
    let l = biased_loss(&mut g, f.probs, &item.gold, loss, &model.scheme)?;
    let value = g.value(l)[0];
    if value.is_finite() {
        g.backward(l, &mut model.params)?;
    }
    Ok(value)
}

/// Trains a fresh model on `corpus`.
///
/// Each epoch shuffles with the seeded generator, sums per-sentence losses
/// over `batch_size` sentences, and takes one RMSprop step per batch.
pub fn train(
    corpus: &[Sentence],
    relations: Vec<String>,
    lexicon: Option<WordLexicon>,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if corpus.is_empty() {
        return Err(Error::Contract("training corpus is empty".into()));
    }
    let scheme = TagScheme::new(relations)?;
    let vocab = CharVocab::build(corpus.iter().map(|s| s.text.as_str()));
    let mut model = Model::new(cfg.model, vocab, scheme, lexicon, cfg.seed)?;
    let items = encode_corpus(corpus, &model.scheme)?;
    let loss_cfg = cfg.loss_config();
    let mut optimiser = RmspropState::new(cfg.rmsprop(), &model.params);
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    shuffle_rng.set_stream(1);
    let mut order: Vec<usize> = (0..items.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut total = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            for &idx in batch {
                let l = accumulate_sentence(&mut model, &items[idx], loss_cfg)?;
                if !l.is_finite() {
                    return Err(Error::NonFiniteLoss {
                        sentence: idx,
                        value: l,
                    });
                }
                total += l;
            }
            optimiser.step(&mut model.params);
        }
        let train_score = evaluate(&model, corpus)?;
        let metrics = EpochMetrics {
            epoch,
            mean_loss: total / items.len() as f64,
            train: train_score,
        };
        info!(
            "epoch {epoch}: mean loss {:.6}, train P {:.4} R {:.4} F1 {:.4}",
            metrics.mean_loss, train_score.precision, train_score.recall, train_score.f1
        );
        history.push(metrics);
    }

    Ok(TrainOutcome {
        checkpoint: Checkpoint {
            train: cfg.clone(),
            model,
        },
        history,
    })
}

/// Tags every sentence, decodes triples and scores them against the gold.
pub fn evaluate(model: &Model, corpus: &[Sentence]) -> Result<ExtractionScore> {
    let mut predicted = Vec::with_capacity(corpus.len());
    for s in corpus {
        predicted.push(model.predict(&s.chars())?.triples);
    }
    let gold: Vec<_> = corpus.iter().map(|s| s.triples.clone()).collect();
    score(&predicted, &gold)
}

/// Writes the history as CSV: `epoch,mean_loss,precision,recall,f1`.
pub fn write_metrics_csv<W: Write>(mut w: W, history: &[EpochMetrics]) -> Result<()> {
    writeln!(w, "epoch,mean_loss,precision,recall,f1")?;
    for m in history {
        writeln!(
            w,
            "{},{:.6},{:.6},{:.6},{:.6}",
            m.epoch, m.mean_loss, m.train.precision, m.train.recall, m.train.f1
        )?;
    }
    Ok(())
}
