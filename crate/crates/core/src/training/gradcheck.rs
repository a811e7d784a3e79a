//! End-to-end comparison of backpropagated gradients against central
//! finite differences on a toy model.

use serde::Serialize;

use super::loss::{biased_loss, LossConfig};
use super::model::{Model, ModelConfig};
use super::train::{encode_corpus, Encoded};
use crate::corpus::Sentence;
use crate::embed::{CharVocab, WordLexicon};
use crate::error::Result;
use crate::numerics::{finite_diff_grad, max_relative_error, Graph};
use crate::tagging::{Span, TagScheme, Triple};

/// Denominator floor of the relative error. With `h = 1e-5` and a toy loss
/// near 50, rounding alone moves a central difference by about 1e-9, so
/// gradients much smaller than 1e-5 cannot be resolved to 1e-4 relative.
pub const ERROR_FLOOR: f64 = 1e-5;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradcheckConfig {
    pub char_dim: usize,
    pub encoder_dim: usize,
    pub decoder_dim: usize,
    pub word_dim: usize,
    pub alpha: f64,
    pub step: f64,
    pub tolerance: f64,
    pub seed: u64,
}

impl Default for GradcheckConfig {
    fn default() -> Self {
        Self {
            char_dim: 4,
            encoder_dim: 4,
            decoder_dim: 8,
            word_dim: 3,
            alpha: 3.0,
            step: 1e-5,
            tolerance: 1e-4,
            seed: 0,
        }
    }
}

/// Worst relative error within one parameter tensor.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GroupCheck {
    pub name: String,
    pub count: usize,
    pub max_relative_error: f64,
}

impl GroupCheck {
    pub fn passes(&self, tolerance: f64) -> bool {
        self.max_relative_error < tolerance
    }
}

/// Two short sentences over one relation, so `k = 9`.
pub fn toy_corpus() -> (Vec<Sentence>, Vec<String>, WordLexicon) {
    let first: Vec<char> = "甲乙在丙丁".chars().collect();
    let second: Vec<char> = "丙在甲乙".chars().collect();
    let sentences = vec![
        Sentence {
            text: first.iter().collect(),
            triples: vec![Triple::from_spans(&first, Span::new(0, 2), "r", Span::new(3, 5))],
        },
        Sentence {
            text: second.iter().collect(),
            triples: vec![Triple::from_spans(&second, Span::new(0, 1), "r", Span::new(2, 4))],
        },
    ];
    let lexicon = WordLexicon::from_entries(
        3,
        vec![
            ("甲乙".to_string(), vec![0.3, -0.2, 0.5]),
            ("丙丁".to_string(), vec![-0.4, 0.1, 0.2]),
        ],
    )
    .expect("consistent toy vectors");
    (sentences, vec!["r".to_string()], lexicon)
}

/// Builds the toy model and its encoded sentences.
pub fn toy_model(cfg: &GradcheckConfig) -> Result<(Model, Vec<Encoded>)> {
    let (sentences, relations, lexicon) = toy_corpus();
    let lexicon = if cfg.word_dim == lexicon.dim() {
        lexicon
    } else {
        let entries = lexicon
            .words()
            .iter()
            .enumerate()
            .map(|(i, w)| {
                let v = (0..cfg.word_dim).map(|j| ((i * 7 + j * 3) % 5) as f64 * 0.1 - 0.2);
                (w.clone(), v.collect())
            })
            .collect();
        WordLexicon::from_entries(cfg.word_dim, entries)?
    };
    let vocab = CharVocab::build(sentences.iter().map(|s| s.text.as_str()));
    let scheme = TagScheme::new(relations)?;
    let model_cfg = ModelConfig {
        char_dim: cfg.char_dim,
        encoder_dim: cfg.encoder_dim,
        decoder_dim: cfg.decoder_dim,
        use_word_mixing: true,
        use_attention: true,
    };
    let model = Model::new(model_cfg, vocab, scheme, Some(lexicon), cfg.seed)?;
    let items = encode_corpus(&sentences, &model.scheme)?;
    Ok((model, items))
}

/// Summed biased loss over `items`.
pub fn batch_loss(model: &Model, items: &[Encoded], loss: LossConfig) -> Result<f64> {
    let mut total = 0.0;
    for item in items {
        let mut g = Graph::new();
        let f = model.forward(&mut g, &item.chars)?;
        let l = biased_loss(&mut g, f.probs, &item.gold, loss, &model.scheme)?;
        total += g.value(l)[0];
    }
    Ok(total)
}

/// Compares every parameter tensor's analytic gradient with finite
/// differences. `negate` flips the analytic gradient of the named tensor,
/// which lets callers confirm that a broken gradient is caught.
pub fn check_gradients(
    model: &mut Model,
    items: &[Encoded],
    loss: LossConfig,
    step: f64,
    negate: Option<&str>,
) -> Result<Vec<GroupCheck>> {
    model.params.zero_grad();
    for item in items {
        let mut g = Graph::new();
        let f = model.forward(&mut g, &item.chars)?;
        let l = biased_loss(&mut g, f.probs, &item.gold, loss, &model.scheme)?;
        g.backward(l, &mut model.params)?;
    }
    let ids: Vec<_> = model.params.ids().collect();
    let mut report = Vec::with_capacity(ids.len());
    for id in ids {
        let name = model.params.name(id).to_string();
        let mut analytic = model.params.get(id).grad().to_vec();
        if negate == Some(name.as_str()) {
            analytic.iter_mut().for_each(|a| *a = -*a);
        }
        let theta = model.params.get(id).clone();
        let mut failure = None;
        let numeric = finite_diff_grad(
            |t| {
                model.params.get_mut(id).data_mut().copy_from_slice(t.data());
                batch_loss(model, items, loss).unwrap_or_else(|e| {
                    failure.get_or_insert(e);
                    f64::NAN
                })
            },
            &theta,
            step,
        );
        model.params.get_mut(id).data_mut().copy_from_slice(theta.data());
        if let Some(e) = failure {
            return Err(e);
        }
        report.push(GroupCheck {
            name,
            count: analytic.len(),
            max_relative_error: max_relative_error(&analytic, numeric.data(), ERROR_FLOOR),
        });
    }
    model.params.zero_grad();
    Ok(report)
}

/// Builds the toy model from `cfg` and checks all of its gradients.
pub fn run_gradcheck(cfg: &GradcheckConfig, negate: Option<&str>) -> Result<Vec<GroupCheck>> {
    let (mut model, items) = toy_model(cfg)?;
    let loss = LossConfig::new(cfg.alpha)?;
    check_gradients(&mut model, &items, loss, cfg.step, negate)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toy_model_has_nine_tags_and_short_sentences() {
        let (model, items) = toy_model(&GradcheckConfig::default()).unwrap();
        assert_eq!(model.scheme.len(), 9);
        assert_eq!(items.len(), 2);
        assert!(items.iter().all(|i| i.chars.len() <= 6));
    }

    #[test]
    fn all_groups_pass_and_negation_is_caught() {
        let cfg = GradcheckConfig::default();
        let report = run_gradcheck(&cfg, None).unwrap();
        for g in &report {
            assert!(g.passes(cfg.tolerance), "{g:?}");
        }
        let broken = run_gradcheck(&cfg, Some("decoder.W_Y")).unwrap();
        let bad: Vec<_> = broken.iter().filter(|g| !g.passes(cfg.tolerance)).collect();
        assert_eq!(bad.len(), 1);
        assert_eq!(bad[0].name, "decoder.W_Y");
    }
}
