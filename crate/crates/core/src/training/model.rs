use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::attention::{attend, AttnParams};
use crate::decoder::{decode_sequence, DecoderParams};
use crate::embed::{char_embed, mix_embed, CharVocab, EmbedParams, WordLexicon};
use crate::encoder::{encode, BiGruParams};
use crate::error::{Error, Result};
use crate::numerics::{Graph, ParamStore, Tensor, Var};
use crate::tagging::{decode_triples, TagScheme, Triple};

/// Layer sizes and the two architectural ablation switches.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Character embedding width `m`.
    pub char_dim: usize,
    /// Hidden size of each encoder direction.
    pub encoder_dim: usize,
    /// Decoder hidden size.
    pub decoder_dim: usize,
    pub use_word_mixing: bool,
    pub use_attention: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            char_dim: 300,
            encoder_dim: 300,
            decoder_dim: 600,
            use_word_mixing: true,
            use_attention: true,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.char_dim == 0 || self.encoder_dim == 0 || self.decoder_dim == 0 {
            return Err(Error::Contract(format!(
                "all dimensions must be positive, got {}/{}/{}",
                self.char_dim, self.encoder_dim, self.decoder_dim
            )));
        }
        Ok(())
    }
}

/// Where each layer's tensors live inside [`Model::params`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Layout {
    pub embed: EmbedParams,
    pub encoder: BiGruParams,
    pub attention: Option<AttnParams>,
    pub decoder: DecoderParams,
}

/// The full tagger: vocabularies, frozen word vectors and trainable weights.
#[derive(Clone, Debug)]
pub struct Model {
    pub config: ModelConfig,
    pub vocab: CharVocab,
    pub scheme: TagScheme,
    pub lexicon: Option<WordLexicon>,
    pub params: ParamStore,
    pub layout: Layout,
}

/// Recorded forward pass of one sentence.
pub struct Forward {
    pub embedding: Var,
    pub encoded: Var,
    pub attended: Var,
    pub probs: Var,
    pub tag_ids: Vec<usize>,
}

/// Inference result for one sentence.
#[derive(Clone, Debug)]
pub struct Prediction {
    /// `n × k` tag probabilities.
    pub probs: Tensor,
    pub tag_ids: Vec<usize>,
    pub triples: Vec<Triple>,
}

impl Model {
    /// Builds a freshly initialised model. Parameter creation order is fixed,
    /// so equal inputs and seed give identical weights.
    pub fn new(
        config: ModelConfig,
        vocab: CharVocab,
        scheme: TagScheme,
        lexicon: Option<WordLexicon>,
        seed: u64,
    ) -> Result<Self> {
        config.validate()?;
        if config.use_word_mixing && lexicon.is_none() {
            return Err(Error::Contract(
                "word mixing is enabled but no word vectors were supplied".into(),
            ));
        }
        let lexicon = if config.use_word_mixing { lexicon } else { None };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        let embed = EmbedParams::init(
            &mut params,
            vocab.len(),
            config.char_dim,
            lexicon.as_ref().map(WordLexicon::dim),
            &mut rng,
        );
        let encoder = BiGruParams::init(&mut params, config.char_dim, config.encoder_dim, &mut rng);
        let enc_out = encoder.output_dim();
        let attention = config
            .use_attention
            .then(|| AttnParams::init(&mut params, enc_out, enc_out, &mut rng));
        let decoder = DecoderParams::init(
            &mut params,
            enc_out,
            config.decoder_dim,
            scheme.len(),
            &mut rng,
        );
        Ok(Self {
            config,
            vocab,
            scheme,
            lexicon,
            params,
            layout: Layout {
                embed,
                encoder,
                attention,
                decoder,
            },
        })
    }

    /// Embedding layer only: mixed or character-only depending on the config.
    pub fn embed(&self, g: &mut Graph, text: &[char]) -> Result<Var> {
        match (&self.lexicon, self.config.use_word_mixing) {
            (Some(lex), true) => mix_embed(g, &self.params, text, &self.vocab, lex, &self.layout.embed),
            _ => char_embed(g, &self.params, text, &self.vocab, &self.layout.embed),
        }
    }

    /// embed → Bi-GRU → (attention) → label-feedback decoder.
    pub fn forward(&self, g: &mut Graph, text: &[char]) -> Result<Forward> {
        if text.is_empty() {
            return Err(Error::Contract("cannot tag an empty sentence".into()));
        }
        let embedding = self.embed(g, text)?;
        let encoded = encode(g, &self.params, embedding, &self.layout.encoder)?;
        let attended = match &self.layout.attention {
            Some(p) => attend(g, &self.params, encoded, p)?,
            None => encoded,
        };
        let decoded = decode_sequence(g, &self.params, &self.layout.decoder, attended)?;
        Ok(Forward {
            embedding,
            encoded,
            attended,
            probs: decoded.probs,
            tag_ids: decoded.tag_ids,
        })
    }

    pub fn predict(&self, text: &[char]) -> Result<Prediction> {
        let mut g = Graph::new();
        let f = self.forward(&mut g, text)?;
        let triples = decode_triples(&f.tag_ids, text, &self.scheme);
        Ok(Prediction {
            probs: g.tensor(f.probs),
            tag_ids: f.tag_ids,
            triples,
        })
    }
}
