//! Generative side: topic embeddings, the topic-conditioned recurrent word
//! decoder, sentence likelihoods and ancestral sampling of documents.
//!
//! All topics share the recurrent and readout weights; only the output
//! softmax matrix `softmax_w[k]` is topic specific. The softmax bias is
//! shared.

pub mod checkpoint;
mod decoder;
mod sampling;

pub use decoder::{
    decoder_init, decoder_step, sentence_log_likelihood, sentence_log_likelihood_graph,
    DecoderState, TopicContext,
};
pub use sampling::{
    sample_categorical, sample_document, sample_document_with_theta, sample_sentence,
    sample_topics, SampledDocument,
};

use crate::error::{Error, Result};
use crate::params::{DecoderCell, Dims};

/// Update and reset gates of the optional GRU decoder cell.
#[derive(Clone, Debug, PartialEq)]
pub struct GruGates<T> {
    pub update_h: T,
    pub update_e: T,
    pub update_c: T,
    pub update_b: T,
    pub reset_h: T,
    pub reset_e: T,
    pub reset_c: T,
    pub reset_b: T,
}

/// Decoder weights. `emb` is also read by both encoders.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams<T> {
    /// `[|V| x E]`
    pub emb: T,
    /// `[K x E_z]`
    pub topic_emb: T,
    /// `[H x H]`
    pub w_h: T,
    /// `[H x E]`
    pub w_e: T,
    /// `[H x E_z]`
    pub w_c: T,
    /// `[H]`
    pub b: T,
    pub gates: Option<GruGates<T>>,
    /// `[R x H]`
    pub readout_h: T,
    /// `[R x E]`
    pub readout_e: T,
    /// `[R x E_z]`
    pub readout_c: T,
    /// `[R]`
    pub readout_b: T,
    /// One `[|V| x R]` matrix per topic.
    pub softmax_w: Vec<T>,
    /// `[|V|]`
    pub softmax_b: T,
}

impl<T> ModelParams<T> {
    pub(crate) fn build(
        d: &Dims,
        f: &mut impl FnMut(&str, &[usize]) -> Result<T>,
    ) -> Result<Self> {
        let (v, e, ez, h, r) = (
            d.vocab_size,
            d.embed_dim,
            d.topic_embed_dim,
            d.hidden_dim,
            d.readout_dim,
        );
        Ok(ModelParams {
            emb: f("emb", &[v, e])?,
            topic_emb: f("topic_emb", &[d.n_topics, ez])?,
            w_h: f("dec.w_h", &[h, h])?,
            w_e: f("dec.w_e", &[h, e])?,
            w_c: f("dec.w_c", &[h, ez])?,
            b: f("dec.b", &[h])?,
            gates: match d.cell {
                DecoderCell::Elman => None,
                DecoderCell::Gru => Some(GruGates {
                    update_h: f("dec.update.w_h", &[h, h])?,
                    update_e: f("dec.update.w_e", &[h, e])?,
                    update_c: f("dec.update.w_c", &[h, ez])?,
                    update_b: f("dec.update.b", &[h])?,
                    reset_h: f("dec.reset.w_h", &[h, h])?,
                    reset_e: f("dec.reset.w_e", &[h, e])?,
                    reset_c: f("dec.reset.w_c", &[h, ez])?,
                    reset_b: f("dec.reset.b", &[h])?,
                }),
            },
            readout_h: f("readout.w_h", &[r, h])?,
            readout_e: f("readout.w_e", &[r, e])?,
            readout_c: f("readout.w_c", &[r, ez])?,
            readout_b: f("readout.b", &[r])?,
            softmax_w: (0..d.n_topics)
                .map(|k| f(&format!("softmax.w.{k}"), &[v, r]))
                .collect::<Result<_>>()?,
            softmax_b: f("softmax.b", &[v])?,
        })
    }

    pub fn map_named<'s, U>(&'s self, f: &mut impl FnMut(&str, &'s T) -> U) -> ModelParams<U> {
        ModelParams {
            emb: f("emb", &self.emb),
            topic_emb: f("topic_emb", &self.topic_emb),
            w_h: f("dec.w_h", &self.w_h),
            w_e: f("dec.w_e", &self.w_e),
            w_c: f("dec.w_c", &self.w_c),
            b: f("dec.b", &self.b),
            gates: self.gates.as_ref().map(|g| GruGates {
                update_h: f("dec.update.w_h", &g.update_h),
                update_e: f("dec.update.w_e", &g.update_e),
                update_c: f("dec.update.w_c", &g.update_c),
                update_b: f("dec.update.b", &g.update_b),
                reset_h: f("dec.reset.w_h", &g.reset_h),
                reset_e: f("dec.reset.w_e", &g.reset_e),
                reset_c: f("dec.reset.w_c", &g.reset_c),
                reset_b: f("dec.reset.b", &g.reset_b),
            }),
            readout_h: f("readout.w_h", &self.readout_h),
            readout_e: f("readout.w_e", &self.readout_e),
            readout_c: f("readout.w_c", &self.readout_c),
            readout_b: f("readout.b", &self.readout_b),
            softmax_w: self
                .softmax_w
                .iter()
                .enumerate()
                .map(|(k, t)| f(&format!("softmax.w.{k}"), t))
                .collect(),
            softmax_b: f("softmax.b", &self.softmax_b),
        }
    }

    pub fn for_each_mut<'s>(&'s mut self, f: &mut impl FnMut(&str, &'s mut T)) {
        f("emb", &mut self.emb);
        f("topic_emb", &mut self.topic_emb);
        f("dec.w_h", &mut self.w_h);
        f("dec.w_e", &mut self.w_e);
        f("dec.w_c", &mut self.w_c);
        f("dec.b", &mut self.b);
        if let Some(g) = self.gates.as_mut() {
            f("dec.update.w_h", &mut g.update_h);
            f("dec.update.w_e", &mut g.update_e);
            f("dec.update.w_c", &mut g.update_c);
            f("dec.update.b", &mut g.update_b);
            f("dec.reset.w_h", &mut g.reset_h);
            f("dec.reset.w_e", &mut g.reset_e);
            f("dec.reset.w_c", &mut g.reset_c);
            f("dec.reset.b", &mut g.reset_b);
        }
        f("readout.w_h", &mut self.readout_h);
        f("readout.w_e", &mut self.readout_e);
        f("readout.w_c", &mut self.readout_c);
        f("readout.b", &mut self.readout_b);
        for (k, t) in self.softmax_w.iter_mut().enumerate() {
            f(&format!("softmax.w.{k}"), t);
        }
        f("softmax.b", &mut self.softmax_b);
    }

    pub fn n_topics(&self) -> usize {
        self.softmax_w.len()
    }

    pub(crate) fn check_topic(&self, topic: usize) -> Result<()> {
        if topic >= self.n_topics() {
            return Err(Error::TopicOutOfRange {
                topic,
                n_topics: self.n_topics(),
            });
        }
        Ok(())
    }
}

/// Set of word ids over which the decoder softmax is normalized.
///
/// Ids are kept sorted; `position` maps a word id to its slot in the
/// restricted distribution.
#[derive(Clone, Debug, PartialEq)]
pub struct VocabSupport {
    vocab_size: usize,
    ids: Option<Vec<usize>>,
    positions: Vec<u32>,
}

impl VocabSupport {
    pub fn full(vocab_size: usize) -> Self {
        Self {
            vocab_size,
            ids: None,
            positions: Vec::new(),
        }
    }

    /// Restricted support; duplicates are removed and ids sorted.
    pub fn subset(vocab_size: usize, ids: impl IntoIterator<Item = usize>) -> Result<Self> {
        let mut ids: Vec<usize> = ids.into_iter().collect();
        ids.sort_unstable();
        ids.dedup();
        if ids.is_empty() {
            return Err(Error::InvalidArgument("empty vocabulary support".into()));
        }
        if let Some(&bad) = ids.iter().find(|&&i| i >= vocab_size) {
            return Err(Error::TokenOutOfRange {
                id: bad,
                size: vocab_size,
            });
        }
        if ids.len() == vocab_size {
            return Ok(Self::full(vocab_size));
        }
        let mut positions = vec![u32::MAX; vocab_size];
        for (p, &i) in ids.iter().enumerate() {
            positions[i] = p as u32;
        }
        Ok(Self {
            vocab_size,
            ids: Some(ids),
            positions,
        })
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn len(&self) -> usize {
        self.ids.as_ref().map_or(self.vocab_size, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_full(&self) -> bool {
        self.ids.is_none()
    }

    /// The restricted ids, or `None` for the full vocabulary.
    pub fn ids(&self) -> Option<&[usize]> {
        self.ids.as_deref()
    }

    pub fn position(&self, word: usize) -> Option<usize> {
        match &self.ids {
            None => (word < self.vocab_size).then_some(word),
            Some(_) => match self.positions.get(word) {
                Some(&p) if p != u32::MAX => Some(p as usize),
                _ => None,
            },
        }
    }

    pub fn contains(&self, word: usize) -> bool {
        self.position(word).is_some()
    }

    /// Word id at a slot of the restricted distribution.
    pub fn word_at(&self, position: usize) -> usize {
        self.ids.as_ref().map_or(position, |ids| ids[position])
    }
}
