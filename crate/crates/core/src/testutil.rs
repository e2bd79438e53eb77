#[path = "../tests/common/reference.rs"]
pub mod reference;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::params::{DecoderCell, Dims, Params};

pub(crate) fn toy_dims(cell: DecoderCell) -> Dims {
    Dims {
        vocab_size: 6,
        n_topics: 2,
        embed_dim: 4,
        topic_embed_dim: 4,
        hidden_dim: 3,
        readout_dim: 3,
        doc_hidden_dim: 3,
        enc_hidden_dim: 3,
        cell,
    }
}

/// Every tensor, biases included, uniform in `[-scale, scale]`.
pub(crate) fn random_params(dims: Dims, scale: f64, seed: u64) -> Params {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Params::build(&dims, &mut |_, shape| {
        Ok(crate::numerics::Tensor::uniform(shape, scale, &mut rng))
    })
    .unwrap()
}

/// Vocabulary `<unk> <eos> w2 .. w{size-1}` with unit counts.
pub(crate) fn toy_vocab(size: usize) -> std::sync::Arc<crate::corpus::Vocabulary> {
    let mut tokens = vec![crate::corpus::UNK.to_string(), crate::corpus::EOS.to_string()];
    tokens.extend((2..size).map(|i| format!("w{i}")));
    std::sync::Arc::new(crate::corpus::Vocabulary::from_counts(tokens, vec![1; size]).unwrap())
}

pub(crate) fn toy_corpus(size: usize, docs: &[(&str, Vec<Vec<usize>>)]) -> crate::corpus::Corpus {
    crate::corpus::Corpus {
        documents: docs
            .iter()
            .map(|(id, s)| crate::corpus::Document::new(*id, s.clone()).unwrap())
            .collect(),
        split: crate::corpus::Split::Test,
        vocabulary: toy_vocab(size),
    }
}
