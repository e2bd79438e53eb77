use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use sengen::corpus::EOS_ID;
use sengen::generation::{beam_search, sequence_log_prob};
use sengen::model::{sentence_log_likelihood, VocabSupport};
use sengen::numerics::Tensor;
use sengen::{DecoderCell, Dims, Params};

fn model(v: usize, seed: u64, cell: DecoderCell) -> Params {
    let dims = Dims {
        vocab_size: v,
        n_topics: 2,
        embed_dim: 3,
        topic_embed_dim: 2,
        hidden_dim: 4,
        readout_dim: 3,
        doc_hidden_dim: 2,
        enc_hidden_dim: 2,
        cell,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Params::build(&dims, &mut |_, shape| Ok(Tensor::uniform(shape, 2.0, &mut rng))).unwrap()
}

fn cell(gru: bool) -> DecoderCell {
    if gru {
        DecoderCell::Gru
    } else {
        DecoderCell::Elman
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn wider_beams_never_score_lower(v in 3usize..=5, max_len in 1usize..=4, seed in any::<u64>(), gru in any::<bool>(), topic in 0usize..2) {
        let p = model(v, seed, cell(gru));
        let mut previous = f64::NEG_INFINITY;
        for width in 1..=v.pow(max_len as u32) {
            let r = beam_search(&p.model, topic, width, max_len).unwrap();
            prop_assert!(r.score >= previous - 1e-12, "width {} scored {} < {}", width, r.score, previous);
            previous = r.score;
        }
    }

    #[test]
    fn results_are_closed_or_full_length(v in 3usize..=8, max_len in 1usize..=7, width in 1usize..=6, seed in any::<u64>(), gru in any::<bool>()) {
        let p = model(v, seed, cell(gru));
        let r = beam_search(&p.model, 1, width, max_len).unwrap();
        prop_assert!(!r.tokens.is_empty() && r.tokens.len() <= max_len);
        let closed = r.tokens.last() == Some(&EOS_ID);
        prop_assert!(closed || r.tokens.len() == max_len);
        prop_assert!(r.tokens[..r.tokens.len() - 1].iter().all(|&w| w != EOS_ID));
        let check = if closed {
            sentence_log_likelihood(&p.model, &r.tokens, 1, &VocabSupport::full(v)).unwrap()
        } else {
            sequence_log_prob(&p.model, &r.tokens, 1).unwrap()
        };
        prop_assert!((r.score - check).abs() < 1e-9);
    }
}
