//! Representative sentences per topic: beam search for a high-probability
//! sequence and ancestral sampling from the decoder.

use std::cmp::Ordering;
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::corpus::{Vocabulary, EOS_ID};
use crate::error::{Error, Result};
use crate::model::{decoder_init, decoder_step, sample_sentence, DecoderState, ModelParams, VocabSupport};
use crate::numerics::Tensor;

pub const DEFAULT_MAX_LEN: usize = 30;
pub const DEFAULT_BEAM_WIDTH: usize = 5;

#[derive(Clone, Debug)]
struct Hypothesis {
    tokens: Vec<usize>,
    score: f64,
    /// `None` once the hypothesis has emitted `<eos>`.
    state: Option<DecoderState>,
}

/// Higher score first, then the lexicographically smaller sequence, then
/// the shorter one.
fn rank(a: &[usize], sa: f64, b: &[usize], sb: f64) -> Ordering {
    sb.total_cmp(&sa).then_with(|| a.cmp(b))
}

/// Parent index, appended word (`None` carries a finished hypothesis over) and score.
type Candidate = (usize, Option<usize>, f64);

/// Sequence and total log-probability found by beam search.
#[derive(Clone, Debug, PartialEq)]
pub struct BeamResult {
    pub tokens: Vec<usize>,
    pub score: f64,
}

/// Length-capped beam search over the full-vocabulary decoder
/// distribution of `topic`.
///
/// Finished hypotheses stay in the beam unchanged and compete with the live
/// ones on raw cumulative log-probability. The search ends when every
/// hypothesis in the beam has finished or after `max_len` words.
pub fn beam_search(params: &ModelParams<Tensor>, topic: usize, width: usize, max_len: usize) -> Result<BeamResult> {
    if width == 0 || max_len == 0 {
        return Err(Error::InvalidArgument("beam width and max_len must be positive".into()));
    }
    let support = VocabSupport::full(params.emb.rows());
    let mut beam = vec![Hypothesis {
        tokens: Vec::new(),
        score: 0.0,
        state: Some(decoder_init(params, topic)?),
    }];
    for _ in 0..max_len {
        if beam.iter().all(|h| h.state.is_none()) {
            break;
        }
        let mut candidates: Vec<Candidate> = Vec::new();
        let mut next_states = Vec::with_capacity(beam.len());
        for (i, hyp) in beam.iter().enumerate() {
            match &hyp.state {
                None => {
                    candidates.push((i, None, hyp.score));
                    next_states.push(None);
                }
                Some(state) => {
                    let (next, logp) = decoder_step(params, state, &support)?;
                    for (w, lp) in logp.iter().enumerate() {
                        candidates.push((i, Some(w), hyp.score + lp));
                    }
                    next_states.push(Some(next));
                }
            }
        }
        let tokens_of = |c: &Candidate| -> Vec<usize> {
            let mut t = beam[c.0].tokens.clone();
            t.extend(c.1);
            t
        };
        let mut keyed: Vec<(Vec<usize>, Candidate)> =
            candidates.into_iter().map(|c| (tokens_of(&c), c)).collect();
        keyed.sort_by(|a, b| rank(&a.0, a.1 .2, &b.0, b.1 .2).then(a.0.len().cmp(&b.0.len())));
        keyed.truncate(width);
        beam = keyed
            .into_iter()
            .map(|(tokens, (parent, word, score))| {
                let state = match word {
                    Some(EOS_ID) | None => None,
                    Some(w) => {
                        let mut s = next_states[parent].clone().expect("live parent");
                        s.feed(w);
                        Some(s)
                    }
                };
                Hypothesis { tokens, score, state }
            })
            .collect();
    }
    let best = beam
        .into_iter()
        .min_by(|a, b| rank(&a.tokens, a.score, &b.tokens, b.score).then(a.tokens.len().cmp(&b.tokens.len())))
        .expect("beam is never empty");
    Ok(BeamResult {
        tokens: best.tokens,
        score: best.score,
    })
}

/// Log-probability of a token prefix under teacher forcing; unlike the
/// sentence likelihood it does not require a final `<eos>`.
pub fn sequence_log_prob(params: &ModelParams<Tensor>, tokens: &[usize], topic: usize) -> Result<f64> {
    let support = VocabSupport::full(params.emb.rows());
    let mut state = decoder_init(params, topic)?;
    let mut total = 0.0;
    for &w in tokens {
        let (mut next, logp) = decoder_step(params, &state, &support)?;
        total += *logp.get(w).ok_or(Error::TokenOutOfRange { id: w, size: logp.len() })?;
        next.feed(w);
        state = next;
    }
    Ok(total)
}

/// Draws words from the decoder until `<eos>` or `max_len` words.
pub fn stochastic_sample<R: Rng + ?Sized>(
    params: &ModelParams<Tensor>,
    topic: usize,
    max_len: usize,
    rng: &mut R,
) -> Result<Vec<usize>> {
    sample_sentence(params, topic, max_len, rng)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GenerateOptions {
    /// Topics to describe; `None` means all of them.
    pub topics: Option<Vec<usize>>,
    pub beam_width: usize,
    pub samples: usize,
    pub max_len: usize,
    pub seed: u64,
}

impl Default for GenerateOptions {
    fn default() -> Self {
        Self {
            topics: None,
            beam_width: DEFAULT_BEAM_WIDTH,
            samples: 3,
            max_len: DEFAULT_MAX_LEN,
            seed: 0,
        }
    }
}

/// One `TOPIC k` block per requested topic: the beam-search sentence and
/// `samples` sampled ones. Topic `k` samples from its own random stream, so
/// a block does not depend on which other topics were requested.
pub fn topic_report(params: &ModelParams<Tensor>, vocab: &Vocabulary, opts: &GenerateOptions) -> Result<String> {
    if vocab.len() != params.emb.rows() {
        return Err(Error::LengthMismatch(vocab.len(), params.emb.rows()));
    }
    let topics: Vec<usize> = match &opts.topics {
        Some(t) => t.clone(),
        None => (0..params.n_topics()).collect(),
    };
    let blocks: Vec<String> = topics
        .par_iter()
        .map(|&k| {
            let best = beam_search(params, k, opts.beam_width, opts.max_len)?;
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
            rng.set_stream(k as u64);
            let mut block = String::new();
            writeln!(block, "TOPIC {k}").unwrap();
            writeln!(block, "BEST\t{}\t{}", best.score, vocab.detokenize(&best.tokens)).unwrap();
            for i in 1..=opts.samples {
                let s = stochastic_sample(params, k, opts.max_len, &mut rng)?;
                writeln!(block, "SAMPLE {i}\t{}", vocab.detokenize(&s)).unwrap();
            }
            Ok(block)
        })
        .collect::<Result<_>>()?;
    Ok(blocks.join("\n"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::sentence_log_likelihood;
    use crate::params::{DecoderCell, Dims, Params};
    use crate::testutil::{random_params, toy_dims, toy_vocab};

    fn small(vocab_size: usize, seed: u64, scale: f64) -> Params {
        let dims = Dims {
            vocab_size,
            ..toy_dims(DecoderCell::Elman)
        };
        random_params(dims, scale, seed)
    }

    /// Every sequence that ends in `<eos>` within `max_len` words or has
    /// exactly `max_len` words without one.
    fn all_sequences(v: usize, max_len: usize) -> Vec<Vec<usize>> {
        let mut out = Vec::new();
        let mut frontier = vec![Vec::new()];
        for len in 1..=max_len {
            let mut next = Vec::new();
            for prefix in &frontier {
                for w in 0..v {
                    let mut s: Vec<usize> = prefix.clone();
                    s.push(w);
                    if w == EOS_ID || len == max_len {
                        out.push(s);
                    } else {
                        next.push(s);
                    }
                }
            }
            frontier = next;
        }
        out
    }

    fn exhaustive(params: &Params, topic: usize, max_len: usize) -> BeamResult {
        all_sequences(params.model.emb.rows(), max_len)
            .into_iter()
            .map(|s| {
                let score = sequence_log_prob(&params.model, &s, topic).unwrap();
                BeamResult { tokens: s, score }
            })
            .min_by(|a, b| rank(&a.tokens, a.score, &b.tokens, b.score).then(a.tokens.len().cmp(&b.tokens.len())))
            .unwrap()
    }

    #[test]
    fn width_one_is_greedy() {
        let p = small(6, 3, 1.5);
        let support = VocabSupport::full(6);
        let mut state = decoder_init(&p.model, 0).unwrap();
        let mut greedy = Vec::new();
        for _ in 0..6 {
            let (mut next, logp) = decoder_step(&p.model, &state, &support).unwrap();
            let w = (0..6).max_by(|&a, &b| logp[a].total_cmp(&logp[b]).then(b.cmp(&a))).unwrap();
            greedy.push(w);
            if w == EOS_ID {
                break;
            }
            next.feed(w);
            state = next;
        }
        assert_eq!(beam_search(&p.model, 0, 1, 6).unwrap().tokens, greedy);
    }

    #[test]
    fn full_width_matches_exhaustive_search() {
        for seed in 0..5 {
            let p = small(3, seed, 2.0);
            for topic in 0..2 {
                let got = beam_search(&p.model, topic, 27, 3).unwrap();
                let want = exhaustive(&p, topic, 3);
                assert_eq!(got.tokens, want.tokens);
                assert!((got.score - want.score).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn score_is_self_consistent() {
        for seed in 0..6 {
            let p = small(6, seed, 1.2);
            let r = beam_search(&p.model, 1, 5, 8).unwrap();
            assert!(r.tokens.last() == Some(&EOS_ID) || r.tokens.len() == 8);
            let check = if r.tokens.last() == Some(&EOS_ID) {
                sentence_log_likelihood(&p.model, &r.tokens, 1, &VocabSupport::full(6)).unwrap()
            } else {
                sequence_log_prob(&p.model, &r.tokens, 1).unwrap()
            };
            assert!((r.score - check).abs() < 1e-9);
        }
    }

    #[test]
    fn all_mass_on_eos() {
        let mut p = Params::zeros(&toy_dims(DecoderCell::Elman)).unwrap();
        p.model.softmax_b.data_mut()[EOS_ID] = 100.0;
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(stochastic_sample(&p.model, 0, 10, &mut rng).unwrap(), vec![EOS_ID]);
        assert_eq!(beam_search(&p.model, 0, 5, 10).unwrap().tokens, vec![EOS_ID]);
    }

    #[test]
    fn errors() {
        let p = small(6, 1, 1.0);
        assert!(matches!(beam_search(&p.model, 2, 5, 5), Err(Error::TopicOutOfRange { .. })));
        assert!(beam_search(&p.model, 0, 0, 5).is_err());
        assert!(beam_search(&p.model, 0, 5, 0).is_err());
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(stochastic_sample(&p.model, 3, 5, &mut rng).is_err());
        assert!(stochastic_sample(&p.model, 0, 0, &mut rng).is_err());
    }

    #[test]
    fn first_word_frequencies() {
        let p = small(6, 4, 1.0);
        let (_, logp) = decoder_step(&p.model, &decoder_init(&p.model, 1).unwrap(), &VocabSupport::full(6)).unwrap();
        let n = 50_000;
        let mut counts = [0usize; 6];
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for _ in 0..n {
            counts[stochastic_sample(&p.model, 1, 1, &mut rng).unwrap()[0]] += 1;
        }
        for w in 0..6 {
            let prob = logp[w].exp();
            let se = (prob * (1.0 - prob) / n as f64).sqrt();
            let f = counts[w] as f64 / n as f64;
            assert!((f - prob).abs() < 3.0 * se, "word {w}: {f} vs {prob}");
        }
    }

    #[test]
    fn report_layout() {
        let p = small(6, 2, 1.0);
        let vocab = toy_vocab(6);
        let opts = GenerateOptions {
            topics: Some(vec![1]),
            samples: 2,
            max_len: 6,
            seed: 3,
            ..GenerateOptions::default()
        };
        let text = topic_report(&p.model, &vocab, &opts).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 4);
        assert_eq!(lines[0], "TOPIC 1");
        assert!(lines[1].starts_with("BEST\t"));
        assert!(lines[2].starts_with("SAMPLE 1\t") && lines[3].starts_with("SAMPLE 2\t"));
        assert_eq!(text, topic_report(&p.model, &vocab, &opts).unwrap());

        let both = topic_report(&p.model, &vocab, &GenerateOptions { topics: None, ..opts.clone() }).unwrap();
        assert!(both.starts_with("TOPIC 0\n"));
        assert!(both.ends_with(&text));
    }
}
