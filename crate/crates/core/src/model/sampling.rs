use rand::Rng;
use rand_distr::StandardNormal;

use super::{decoder_init, decoder_step, ModelParams, VocabSupport};
use crate::corpus::{Document, EOS_ID};
use crate::error::{Error, Result};
use crate::numerics::{softmax, Tensor};

/// Index drawn from the distribution whose log-probabilities are `logp`.
pub fn sample_categorical<R: Rng + ?Sized>(logp: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, &l) in logp.iter().enumerate() {
        let p = l.exp();
        if p > 0.0 {
            last_positive = i;
        }
        acc += p;
        if u < acc {
            return i;
        }
    }
    last_positive
}

/// Draws words from the decoder until `<eos>` or `max_len` words.
pub fn sample_sentence<R: Rng + ?Sized>(
    params: &ModelParams<Tensor>,
    topic: usize,
    max_len: usize,
    rng: &mut R,
) -> Result<Vec<usize>> {
    if max_len == 0 {
        return Err(Error::InvalidArgument("max_len must be positive".into()));
    }
    let support = VocabSupport::full(params.emb.rows());
    let mut state = decoder_init(params, topic)?;
    let mut words = Vec::new();
    while words.len() < max_len {
        let (mut next, logp) = decoder_step(params, &state, &support)?;
        let w = sample_categorical(&logp, rng);
        words.push(w);
        if w == EOS_ID {
            break;
        }
        next.feed(w);
        state = next;
    }
    Ok(words)
}

/// `n` sentence topics drawn i.i.d. from `softmax(theta)`.
pub fn sample_topics<R: Rng + ?Sized>(theta: &[f64], n: usize, rng: &mut R) -> Vec<usize> {
    let logp: Vec<f64> = softmax(theta).iter().map(|p| p.ln()).collect();
    (0..n).map(|_| sample_categorical(&logp, rng)).collect()
}

/// A sampled document together with the latent variables that produced it.
#[derive(Clone, Debug, PartialEq)]
pub struct SampledDocument {
    pub document: Document,
    pub theta: Vec<f64>,
    pub topics: Vec<usize>,
}

/// Ancestral sampling: `theta ~ N(0, I)`, one topic per sentence from
/// `softmax(theta)`, then words from that topic's decoder.
///
/// Sentences that reach `max_len` without `<eos>` are cut to `max_len - 1`
/// words and closed with `<eos>`.
pub fn sample_document<R: Rng + ?Sized>(
    params: &ModelParams<Tensor>,
    n_sentences: usize,
    max_len: usize,
    rng: &mut R,
) -> Result<SampledDocument> {
    let theta: Vec<f64> = (0..params.n_topics())
        .map(|_| rng.sample(StandardNormal))
        .collect();
    sample_document_with_theta(params, theta, n_sentences, max_len, rng)
}

pub fn sample_document_with_theta<R: Rng + ?Sized>(
    params: &ModelParams<Tensor>,
    theta: Vec<f64>,
    n_sentences: usize,
    max_len: usize,
    rng: &mut R,
) -> Result<SampledDocument> {
    if n_sentences == 0 {
        return Err(Error::InvalidArgument("n_sentences must be positive".into()));
    }
    if theta.len() != params.n_topics() {
        return Err(Error::LengthMismatch(theta.len(), params.n_topics()));
    }
    let topics = sample_topics(&theta, n_sentences, rng);
    let mut sentences = Vec::with_capacity(n_sentences);
    for &z in &topics {
        let mut words = if max_len >= 2 {
            sample_sentence(params, z, max_len - 1, rng)?
        } else {
            Vec::new()
        };
        if words.last() != Some(&EOS_ID) {
            words.push(EOS_ID);
        }
        sentences.push(words);
    }
    Ok(SampledDocument {
        document: Document::new("sampled", sentences)?,
        theta,
        topics,
    })
}
