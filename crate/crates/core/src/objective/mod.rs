//! The document-level variational lower bound and the bound-based
//! perplexity used for evaluation.

mod gradcheck;

pub use gradcheck::{
    gradcheck_dims, gradcheck_instance, gradient_check, GRADCHECK_FLOOR, GRADCHECK_STEP,
    GRADCHECK_TOLERANCE,
};

use std::fmt;
use std::io::{self, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::corpus::{Corpus, Document};
use crate::encoder::{encode_document_graph, encode_sentence_graph};
use crate::error::{Error, Result};
use crate::model::{sentence_log_likelihood, sentence_log_likelihood_graph, ModelParams, TopicContext, VocabSupport};
use crate::numerics::{log_softmax, Graph, Tensor, Var};
use crate::params::Params;

/// `KL(N(mu, diag sigma^2) || N(0, I))`.
pub fn kl_gaussian(mu: &[f64], sigma: &[f64]) -> Result<f64> {
    if mu.len() != sigma.len() {
        return Err(Error::LengthMismatch(mu.len(), sigma.len()));
    }
    let mut kl = 0.0;
    for (&m, &s) in mu.iter().zip(sigma) {
        if s.is_nan() || s <= 0.0 {
            return Err(Error::NonPositiveSigma(s));
        }
        kl += 0.5 * (m * m + s * s - 1.0 - 2.0 * s.ln());
    }
    Ok(kl)
}

/// `sum_k q_k log softmax(theta)_k`.
pub fn expected_log_prior(q: &[f64], theta_hat: &[f64]) -> f64 {
    q.iter().zip(log_softmax(theta_hat)).map(|(qk, l)| qk * l).sum()
}

/// Shannon entropy in nats, with `0 log 0 = 0`.
pub fn entropy(q: &[f64]) -> f64 {
    q.iter().filter(|&&p| p > 0.0).map(|p| -p * p.ln()).sum()
}

/// `sum_k q_k log P(sentence | k)`, summing over every topic.
pub fn expected_reconstruction(
    q: &[f64],
    sentence: &[usize],
    model: &ModelParams<Tensor>,
    support: &VocabSupport,
) -> Result<f64> {
    if q.len() != model.n_topics() {
        return Err(Error::LengthMismatch(q.len(), model.n_topics()));
    }
    let mut total = 0.0;
    for (k, &qk) in q.iter().enumerate() {
        total += qk * sentence_log_likelihood(model, sentence, k, support)?;
    }
    Ok(total)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ElboBreakdown {
    pub kl: f64,
    pub expected_log_prior: f64,
    pub entropy: f64,
    pub expected_reconstruction: f64,
    pub elbo: f64,
}

impl ElboBreakdown {
    pub fn from_terms(kl: f64, expected_log_prior: f64, entropy: f64, expected_reconstruction: f64) -> Self {
        Self {
            kl,
            expected_log_prior,
            entropy,
            expected_reconstruction,
            elbo: -kl + expected_log_prior + entropy + expected_reconstruction,
        }
    }
}

/// Graph nodes for the four terms of one document's bound.
#[derive(Clone, Copy, Debug)]
pub struct ElboVars {
    pub kl: Var,
    pub expected_log_prior: Var,
    pub entropy: Var,
    pub expected_reconstruction: Var,
    pub elbo: Var,
}

impl ElboVars {
    pub fn breakdown(&self, g: &Graph<'_>) -> ElboBreakdown {
        ElboBreakdown::from_terms(
            g.scalar(self.kl),
            g.scalar(self.expected_log_prior),
            g.scalar(self.entropy),
            g.scalar(self.expected_reconstruction),
        )
    }
}

/// Builds the single-sample bound of `doc`; one `theta` draw (fixed by
/// `epsilon`) is shared by all sentences.
pub fn elbo_graph(
    g: &mut Graph<'_>,
    p: &Params<Var>,
    doc: &Document,
    epsilon: &[f64],
    support: &VocabSupport,
) -> Result<ElboVars> {
    if doc.sentences.is_empty() {
        return Err(Error::EmptyDocument);
    }
    let words: Vec<usize> = doc.words().collect();
    let post = encode_document_graph(g, &p.encoder, p.model.emb, &words, epsilon)?;

    let mu2 = g.hadamard(post.mu, post.mu)?;
    let s2 = g.hadamard(post.sigma, post.sigma)?;
    let t = g.add(mu2, s2)?;
    let two_ls = g.scale(post.log_sigma, 2.0)?;
    let t = g.sub(t, two_ls)?;
    let t = g.sum(t)?;
    let k = epsilon.len() as f64;
    let offset = g.constant(Tensor::scalar(-k));
    let t = g.add(t, offset)?;
    let kl = g.scale(t, 0.5)?;

    let log_prior = g.log_softmax(post.theta, None)?;
    let contexts: Vec<TopicContext> = (0..p.model.n_topics())
        .map(|k| TopicContext::new(g, &p.model, k))
        .collect::<Result<_>>()?;

    let mut prior_terms = Vec::with_capacity(doc.sentences.len());
    let mut entropy_terms = Vec::with_capacity(doc.sentences.len());
    let mut recon_terms = Vec::new();
    for sentence in &doc.sentences {
        let log_q = encode_sentence_graph(g, &p.encoder, p.model.emb, sentence)?;
        let q = g.exp(log_q)?;
        prior_terms.push(g.dot(q, log_prior)?);
        let neg_h = g.dot(q, log_q)?;
        entropy_terms.push(g.scale(neg_h, -1.0)?);
        for ctx in &contexts {
            let ll = sentence_log_likelihood_graph(g, &p.model, ctx, sentence, support)?;
            let qk = g.pick(q, ctx.topic)?;
            recon_terms.push(g.hadamard(qk, ll)?);
        }
    }
    let expected_log_prior = g.add_all(&prior_terms)?;
    let entropy = g.add_all(&entropy_terms)?;
    let expected_reconstruction = g.add_all(&recon_terms)?;
    let neg_kl = g.scale(kl, -1.0)?;
    let elbo = g.add_all(&[neg_kl, expected_log_prior, entropy, expected_reconstruction])?;
    Ok(ElboVars {
        kl,
        expected_log_prior,
        entropy,
        expected_reconstruction,
        elbo,
    })
}

pub fn document_elbo(
    doc: &Document,
    params: &Params,
    epsilon: &[f64],
    support: &VocabSupport,
) -> Result<ElboBreakdown> {
    let mut g = Graph::new();
    let p = params.bind(&mut g);
    let vars = elbo_graph(&mut g, &p, doc, epsilon, support)?;
    Ok(vars.breakdown(&g))
}

/// The bound together with its gradient with respect to every parameter.
pub fn document_elbo_grad(
    doc: &Document,
    params: &Params,
    epsilon: &[f64],
    support: &VocabSupport,
) -> Result<(ElboBreakdown, Params)> {
    let mut g = Graph::new();
    let p = params.bind(&mut g);
    let vars = elbo_graph(&mut g, &p, doc, epsilon, support)?;
    let breakdown = vars.breakdown(&g);
    let grads = g.backward(vars.elbo)?;
    Ok((breakdown, p.gradients(&grads, params)))
}

/// Noise stream for the document called `doc_id` under `seed`. Keyed by
/// id rather than position, so reordering or repeating documents leaves
/// each one's draws unchanged.
pub fn document_rng(seed: u64, doc_id: &str) -> ChaCha8Rng {
    // FNV-1a
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in doc_id.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(h);
    rng
}

pub fn standard_normal_vec(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

/// Bound estimate for one document.
#[derive(Clone, Debug, PartialEq)]
pub struct DocumentBound {
    pub id: String,
    /// Mean of the single-sample bounds over the noise draws.
    pub elbo: f64,
    /// Token count including every `<eos>`.
    pub n_words: usize,
}

impl DocumentBound {
    pub fn per_word(&self) -> f64 {
        self.elbo / self.n_words as f64
    }
}

/// Full-vocabulary bound of every document, averaged over `n_eps_samples`
/// noise draws from the document's own stream. Runs on the current rayon
/// pool.
pub fn document_bounds(
    corpus: &Corpus,
    params: &Params,
    n_eps_samples: usize,
    seed: u64,
) -> Result<Vec<DocumentBound>> {
    if corpus.documents.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    if n_eps_samples == 0 {
        return Err(Error::InvalidArgument("n_eps_samples must be positive".into()));
    }
    let k = params.model.n_topics();
    let full = VocabSupport::full(params.model.emb.rows());
    corpus
        .documents
        .par_iter()
        .map(|doc| {
            let mut rng = document_rng(seed, &doc.id);
            let mut total = 0.0;
            for _ in 0..n_eps_samples {
                let eps = standard_normal_vec(k, &mut rng);
                total += document_elbo(doc, params, &eps, &full)?.elbo;
            }
            Ok(DocumentBound {
                id: doc.id.clone(),
                elbo: total / n_eps_samples as f64,
                n_words: doc.n_words(),
            })
        })
        .collect()
}

/// Per-document bounds and the corpus perplexity derived from them.
#[derive(Clone, Debug, PartialEq)]
pub struct PerplexityReport {
    pub documents: Vec<DocumentBound>,
    pub perplexity: f64,
}

impl PerplexityReport {
    pub fn from_bounds(documents: Vec<DocumentBound>) -> Result<Self> {
        if documents.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        let perplexity = documents.iter().map(|d| (-d.per_word()).exp()).sum::<f64>()
            / documents.len() as f64;
        Ok(Self { documents, perplexity })
    }

    pub fn write<W: Write>(&self, mut w: W) -> io::Result<()> {
        for d in &self.documents {
            writeln!(w, "{}\t{}\t{}\t{}", d.id, d.elbo, d.n_words, d.per_word())?;
        }
        writeln!(w, "PERPLEXITY\t{}", self.perplexity)
    }
}

impl fmt::Display for PerplexityReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut buf = Vec::new();
        self.write(&mut buf).map_err(|_| fmt::Error)?;
        f.write_str(&String::from_utf8_lossy(&buf))
    }
}

/// Mean over documents of `exp(-elbo_d / N_d)`.
pub fn perplexity(
    corpus: &Corpus,
    params: &Params,
    n_eps_samples: usize,
    seed: u64,
) -> Result<PerplexityReport> {
    PerplexityReport::from_bounds(document_bounds(corpus, params, n_eps_samples, seed)?)
}
