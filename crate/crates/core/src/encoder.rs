//! Variational encoders.
//!
//! The document encoder maps the bag of word embeddings to a diagonal
//! Gaussian over the topic strengths and draws `theta = mu + sigma * eps`.
//! The sentence encoder runs a GRU over the sentence and emits a softmax
//! over topics from its last hidden state. The two are independent: the
//! sentence posterior never sees `theta` or other sentences.

use crate::error::{Error, Result};
use crate::numerics::{Graph, Tensor, Var};
use crate::params::{Dims, Params};

/// Bound applied to the log-sigma pre-activation before exponentiation.
pub const LOG_SIGMA_CLAMP: f64 = 8.0;

#[derive(Clone, Debug, PartialEq)]
pub struct GruCell<T> {
    pub update_w: T,
    pub update_u: T,
    pub update_b: T,
    pub reset_w: T,
    pub reset_u: T,
    pub reset_b: T,
    pub cand_w: T,
    pub cand_u: T,
    pub cand_b: T,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EncoderParams<T> {
    /// `[H_doc x E]`
    pub doc_w: T,
    pub doc_b: T,
    /// `[K x H_doc]`
    pub mu_w: T,
    pub mu_b: T,
    /// `[K x H_doc]`
    pub sigma_w: T,
    pub sigma_b: T,
    pub gru: GruCell<T>,
    /// `[K x H_enc]`
    pub out_w: T,
    pub out_b: T,
}

impl<T> EncoderParams<T> {
    pub(crate) fn build(
        d: &Dims,
        f: &mut impl FnMut(&str, &[usize]) -> Result<T>,
    ) -> Result<Self> {
        let (k, e, hd, he) = (d.n_topics, d.embed_dim, d.doc_hidden_dim, d.enc_hidden_dim);
        Ok(EncoderParams {
            doc_w: f("enc.doc.w", &[hd, e])?,
            doc_b: f("enc.doc.b", &[hd])?,
            mu_w: f("enc.mu.w", &[k, hd])?,
            mu_b: f("enc.mu.b", &[k])?,
            sigma_w: f("enc.sigma.w", &[k, hd])?,
            sigma_b: f("enc.sigma.b", &[k])?,
            gru: GruCell {
                update_w: f("enc.gru.update.w", &[he, e])?,
                update_u: f("enc.gru.update.u", &[he, he])?,
                update_b: f("enc.gru.update.b", &[he])?,
                reset_w: f("enc.gru.reset.w", &[he, e])?,
                reset_u: f("enc.gru.reset.u", &[he, he])?,
                reset_b: f("enc.gru.reset.b", &[he])?,
                cand_w: f("enc.gru.cand.w", &[he, e])?,
                cand_u: f("enc.gru.cand.u", &[he, he])?,
                cand_b: f("enc.gru.cand.b", &[he])?,
            },
            out_w: f("enc.out.w", &[k, he])?,
            out_b: f("enc.out.b", &[k])?,
        })
    }

    pub fn map_named<'s, U>(&'s self, f: &mut impl FnMut(&str, &'s T) -> U) -> EncoderParams<U> {
        EncoderParams {
            doc_w: f("enc.doc.w", &self.doc_w),
            doc_b: f("enc.doc.b", &self.doc_b),
            mu_w: f("enc.mu.w", &self.mu_w),
            mu_b: f("enc.mu.b", &self.mu_b),
            sigma_w: f("enc.sigma.w", &self.sigma_w),
            sigma_b: f("enc.sigma.b", &self.sigma_b),
            gru: GruCell {
                update_w: f("enc.gru.update.w", &self.gru.update_w),
                update_u: f("enc.gru.update.u", &self.gru.update_u),
                update_b: f("enc.gru.update.b", &self.gru.update_b),
                reset_w: f("enc.gru.reset.w", &self.gru.reset_w),
                reset_u: f("enc.gru.reset.u", &self.gru.reset_u),
                reset_b: f("enc.gru.reset.b", &self.gru.reset_b),
                cand_w: f("enc.gru.cand.w", &self.gru.cand_w),
                cand_u: f("enc.gru.cand.u", &self.gru.cand_u),
                cand_b: f("enc.gru.cand.b", &self.gru.cand_b),
            },
            out_w: f("enc.out.w", &self.out_w),
            out_b: f("enc.out.b", &self.out_b),
        }
    }

    pub fn for_each_mut<'s>(&'s mut self, f: &mut impl FnMut(&str, &'s mut T)) {
        f("enc.doc.w", &mut self.doc_w);
        f("enc.doc.b", &mut self.doc_b);
        f("enc.mu.w", &mut self.mu_w);
        f("enc.mu.b", &mut self.mu_b);
        f("enc.sigma.w", &mut self.sigma_w);
        f("enc.sigma.b", &mut self.sigma_b);
        let g = &mut self.gru;
        f("enc.gru.update.w", &mut g.update_w);
        f("enc.gru.update.u", &mut g.update_u);
        f("enc.gru.update.b", &mut g.update_b);
        f("enc.gru.reset.w", &mut g.reset_w);
        f("enc.gru.reset.u", &mut g.reset_u);
        f("enc.gru.reset.b", &mut g.reset_b);
        f("enc.gru.cand.w", &mut g.cand_w);
        f("enc.gru.cand.u", &mut g.cand_u);
        f("enc.gru.cand.b", &mut g.cand_b);
        f("enc.out.w", &mut self.out_w);
        f("enc.out.b", &mut self.out_b);
    }
}

/// Graph handles for the document-level Gaussian.
#[derive(Clone, Copy, Debug)]
pub struct DocumentVars {
    pub mu: Var,
    /// Clamped log-sigma pre-activation.
    pub log_sigma: Var,
    pub sigma: Var,
    pub theta: Var,
}

pub fn encode_document_graph(
    g: &mut Graph<'_>,
    enc: &EncoderParams<Var>,
    emb: Var,
    words: &[usize],
    epsilon: &[f64],
) -> Result<DocumentVars> {
    if words.is_empty() {
        return Err(Error::EmptyDocument);
    }
    let bag = g.embedding_bag(emb, words)?;
    let gamma = g.affine(enc.doc_w, bag, Some(enc.doc_b))?;
    let gamma = g.tanh(gamma)?;
    let mu = g.affine(enc.mu_w, gamma, Some(enc.mu_b))?;
    if epsilon.len() != g.value(mu).len() {
        return Err(Error::LengthMismatch(epsilon.len(), g.value(mu).len()));
    }
    let pre = g.affine(enc.sigma_w, gamma, Some(enc.sigma_b))?;
    let log_sigma = g.clamp(pre, -LOG_SIGMA_CLAMP, LOG_SIGMA_CLAMP)?;
    let sigma = g.exp(log_sigma)?;
    let eps = g.constant(Tensor::vector(epsilon.to_vec()));
    let noise = g.hadamard(sigma, eps)?;
    let theta = g.add(mu, noise)?;
    Ok(DocumentVars {
        mu,
        log_sigma,
        sigma,
        theta,
    })
}

/// Log topic posterior `log q(z | sentence)` as a `K`-vector node.
pub fn encode_sentence_graph(
    g: &mut Graph<'_>,
    enc: &EncoderParams<Var>,
    emb: Var,
    words: &[usize],
) -> Result<Var> {
    if words.is_empty() {
        return Err(Error::EmptySentence);
    }
    let cell = &enc.gru;
    let hidden = g.shape(cell.update_u)[0];
    let mut h = g.constant(Tensor::zeros(&[hidden]));
    for &w in words {
        let x = g.embedding(emb, w)?;
        let gate = |g: &mut Graph<'_>, wx: Var, uh: Var, b: Var, h: Var| -> Result<Var> {
            let a = g.affine(wx, x, Some(b))?;
            let c = g.affine(uh, h, None)?;
            let s = g.add(a, c)?;
            Ok(g.sigmoid(s)?)
        };
        let z = gate(g, cell.update_w, cell.update_u, cell.update_b, h)?;
        let r = gate(g, cell.reset_w, cell.reset_u, cell.reset_b, h)?;
        let rh = g.hadamard(r, h)?;
        let a = g.affine(cell.cand_w, x, Some(cell.cand_b))?;
        let c = g.affine(cell.cand_u, rh, None)?;
        let n = g.add(a, c)?;
        let n = g.tanh(n)?;
        let delta = g.sub(n, h)?;
        let delta = g.hadamard(z, delta)?;
        h = g.add(h, delta)?;
    }
    let logits = g.affine(enc.out_w, h, Some(enc.out_b))?;
    Ok(g.log_softmax(logits, None)?)
}

/// Diagonal-Gaussian posterior over a document's topic strengths.
#[derive(Clone, Debug, PartialEq)]
pub struct DocumentPosterior {
    pub mu: Vec<f64>,
    pub sigma: Vec<f64>,
    pub theta_hat: Vec<f64>,
    pub epsilon: Vec<f64>,
}

/// Topic posterior of one sentence.
#[derive(Clone, Debug, PartialEq)]
pub struct SentencePosterior {
    pub q: Vec<f64>,
}

impl SentencePosterior {
    pub fn argmax(&self) -> usize {
        self.q
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (k, &v)| {
                if v > best.1 {
                    (k, v)
                } else {
                    best
                }
            })
            .0
    }
}

pub fn encode_document(params: &Params, words: &[usize], epsilon: &[f64]) -> Result<DocumentPosterior> {
    let mut g = Graph::new();
    let emb = g.leaf(&params.model.emb);
    let enc = params.encoder.map_named(&mut |_, t| g.leaf(t));
    let vars = encode_document_graph(&mut g, &enc, emb, words, epsilon)?;
    Ok(DocumentPosterior {
        mu: g.value(vars.mu).to_vec(),
        sigma: g.value(vars.sigma).to_vec(),
        theta_hat: g.value(vars.theta).to_vec(),
        epsilon: epsilon.to_vec(),
    })
}

pub fn encode_sentence(params: &Params, words: &[usize]) -> Result<SentencePosterior> {
    let mut g = Graph::new();
    let emb = g.leaf(&params.model.emb);
    let enc = params.encoder.map_named(&mut |_, t| g.leaf(t));
    let logq = encode_sentence_graph(&mut g, &enc, emb, words)?;
    Ok(SentencePosterior {
        q: g.value(logq).iter().map(|l| l.exp()).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{central_difference, GradCheck};
    use crate::params::DecoderCell;
    use crate::testutil::{random_params, toy_dims};

    #[test]
    fn zero_encoder_gives_standard_normal() {
        let p = Params::zeros(&toy_dims(DecoderCell::Elman)).unwrap();
        let post = encode_document(&p, &[2, 3, 1], &[0.0, 0.0]).unwrap();
        assert_eq!(post.mu, vec![0.0, 0.0]);
        assert_eq!(post.sigma, vec![1.0, 1.0]);
        assert_eq!(post.theta_hat, vec![0.0, 0.0]);
        let q = encode_sentence(&p, &[2, 1]).unwrap();
        assert_eq!(q.q, vec![0.5, 0.5]);
    }

    #[test]
    fn reparametrization_identity() {
        let p = random_params(toy_dims(DecoderCell::Elman), 0.5, 3);
        let at_zero = encode_document(&p, &[2, 4, 1], &[0.0, 0.0]).unwrap();
        assert_eq!(at_zero.theta_hat, at_zero.mu);
        let eps = [0.7, -1.3];
        let post = encode_document(&p, &[2, 4, 1], &eps).unwrap();
        for (k, e) in eps.iter().enumerate() {
            assert_eq!(post.theta_hat[k], post.mu[k] + post.sigma[k] * e);
            assert!(post.sigma[k] > 0.0);
        }
    }

    #[test]
    fn errors() {
        let p = random_params(toy_dims(DecoderCell::Elman), 0.5, 3);
        assert!(matches!(encode_document(&p, &[], &[0.0, 0.0]), Err(Error::EmptyDocument)));
        assert!(matches!(encode_sentence(&p, &[]), Err(Error::EmptySentence)));
        assert!(encode_document(&p, &[2], &[0.0]).is_err());
    }

    #[test]
    fn sigma_stays_positive_for_extreme_inputs() {
        let mut p = random_params(toy_dims(DecoderCell::Elman), 0.5, 4);
        p.encoder.sigma_b.fill(-1e6);
        let post = encode_document(&p, &[2, 3], &[1.0, 1.0]).unwrap();
        assert!(post.sigma.iter().all(|&s| s > 0.0 && s.is_finite()));
        p.encoder.sigma_b.fill(1e6);
        let post = encode_document(&p, &[2, 3], &[1.0, 1.0]).unwrap();
        assert!(post.sigma.iter().all(|&s| s > 0.0 && s.is_finite()));
    }

    #[test]
    fn document_encoder_is_order_invariant() {
        let p = random_params(toy_dims(DecoderCell::Elman), 0.5, 5);
        let a = encode_document(&p, &[2, 3, 4, 1, 5], &[0.3, 0.1]).unwrap();
        let b = encode_document(&p, &[5, 1, 4, 3, 2], &[0.3, 0.1]).unwrap();
        for k in 0..2 {
            assert!((a.mu[k] - b.mu[k]).abs() < 1e-14);
            assert!((a.sigma[k] - b.sigma[k]).abs() < 1e-14);
        }
    }

    #[test]
    fn sentence_encoder_is_order_sensitive() {
        let p = random_params(toy_dims(DecoderCell::Elman), 0.5, 6);
        let a = encode_sentence(&p, &[2, 3]).unwrap();
        let b = encode_sentence(&p, &[3, 2]).unwrap();
        assert!(a.q.iter().zip(&b.q).any(|(x, y)| (x - y).abs() > 1e-9));
        assert!((a.q.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn permuting_output_rows_permutes_q() {
        let mut dims = toy_dims(DecoderCell::Elman);
        dims.n_topics = 3;
        let p = random_params(dims, 0.7, 7);
        let q = encode_sentence(&p, &[2, 5, 3, 1]).unwrap().q;
        let perm = [2usize, 0, 1];
        let mut permuted = p.clone();
        let cols = p.encoder.out_w.cols();
        for (new, &old) in perm.iter().enumerate() {
            permuted.encoder.out_w.row_mut(new).copy_from_slice(p.encoder.out_w.row(old));
            permuted.encoder.out_b.data_mut()[new] = p.encoder.out_b.data()[old];
        }
        assert_eq!(permuted.encoder.out_w.cols(), cols);
        let q2 = encode_sentence(&permuted, &[2, 5, 3, 1]).unwrap().q;
        for (new, &old) in perm.iter().enumerate() {
            assert!((q2[new] - q[old]).abs() < 1e-14);
        }
    }

    #[test]
    fn theta_gradient_matches_finite_differences() {
        let p = random_params(toy_dims(DecoderCell::Elman), 0.5, 8);
        let words = [2, 3, 3, 5, 1];
        let eps = [0.4, -0.9];
        let weights = [1.3, -0.6];
        // f(theta) = sum_k c_k * tanh(theta_k)
        let objective = |params: &Params| -> f64 {
            let post = encode_document(params, &words, &eps).unwrap();
            post.theta_hat
                .iter()
                .zip(weights)
                .map(|(t, c)| c * t.tanh())
                .sum()
        };
        let mut g = Graph::new();
        let bound = p.bind(&mut g);
        let vars = encode_document_graph(&mut g, &bound.encoder, bound.model.emb, &words, &eps).unwrap();
        let th = g.tanh(vars.theta).unwrap();
        let c = g.constant(Tensor::vector(weights.to_vec()));
        let root = g.dot(th, c).unwrap();
        let grads = g.backward(root).unwrap();
        let analytic = bound.gradients(&grads, &p);

        let checks: [(&str, fn(&mut Params) -> &mut Tensor); 4] = [
            ("mu.w", |q| &mut q.encoder.mu_w),
            ("sigma.w", |q| &mut q.encoder.sigma_w),
            ("doc.w", |q| &mut q.encoder.doc_w),
            ("emb", |q| &mut q.model.emb),
        ];
        for (name, pick) in checks {
            let mut work = p.clone();
            let base = pick(&mut work).clone();
            let numeric = central_difference(&base, 1e-5, |probe| {
                *pick(&mut work) = probe.clone();
                objective(&work)
            });
            let mut a = analytic.clone();
            let check = GradCheck::compare(name, pick(&mut a), &numeric, 1e-8);
            assert!(check.max_rel_error < 1e-4, "{check:?}");
        }
    }
}
