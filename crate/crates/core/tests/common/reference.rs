//! Straight-line reference implementation of the model, written with plain
//! loops over the public parameter fields. Used as an oracle for the graph
//! code.
#![allow(dead_code)]

use sengen::numerics::Tensor;
use sengen::Params;

fn matvec(w: &Tensor, x: &[f64]) -> Vec<f64> {
    assert_eq!(w.cols(), x.len());
    (0..w.rows())
        .map(|i| w.row(i).iter().zip(x).map(|(a, b)| a * b).sum())
        .collect()
}

fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

fn sig(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn log_normalize(x: &[f64]) -> Vec<f64> {
    let m = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = x.iter().map(|v| (v - m).exp()).sum();
    x.iter().map(|v| v - m - z.ln()).collect()
}

/// `log P(words | topic)`, normalizing over `support` (all ids when `None`).
pub fn sentence_ll(p: &Params, words: &[usize], topic: usize, support: Option<&[usize]>) -> f64 {
    let m = &p.model;
    let v = m.emb.rows();
    let e = m.emb.cols();
    let all: Vec<usize> = (0..v).collect();
    let ids = support.unwrap_or(&all);
    let c = m.topic_emb.row(topic);
    let mut h = vec![0.0; m.w_h.rows()];
    let mut x = vec![0.0; e];
    let mut total = 0.0;
    for &w in words {
        let pre_in = add(&matvec(&m.w_e, &x), &add(&matvec(&m.w_c, c), m.b.data()));
        h = match &m.gates {
            None => add(&matvec(&m.w_h, &h), &pre_in).iter().map(|v| v.tanh()).collect(),
            Some(gt) => {
                let gate = |wh: &Tensor, we: &Tensor, wc: &Tensor, b: &Tensor| -> Vec<f64> {
                    let s = add(&add(&matvec(wh, &h), &matvec(we, &x)), &add(&matvec(wc, c), b.data()));
                    s.into_iter().map(sig).collect()
                };
                let u = gate(&gt.update_h, &gt.update_e, &gt.update_c, &gt.update_b);
                let r = gate(&gt.reset_h, &gt.reset_e, &gt.reset_c, &gt.reset_b);
                let rh: Vec<f64> = r.iter().zip(&h).map(|(a, b)| a * b).collect();
                let cand: Vec<f64> = add(&matvec(&m.w_h, &rh), &pre_in).iter().map(|v| v.tanh()).collect();
                (0..h.len()).map(|i| (1.0 - u[i]) * h[i] + u[i] * cand[i]).collect()
            }
        };
        let ro: Vec<f64> = add(
            &add(&matvec(&m.readout_h, &h), &matvec(&m.readout_e, &x)),
            &add(&matvec(&m.readout_c, c), m.readout_b.data()),
        )
        .iter()
        .map(|v| v.tanh())
        .collect();
        let logits: Vec<f64> = ids
            .iter()
            .map(|&i| {
                m.softmax_w[topic].row(i).iter().zip(&ro).map(|(a, b)| a * b).sum::<f64>()
                    + m.softmax_b.data()[i]
            })
            .collect();
        let logp = log_normalize(&logits);
        let pos = ids.iter().position(|&i| i == w).expect("target in support");
        total += logp[pos];
        x = m.emb.row(w).to_vec();
    }
    total
}

/// `(mu, sigma)` of the document posterior.
pub fn document_posterior(p: &Params, words: &[usize]) -> (Vec<f64>, Vec<f64>) {
    let enc = &p.encoder;
    let mut bag = vec![0.0; p.model.emb.cols()];
    for &w in words {
        for (b, v) in bag.iter_mut().zip(p.model.emb.row(w)) {
            *b += v;
        }
    }
    let gamma: Vec<f64> = add(&matvec(&enc.doc_w, &bag), enc.doc_b.data())
        .iter()
        .map(|v| v.tanh())
        .collect();
    let mu = add(&matvec(&enc.mu_w, &gamma), enc.mu_b.data());
    let sigma = add(&matvec(&enc.sigma_w, &gamma), enc.sigma_b.data())
        .iter()
        .map(|v| v.clamp(-8.0, 8.0).exp())
        .collect();
    (mu, sigma)
}

pub fn sentence_posterior(p: &Params, words: &[usize]) -> Vec<f64> {
    let g = &p.encoder.gru;
    let mut h = vec![0.0; g.update_u.rows()];
    for &w in words {
        let x = p.model.emb.row(w);
        let z: Vec<f64> = add(&add(&matvec(&g.update_w, x), &matvec(&g.update_u, &h)), g.update_b.data())
            .into_iter()
            .map(sig)
            .collect();
        let r: Vec<f64> = add(&add(&matvec(&g.reset_w, x), &matvec(&g.reset_u, &h)), g.reset_b.data())
            .into_iter()
            .map(sig)
            .collect();
        let rh: Vec<f64> = r.iter().zip(&h).map(|(a, b)| a * b).collect();
        let n: Vec<f64> = add(&add(&matvec(&g.cand_w, x), &matvec(&g.cand_u, &rh)), g.cand_b.data())
            .iter()
            .map(|v| v.tanh())
            .collect();
        h = (0..h.len()).map(|i| (1.0 - z[i]) * h[i] + z[i] * n[i]).collect();
    }
    let logits = add(&matvec(&p.encoder.out_w, &h), p.encoder.out_b.data());
    log_normalize(&logits).iter().map(|l| l.exp()).collect()
}

/// Single-sample bound for one document given the Gaussian noise.
pub fn elbo(p: &Params, sentences: &[Vec<usize>], eps: &[f64], support: Option<&[usize]>) -> f64 {
    let words: Vec<usize> = sentences.iter().flatten().copied().collect();
    let (mu, sigma) = document_posterior(p, &words);
    let kl: f64 = mu
        .iter()
        .zip(&sigma)
        .map(|(m, s)| 0.5 * (m * m + s * s - 1.0 - 2.0 * s.ln()))
        .sum();
    let theta: Vec<f64> = (0..mu.len()).map(|k| mu[k] + sigma[k] * eps[k]).collect();
    let log_prior = log_normalize(&theta);
    let mut total = -kl;
    for s in sentences {
        let q = sentence_posterior(p, s);
        for k in 0..q.len() {
            if q[k] > 0.0 {
                total += q[k] * (log_prior[k] - q[k].ln() + sentence_ll(p, s, k, support));
            }
        }
    }
    total
}
