use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{document_elbo, document_elbo_grad, standard_normal_vec};
use crate::corpus::{Document, EOS_ID};
use crate::error::Result;
use crate::model::VocabSupport;
use crate::numerics::{central_difference, GradCheck, Tensor};
use crate::params::{DecoderCell, Dims, Params};

pub const GRADCHECK_STEP: f64 = 1e-5;
pub const GRADCHECK_TOLERANCE: f64 = 1e-4;
/// Denominator floor of the relative error. Central differences of a bound
/// of magnitude ~10 at this step carry ~1e-10 of rounding, so smaller
/// floors would grade noise; entries below the floor are held to 1e-9
/// absolute instead.
pub const GRADCHECK_FLOOR: f64 = 1e-5;

/// Sizes of the gradient-check model.
pub fn gradcheck_dims(cell: DecoderCell) -> Dims {
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

/// Random parameters (biases included), a two-sentence document and fixed
/// noise, all derived from `seed`.
pub fn gradcheck_instance(seed: u64, cell: DecoderCell) -> Result<(Params, Document, Vec<f64>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dims = gradcheck_dims(cell);
    let params = Params::build(&dims, &mut |_, shape| Ok(Tensor::uniform(shape, 0.5, &mut rng)))?;
    let sentence = |rng: &mut ChaCha8Rng| {
        let len = rng.random_range(1..4);
        let mut s: Vec<usize> = (0..len).map(|_| rng.random_range(2..dims.vocab_size)).collect();
        s.push(EOS_ID);
        s
    };
    let sentences = vec![sentence(&mut rng), sentence(&mut rng)];
    let doc = Document::new("gradcheck", sentences)?;
    let eps = standard_normal_vec(dims.n_topics, &mut rng);
    Ok((params, doc, eps))
}

/// Compares the analytic gradient of the document bound with central
/// differences, one entry per parameter tensor.
pub fn gradient_check(seed: u64, cell: DecoderCell) -> Result<Vec<GradCheck>> {
    let (params, doc, eps) = gradcheck_instance(seed, cell)?;
    let support = VocabSupport::full(params.model.emb.rows());
    let (_, grads) = document_elbo_grad(&doc, &params, &eps, &support)?;
    let grads = grads.named();
    let mut out = Vec::with_capacity(grads.len());
    for (i, (name, t)) in params.named().into_iter().enumerate() {
        let mut work = params.clone();
        let mut failure = None;
        let numeric = central_difference(t, GRADCHECK_STEP, |probe| {
            *work.values_mut()[i] = probe.clone();
            match document_elbo(&doc, &work, &eps, &support) {
                Ok(b) => b.elbo,
                Err(e) => {
                    failure.get_or_insert(e);
                    f64::NAN
                }
            }
        });
        if let Some(e) = failure {
            return Err(e);
        }
        out.push(GradCheck::compare(name, grads[i].1, &numeric, GRADCHECK_FLOOR));
    }
    Ok(out)
}
