//! Stochastic training: sampled-vocabulary softmax, Adadelta, global-norm
//! clipping and validation-based early stopping.

mod config;

pub use config::TrainConfig;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{save_vocabulary, Corpus, Document, EOS_ID};
use crate::error::{Error, Result};
use crate::model::checkpoint::Checkpoint;
use crate::model::VocabSupport;
use crate::numerics::NumericsError;
use crate::objective::{document_bounds, document_elbo_grad, standard_normal_vec};
use crate::params::Params;

pub const CHECKPOINT_FILE: &str = "checkpoint.ckpt";
pub const LOG_FILE: &str = "train.log";

/// `n` distinct indices drawn without replacement with probability
/// proportional to `weights` (exponential-key method). Zero-weight indices
/// are only taken once the positive ones are exhausted, lowest id first.
pub fn draw_without_replacement<R: Rng + ?Sized>(weights: &[f64], n: usize, rng: &mut R) -> Vec<usize> {
    let n = n.min(weights.len());
    if n == 0 {
        return Vec::new();
    }
    let mut keyed: Vec<(f64, usize)> = weights
        .iter()
        .enumerate()
        .map(|(i, &w)| {
            let u = 1.0 - rng.random::<f64>();
            let key = if w > 0.0 { u.ln() / w } else { f64::NEG_INFINITY };
            (key, i)
        })
        .collect();
    let order = |a: &(f64, usize), b: &(f64, usize)| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1));
    if n < keyed.len() {
        keyed.select_nth_unstable_by(n - 1, order);
        keyed.truncate(n);
    }
    keyed.sort_by(order);
    keyed.into_iter().map(|(_, i)| i).collect()
}

/// Words of the batch, `<eos>`, and `n_extra` ids drawn from `unigram`.
pub fn sample_vocab_support<R: Rng + ?Sized>(
    batch: &[&Document],
    unigram: &[f64],
    n_extra: usize,
    rng: &mut R,
) -> Result<VocabSupport> {
    let v = unigram.len();
    if n_extra > v {
        return Err(Error::InvalidArgument(format!(
            "cannot draw {n_extra} extra words from a vocabulary of {v}"
        )));
    }
    let extra = draw_without_replacement(unigram, n_extra, rng);
    let batch_words = batch.iter().flat_map(|d| d.words());
    VocabSupport::subset(v, batch_words.chain(extra).chain([EOS_ID]))
}

/// Global L2 norm over every tensor.
pub fn global_norm(grads: &Params) -> f64 {
    grads.named().iter().map(|(_, t)| t.sum_squares()).sum::<f64>().sqrt()
}

/// Rescales all gradients so their global norm is at most `clip_norm`;
/// returns the norm before clipping.
pub fn clip_gradients(grads: &mut Params, clip_norm: f64) -> f64 {
    let norm = global_norm(grads);
    if norm > clip_norm {
        let s = clip_norm / norm;
        for t in grads.values_mut() {
            t.data_mut().iter_mut().for_each(|g| *g *= s);
        }
    }
    norm
}

/// Running averages of squared gradients and squared updates.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState {
    pub sq_grad: Params,
    pub sq_update: Params,
}

impl OptimizerState {
    pub fn new(like: &Params) -> Self {
        Self {
            sq_grad: like.zeros_like(),
            sq_update: like.zeros_like(),
        }
    }
}

/// One Adadelta update of `params` against the loss gradient `grads`.
pub fn adadelta_step(
    params: &mut Params,
    grads: &Params,
    state: &mut OptimizerState,
    rho: f64,
    eps: f64,
) -> Result<()> {
    let g = grads.named();
    {
        let shapes: Vec<&[usize]> = g.iter().map(|(_, t)| t.shape()).collect();
        for other in [&*params, &state.sq_grad, &state.sq_update] {
            let named = other.named();
            if named.len() != shapes.len() {
                return Err(Error::LengthMismatch(named.len(), shapes.len()));
            }
            for ((_, t), s) in named.iter().zip(&shapes) {
                if t.shape() != *s {
                    return Err(NumericsError::ShapeMismatch {
                        op: "adadelta",
                        left: t.shape().to_vec(),
                        right: s.to_vec(),
                    }
                    .into());
                }
            }
        }
    }
    let p = params.values_mut();
    let eg = state.sq_grad.values_mut();
    let ed = state.sq_update.values_mut();
    for (((p, (_, g)), eg), ed) in p.into_iter().zip(g).zip(eg).zip(ed) {
        let p = p.data_mut();
        let eg = eg.data_mut();
        let ed = ed.data_mut();
        for (i, &gi) in g.data().iter().enumerate() {
            eg[i] = rho * eg[i] + (1.0 - rho) * gi * gi;
            let delta = -((ed[i] + eps).sqrt() / (eg[i] + eps).sqrt()) * gi;
            ed[i] = rho * ed[i] + (1.0 - rho) * delta * delta;
            p[i] += delta;
        }
    }
    Ok(())
}

/// One line of the training log.
#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean per-word negative bound over the training documents, measured
    /// on the sampled support before each update (full support at epoch 0).
    pub train_objective: f64,
    /// Mean per-word negative bound on the validation set, full support.
    pub valid_objective: f64,
    pub seconds: f64,
}

impl EpochRecord {
    pub fn log_line(&self) -> String {
        format!(
            "{}\t{}\t{}\t{:.3}",
            self.epoch, self.train_objective, self.valid_objective, self.seconds
        )
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub checkpoint: PathBuf,
    pub log: PathBuf,
    pub best_epoch: usize,
    pub best_valid: f64,
    pub history: Vec<EpochRecord>,
    /// Parameters of the best epoch, as saved.
    pub params: Params,
}

fn mean_negative_per_word(corpus: &Corpus, params: &Params, n_eps: usize, seed: u64) -> Result<f64> {
    let bounds = document_bounds(corpus, params, n_eps, seed)?;
    Ok(-bounds.iter().map(|b| b.per_word()).sum::<f64>() / bounds.len() as f64)
}

fn divergence(doc: &Document, step: usize, value: f64) -> Error {
    Error::Divergence {
        doc_id: doc.id.clone(),
        step,
        value,
    }
}

fn checkpoint_for(params: &Params, config: &TrainConfig, epoch: usize, valid: f64) -> Checkpoint {
    const SIZE_KEYS: [&str; 8] = [
        "n_topics",
        "embed_dim",
        "topic_embed_dim",
        "hidden_dim",
        "readout_dim",
        "doc_hidden_dim",
        "enc_hidden_dim",
        "decoder_cell",
    ];
    let mut ckpt = Checkpoint::new(params.clone()).with("init", "uniform");
    for (k, v) in config.entries() {
        if !SIZE_KEYS.contains(&k) {
            ckpt.set(k, v);
        }
    }
    ckpt.with("epoch", epoch).with("valid_objective", valid)
}

/// Trains from scratch, writing `checkpoint.ckpt` (best epoch so far),
/// `train.log` and `vocab.txt` into `out_dir`.
pub fn train(train: &Corpus, valid: &Corpus, config: &TrainConfig, out_dir: &Path) -> Result<TrainOutcome> {
    if !std::sync::Arc::ptr_eq(&train.vocabulary, &valid.vocabulary)
        && *train.vocabulary != *valid.vocabulary
    {
        return Err(Error::InvalidArgument(
            "training and validation corpora use different vocabularies".into(),
        ));
    }
    if train.is_empty() {
        return Err(Error::NoTrainingData);
    }
    if valid.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let vocab = &train.vocabulary;
    config.validate(vocab.len())?;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    save_vocabulary(out_dir, vocab)?;

    let ckpt_path = out_dir.join(CHECKPOINT_FILE);
    let log_path = out_dir.join(LOG_FILE);
    let mut log = fs::File::create(&log_path).map_err(|e| Error::io(&log_path, e))?;
    let mut write_log = |rec: &EpochRecord| -> Result<()> {
        writeln!(log, "{}", rec.log_line())
            .and_then(|_| log.flush())
            .map_err(|e| Error::io(&log_path, e))
    };

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let dims = config.dims(vocab.len());
    let mut params = Params::init(&dims, config.init_scale, &mut rng)?;
    let mut state = OptimizerState::new(&params);
    let valid_seed = config.seed.wrapping_add(1);
    let k = config.n_topics;

    let start = Instant::now();
    let valid0 = mean_negative_per_word(valid, &params, config.valid_eps_samples, valid_seed)?;
    let train0 = mean_negative_per_word(train, &params, 1, valid_seed)?;
    let rec = EpochRecord {
        epoch: 0,
        train_objective: train0,
        valid_objective: valid0,
        seconds: start.elapsed().as_secs_f64(),
    };
    log::info!("{}", rec.log_line());
    write_log(&rec)?;
    checkpoint_for(&params, config, 0, valid0).save(&ckpt_path)?;
    let mut history = vec![rec];
    let mut best = (0usize, valid0, params.clone());
    let mut stale = 0usize;
    let mut step = 0usize;

    let mut order: Vec<usize> = (0..train.len()).collect();
    for epoch in 1..=config.max_epochs {
        let start = Instant::now();
        order.shuffle(&mut rng);
        let mut train_sum = 0.0;
        for batch in order.chunks(config.batch_size) {
            let docs: Vec<&Document> = batch.iter().map(|&i| &train.documents[i]).collect();
            let support = sample_vocab_support(&docs, vocab.unigram(), config.sampled_vocab_size, &mut rng)?;
            let mut total: Option<Params> = None;
            for doc in &docs {
                let eps = standard_normal_vec(k, &mut rng);
                let (b, grads) = match document_elbo_grad(doc, &params, &eps, &support) {
                    Ok(r) => r,
                    Err(e) if e.is_numerical() => return Err(divergence(doc, step, f64::NAN)),
                    Err(e) => return Err(e),
                };
                if !b.elbo.is_finite() || !grads.is_finite() {
                    return Err(divergence(doc, step, b.elbo));
                }
                train_sum += -b.elbo / doc.n_words() as f64;
                total = Some(match total {
                    None => grads,
                    Some(mut acc) => {
                        for (a, (_, g)) in acc.values_mut().into_iter().zip(grads.named()) {
                            a.data_mut().iter_mut().zip(g.data()).for_each(|(x, y)| *x += y);
                        }
                        acc
                    }
                });
            }
            // gradient of the loss, the negative bound
            let mut grads = total.expect("non-empty batch");
            for t in grads.values_mut() {
                t.data_mut().iter_mut().for_each(|g| *g = -*g);
            }
            clip_gradients(&mut grads, config.clip_norm);
            adadelta_step(&mut params, &grads, &mut state, config.adadelta_rho, config.adadelta_eps)?;
            step += 1;
            if !params.is_finite() {
                return Err(divergence(docs[0], step, f64::NAN));
            }
        }
        let valid_obj = mean_negative_per_word(valid, &params, config.valid_eps_samples, valid_seed)?;
        if !valid_obj.is_finite() {
            return Err(Error::Divergence {
                doc_id: "<validation>".into(),
                step,
                value: valid_obj,
            });
        }
        let rec = EpochRecord {
            epoch,
            train_objective: train_sum / train.len() as f64,
            valid_objective: valid_obj,
            seconds: start.elapsed().as_secs_f64(),
        };
        log::info!("{}", rec.log_line());
        write_log(&rec)?;
        history.push(rec);
        if valid_obj < best.1 {
            best = (epoch, valid_obj, params.clone());
            stale = 0;
            checkpoint_for(&params, config, epoch, valid_obj).save(&ckpt_path)?;
        } else {
            stale += 1;
            if stale >= config.patience {
                log::info!("no improvement for {stale} epochs, stopping");
                break;
            }
        }
    }
    Ok(TrainOutcome {
        checkpoint: ckpt_path,
        log: log_path,
        best_epoch: best.0,
        best_valid: best.1,
        history,
        params: best.2,
    })
}
