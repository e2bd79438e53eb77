use super::{ModelParams, VocabSupport};
use crate::corpus::EOS_ID;
use crate::error::{Error, Result};
use crate::numerics::{Graph, Tensor, Var};

/// Per-sentence quantities that depend only on the conditioning topic:
/// the context vector `c = EmbZ[topic]` and its (biased) projections into
/// the recurrent, gate and readout pre-activations.
pub struct TopicContext {
    pub topic: usize,
    pub context: Var,
    ctx_h: Var,
    ctx_readout: Var,
    ctx_update: Option<Var>,
    ctx_reset: Option<Var>,
}

impl TopicContext {
    pub fn new(g: &mut Graph<'_>, p: &ModelParams<Var>, topic: usize) -> Result<Self> {
        p.check_topic(topic)?;
        let context = g.embedding(p.topic_emb, topic)?;
        let ctx_h = g.affine(p.w_c, context, Some(p.b))?;
        let ctx_readout = g.affine(p.readout_c, context, Some(p.readout_b))?;
        let (ctx_update, ctx_reset) = match &p.gates {
            Some(gates) => (
                Some(g.affine(gates.update_c, context, Some(gates.update_b))?),
                Some(g.affine(gates.reset_c, context, Some(gates.reset_b))?),
            ),
            None => (None, None),
        };
        Ok(Self {
            topic,
            context,
            ctx_h,
            ctx_readout,
            ctx_update,
            ctx_reset,
        })
    }

    /// One decoder step from hidden state `h` after word `prev` (`None` for
    /// the zeroth word, whose embedding is the zero vector).
    ///
    /// Returns the new hidden state and the word log-distribution over
    /// `support`, in support order.
    pub fn step(
        &self,
        g: &mut Graph<'_>,
        p: &ModelParams<Var>,
        h: Var,
        prev: Option<usize>,
        support: &VocabSupport,
    ) -> Result<(Var, Var)> {
        let x = prev.map(|w| g.embedding(p.emb, w)).transpose()?;
        let with_input = |g: &mut Graph<'_>, base: Var, w: Var| -> Result<Var> {
            match x {
                Some(x) => {
                    let t = g.affine(w, x, None)?;
                    Ok(g.add(base, t)?)
                }
                None => Ok(base),
            }
        };

        let h_next = match &p.gates {
            None => {
                let rec = g.affine(p.w_h, h, None)?;
                let pre = g.add(rec, self.ctx_h)?;
                let pre = with_input(g, pre, p.w_e)?;
                g.tanh(pre)?
            }
            Some(gates) => {
                let (ctx_u, ctx_r) = (
                    self.ctx_update.expect("gated context"),
                    self.ctx_reset.expect("gated context"),
                );
                let u = g.affine(gates.update_h, h, None)?;
                let u = g.add(u, ctx_u)?;
                let u = with_input(g, u, gates.update_e)?;
                let u = g.sigmoid(u)?;
                let r = g.affine(gates.reset_h, h, None)?;
                let r = g.add(r, ctx_r)?;
                let r = with_input(g, r, gates.reset_e)?;
                let r = g.sigmoid(r)?;
                let rh = g.hadamard(r, h)?;
                let cand = g.affine(p.w_h, rh, None)?;
                let cand = g.add(cand, self.ctx_h)?;
                let cand = with_input(g, cand, p.w_e)?;
                let cand = g.tanh(cand)?;
                let delta = g.sub(cand, h)?;
                let delta = g.hadamard(u, delta)?;
                g.add(h, delta)?
            }
        };

        let ro = g.affine(p.readout_h, h_next, None)?;
        let ro = g.add(ro, self.ctx_readout)?;
        let ro = with_input(g, ro, p.readout_e)?;
        let ro = g.tanh(ro)?;

        let w_out = p.softmax_w[self.topic];
        let logits = match support.ids() {
            None => g.affine(w_out, ro, Some(p.softmax_b))?,
            Some(ids) => g.affine_rows(w_out, ro, Some(p.softmax_b), ids)?,
        };
        let logp = g.log_softmax(logits, None)?;
        Ok((h_next, logp))
    }
}

fn check_sentence(words: &[usize]) -> Result<()> {
    match words.last() {
        None => Err(Error::EmptySentence),
        Some(&EOS_ID) => Ok(()),
        Some(_) => Err(Error::MalformedSentence(
            "sentence does not end with <eos>".into(),
        )),
    }
}

/// Teacher-forced `log P(words | topic)` as a scalar graph node.
pub fn sentence_log_likelihood_graph(
    g: &mut Graph<'_>,
    p: &ModelParams<Var>,
    ctx: &TopicContext,
    words: &[usize],
    support: &VocabSupport,
) -> Result<Var> {
    check_sentence(words)?;
    let hidden = g.shape(p.w_h)[0];
    let mut h = g.constant(Tensor::zeros(&[hidden]));
    let mut prev = None;
    let mut terms = Vec::with_capacity(words.len());
    for &w in words {
        let pos = support
            .position(w)
            .ok_or(Error::TargetOutsideSupport { word: w })?;
        let (h_next, logp) = ctx.step(g, p, h, prev, support)?;
        terms.push(g.pick(logp, pos)?);
        h = h_next;
        prev = Some(w);
    }
    Ok(g.add_all(&terms)?)
}

/// `log P(words | topic)` under teacher forcing; `words` must end with `<eos>`.
pub fn sentence_log_likelihood(
    params: &ModelParams<Tensor>,
    words: &[usize],
    topic: usize,
    support: &VocabSupport,
) -> Result<f64> {
    let mut g = Graph::new();
    let p = params.map_named(&mut |_, t| g.leaf(t));
    let ctx = TopicContext::new(&mut g, &p, topic)?;
    let ll = sentence_log_likelihood_graph(&mut g, &p, &ctx, words, support)?;
    Ok(g.scalar(ll))
}

/// Plain-value decoder state for step-by-step generation.
#[derive(Clone, Debug, PartialEq)]
pub struct DecoderState {
    pub topic: usize,
    pub h: Vec<f64>,
    /// `None` stands for the zeroth word.
    pub prev_word: Option<usize>,
    pub context: Vec<f64>,
}

impl DecoderState {
    /// Records the word emitted at the current step.
    pub fn feed(&mut self, word: usize) {
        self.prev_word = Some(word);
    }
}

pub fn decoder_init(params: &ModelParams<Tensor>, topic: usize) -> Result<DecoderState> {
    params.check_topic(topic)?;
    Ok(DecoderState {
        topic,
        h: vec![0.0; params.w_h.rows()],
        prev_word: None,
        context: params.topic_emb.row(topic).to_vec(),
    })
}

/// Advances the hidden state and returns the word log-distribution over
/// `support`. The returned state still carries the previous word; call
/// [`DecoderState::feed`] with the chosen word before the next step.
pub fn decoder_step(
    params: &ModelParams<Tensor>,
    state: &DecoderState,
    support: &VocabSupport,
) -> Result<(DecoderState, Vec<f64>)> {
    if state.h.len() != params.w_h.rows() {
        return Err(Error::LengthMismatch(state.h.len(), params.w_h.rows()));
    }
    let mut g = Graph::new();
    let p = params.map_named(&mut |_, t| g.leaf(t));
    let ctx = TopicContext::new(&mut g, &p, state.topic)?;
    let h = g.constant(Tensor::vector(state.h.clone()));
    let (h_next, logp) = ctx.step(&mut g, &p, h, state.prev_word, support)?;
    let next = DecoderState {
        topic: state.topic,
        h: g.value(h_next).to_vec(),
        prev_word: state.prev_word,
        context: state.context.clone(),
    };
    Ok((next, g.value(logp).to_vec()))
}
