//! The full trainable parameter set (decoder plus encoders) and its sizes.

use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::encoder::EncoderParams;
use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::numerics::{Graph, Tensor, Var};

/// Recurrent update used by the word decoder.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum DecoderCell {
    /// `h_i = tanh(W_h h_{i-1} + W_e x + W_c c + b)`.
    #[default]
    Elman,
    /// Gated recurrent unit driven by the same inputs.
    Gru,
}

impl fmt::Display for DecoderCell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DecoderCell::Elman => "elman",
            DecoderCell::Gru => "gru",
        })
    }
}

impl FromStr for DecoderCell {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "elman" => Ok(DecoderCell::Elman),
            "gru" => Ok(DecoderCell::Gru),
            other => Err(Error::InvalidArgument(format!("unknown decoder cell {other:?}"))),
        }
    }
}

/// Every size needed to lay out a parameter set.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Dims {
    pub vocab_size: usize,
    pub n_topics: usize,
    pub embed_dim: usize,
    pub topic_embed_dim: usize,
    pub hidden_dim: usize,
    pub readout_dim: usize,
    /// Hidden layer of the document encoder.
    pub doc_hidden_dim: usize,
    /// Hidden state of the sentence encoder.
    pub enc_hidden_dim: usize,
    pub cell: DecoderCell,
}

impl Dims {
    pub fn validate(&self) -> Result<()> {
        let sizes = [
            ("vocab_size", self.vocab_size),
            ("n_topics", self.n_topics),
            ("embed_dim", self.embed_dim),
            ("topic_embed_dim", self.topic_embed_dim),
            ("hidden_dim", self.hidden_dim),
            ("readout_dim", self.readout_dim),
            ("doc_hidden_dim", self.doc_hidden_dim),
            ("enc_hidden_dim", self.enc_hidden_dim),
        ];
        if let Some((name, _)) = sizes.iter().find(|(_, v)| *v == 0) {
            return Err(Error::InvalidArgument(format!("{name} must be positive")));
        }
        if self.vocab_size < 2 {
            return Err(Error::InvalidArgument(
                "vocabulary needs at least the two reserved tokens".into(),
            ));
        }
        Ok(())
    }
}

/// Decoder and encoder parameters, generic over the storage so the same
/// layout serves for values (`Tensor`), graph handles (`Var`) and gradients.
#[derive(Clone, Debug, PartialEq)]
pub struct Params<T = Tensor> {
    pub model: ModelParams<T>,
    pub encoder: EncoderParams<T>,
}

impl<T> Params<T> {
    /// Builds every tensor in canonical order from its name and shape.
    pub fn build(dims: &Dims, f: &mut impl FnMut(&str, &[usize]) -> Result<T>) -> Result<Self> {
        Ok(Params {
            model: ModelParams::build(dims, f)?,
            encoder: EncoderParams::build(dims, f)?,
        })
    }

    pub fn map_named<'s, U>(&'s self, f: &mut impl FnMut(&str, &'s T) -> U) -> Params<U> {
        Params {
            model: self.model.map_named(f),
            encoder: self.encoder.map_named(f),
        }
    }

    pub fn for_each_mut<'s>(&'s mut self, f: &mut impl FnMut(&str, &'s mut T)) {
        self.model.for_each_mut(f);
        self.encoder.for_each_mut(f);
    }

    /// `(name, tensor)` pairs in canonical order.
    pub fn named(&self) -> Vec<(String, &T)> {
        let mut out = Vec::new();
        self.map_named(&mut |n, t| out.push((n.to_string(), t)));
        out
    }

    pub fn values_mut(&mut self) -> Vec<&mut T> {
        let mut out = Vec::new();
        self.for_each_mut(&mut |_, t| out.push(t));
        out
    }
}

impl Params<Tensor> {
    /// Weights uniform in `[-init_scale, init_scale]`, biases zero.
    pub fn init<R: Rng + ?Sized>(dims: &Dims, init_scale: f64, rng: &mut R) -> Result<Self> {
        dims.validate()?;
        Self::build(dims, &mut |_, shape| {
            Ok(if shape.len() == 1 {
                Tensor::zeros(shape)
            } else {
                Tensor::uniform(shape, init_scale, rng)
            })
        })
    }

    pub fn zeros(dims: &Dims) -> Result<Self> {
        dims.validate()?;
        Self::build(dims, &mut |_, shape| Ok(Tensor::zeros(shape)))
    }

    /// Sizes recovered from the tensor shapes.
    pub fn dims(&self) -> Dims {
        let m = &self.model;
        let e = &self.encoder;
        Dims {
            vocab_size: m.emb.rows(),
            n_topics: m.softmax_w.len(),
            embed_dim: m.emb.cols(),
            topic_embed_dim: m.topic_emb.cols(),
            hidden_dim: m.w_h.rows(),
            readout_dim: m.readout_h.rows(),
            doc_hidden_dim: e.doc_w.rows(),
            enc_hidden_dim: e.gru.update_u.rows(),
            cell: if m.gates.is_some() {
                DecoderCell::Gru
            } else {
                DecoderCell::Elman
            },
        }
    }

    /// Registers every tensor as a borrowed leaf.
    pub fn bind<'a>(&'a self, g: &mut Graph<'a>) -> Params<Var> {
        self.map_named(&mut |_, t| g.leaf(t))
    }

    pub fn zeros_like(&self) -> Params<Tensor> {
        self.map_named(&mut |_, t| Tensor::zeros(t.shape()))
    }

    pub fn n_values(&self) -> usize {
        self.named().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.named().iter().all(|(_, t)| t.is_finite())
    }
}

impl Params<Var> {
    /// Collects leaf gradients into a tensor set shaped like `like`.
    pub fn gradients(
        &self,
        grads: &crate::numerics::Gradients,
        like: &Params<Tensor>,
    ) -> Params<Tensor> {
        let vars = self.named();
        let mut i = 0;
        like.map_named(&mut |_, t| {
            let g = grads.tensor(*vars[i].1, t.shape());
            i += 1;
            g
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::toy_dims;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn canonical_order_is_consistent() {
        for cell in [DecoderCell::Elman, DecoderCell::Gru] {
            let dims = toy_dims(cell);
            let mut rng = ChaCha8Rng::seed_from_u64(1);
            let mut p = Params::init(&dims, 0.08, &mut rng).unwrap();
            let names: Vec<String> = p.named().into_iter().map(|(n, _)| n).collect();
            let mut built = Vec::new();
            Params::<()>::build(&dims, &mut |n, _| {
                built.push(n.to_string());
                Ok(())
            })
            .unwrap();
            let mut mutated = Vec::new();
            p.for_each_mut(&mut |n, _| mutated.push(n.to_string()));
            assert_eq!(names, built);
            assert_eq!(names, mutated);
            let mut dedup = names.clone();
            dedup.sort();
            dedup.dedup();
            assert_eq!(dedup.len(), names.len());
            assert_eq!(p.dims(), dims);
        }
    }

    #[test]
    fn init_scheme() {
        let dims = toy_dims(DecoderCell::Elman);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = Params::init(&dims, 0.08, &mut rng).unwrap();
        for (name, t) in p.named() {
            if t.shape().len() == 1 {
                assert!(t.data().iter().all(|&v| v == 0.0), "{name}");
            } else {
                assert!(t.data().iter().all(|v| v.abs() <= 0.08), "{name}");
            }
        }
    }

    #[test]
    fn zero_dims_rejected() {
        let mut dims = toy_dims(DecoderCell::Elman);
        dims.hidden_dim = 0;
        assert!(Params::zeros(&dims).is_err());
    }
}
