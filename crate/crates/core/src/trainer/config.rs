use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::params::{DecoderCell, Dims};

/// Sizes and optimizer constants for a training run.
///
/// Stored as `key=value` lines; `#` starts a comment and unknown keys are
/// rejected.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub n_topics: usize,
    pub embed_dim: usize,
    pub topic_embed_dim: usize,
    pub hidden_dim: usize,
    pub readout_dim: usize,
    pub doc_hidden_dim: usize,
    pub enc_hidden_dim: usize,
    pub decoder_cell: DecoderCell,
    /// Extra word ids drawn per batch for the sampled softmax.
    pub sampled_vocab_size: usize,
    pub batch_size: usize,
    pub clip_norm: f64,
    pub adadelta_rho: f64,
    pub adadelta_eps: f64,
    pub patience: usize,
    pub max_epochs: usize,
    pub seed: u64,
    pub init_scale: f64,
    /// Noise draws per validation document.
    pub valid_eps_samples: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            n_topics: 25,
            embed_dim: 100,
            topic_embed_dim: 100,
            hidden_dim: 200,
            readout_dim: 100,
            doc_hidden_dim: 200,
            enc_hidden_dim: 200,
            decoder_cell: DecoderCell::Elman,
            sampled_vocab_size: 4000,
            batch_size: 1,
            clip_norm: 5.0,
            adadelta_rho: 0.95,
            adadelta_eps: 1e-6,
            patience: 3,
            max_epochs: 20,
            seed: 0,
            init_scale: 0.08,
            valid_eps_samples: 1,
        }
    }
}

impl TrainConfig {
    pub fn dims(&self, vocab_size: usize) -> Dims {
        Dims {
            vocab_size,
            n_topics: self.n_topics,
            embed_dim: self.embed_dim,
            topic_embed_dim: self.topic_embed_dim,
            hidden_dim: self.hidden_dim,
            readout_dim: self.readout_dim,
            doc_hidden_dim: self.doc_hidden_dim,
            enc_hidden_dim: self.enc_hidden_dim,
            cell: self.decoder_cell,
        }
    }

    /// Checks everything except the sizes, which [`Dims::validate`] covers.
    pub fn validate(&self, vocab_size: usize) -> Result<()> {
        self.dims(vocab_size).validate()?;
        let bad = |m: &str| Err(Error::InvalidArgument(m.to_string()));
        if self.sampled_vocab_size > vocab_size {
            return bad(&format!(
                "sampled_vocab_size {} exceeds the vocabulary size {vocab_size}",
                self.sampled_vocab_size
            ));
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if self.clip_norm.is_nan() || self.clip_norm <= 0.0 {
            return bad("clip_norm must be positive");
        }
        if !(self.adadelta_rho > 0.0 && self.adadelta_rho < 1.0) {
            return bad("adadelta_rho must lie in (0, 1)");
        }
        if self.adadelta_eps.is_nan() || self.adadelta_eps <= 0.0 {
            return bad("adadelta_eps must be positive");
        }
        if self.patience == 0 {
            return bad("patience must be positive");
        }
        if self.init_scale.is_nan() || self.init_scale < 0.0 {
            return bad("init_scale must be non-negative");
        }
        if self.valid_eps_samples == 0 {
            return bad("valid_eps_samples must be positive");
        }
        Ok(())
    }

    /// Ordered `(key, value)` pairs, as written by [`fmt::Display`].
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        vec![
            ("n_topics", self.n_topics.to_string()),
            ("embed_dim", self.embed_dim.to_string()),
            ("topic_embed_dim", self.topic_embed_dim.to_string()),
            ("hidden_dim", self.hidden_dim.to_string()),
            ("readout_dim", self.readout_dim.to_string()),
            ("doc_hidden_dim", self.doc_hidden_dim.to_string()),
            ("enc_hidden_dim", self.enc_hidden_dim.to_string()),
            ("decoder_cell", self.decoder_cell.to_string()),
            ("sampled_vocab_size", self.sampled_vocab_size.to_string()),
            ("batch_size", self.batch_size.to_string()),
            ("clip_norm", self.clip_norm.to_string()),
            ("adadelta_rho", self.adadelta_rho.to_string()),
            ("adadelta_eps", self.adadelta_eps.to_string()),
            ("patience", self.patience.to_string()),
            ("max_epochs", self.max_epochs.to_string()),
            ("seed", self.seed.to_string()),
            ("init_scale", self.init_scale.to_string()),
            ("valid_eps_samples", self.valid_eps_samples.to_string()),
        ]
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: FromStr>(key: &str, value: &str) -> Result<T> {
            value
                .parse()
                .map_err(|_| Error::InvalidArgument(format!("bad value {value:?} for {key}")))
        }
        match key {
            "n_topics" => self.n_topics = num(key, value)?,
            "embed_dim" => self.embed_dim = num(key, value)?,
            "topic_embed_dim" => self.topic_embed_dim = num(key, value)?,
            "hidden_dim" => self.hidden_dim = num(key, value)?,
            "readout_dim" => self.readout_dim = num(key, value)?,
            "doc_hidden_dim" => self.doc_hidden_dim = num(key, value)?,
            "enc_hidden_dim" => self.enc_hidden_dim = num(key, value)?,
            "decoder_cell" => self.decoder_cell = value.parse()?,
            "sampled_vocab_size" => self.sampled_vocab_size = num(key, value)?,
            "batch_size" => self.batch_size = num(key, value)?,
            "clip_norm" => self.clip_norm = num(key, value)?,
            "adadelta_rho" => self.adadelta_rho = num(key, value)?,
            "adadelta_eps" => self.adadelta_eps = num(key, value)?,
            "patience" => self.patience = num(key, value)?,
            "max_epochs" => self.max_epochs = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            "init_scale" => self.init_scale = num(key, value)?,
            "valid_eps_samples" => self.valid_eps_samples = num(key, value)?,
            other => return Err(Error::InvalidArgument(format!("unknown config key {other:?}"))),
        }
        Ok(())
    }

    /// Parses `key=value` lines over the defaults.
    pub fn parse(text: &str, source: &str) -> Result<Self> {
        let mut config = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let location = format!("{source}:{}", i + 1);
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::parse(&location, format!("expected key=value, got {line:?}")))?;
            config
                .set(k.trim(), v.trim())
                .map_err(|e| Error::parse(&location, e.to_string()))?;
        }
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }
}

impl fmt::Display for TrainConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, v) in self.entries() {
            writeln!(f, "{k}={v}")?;
        }
        Ok(())
    }
}

impl FromStr for TrainConfig {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::parse(s, "config")
    }
}
