//! Self-describing checkpoint container.
//!
//! ```text
//! sengen-ckpt v1
//! K=<topics>
//! V=<vocabulary size>
//! E=<word embedding size>
//! E_z=<topic embedding size>
//! H=<decoder hidden size>
//! R=<readout size>
//! H_doc=<document encoder hidden size>
//! H_enc=<sentence encoder hidden size>
//! decoder_cell=<elman|gru>
//! ...further key=value lines (init scheme, epoch, seed, trainer constants)
//! end
//! ```
//!
//! followed by every tensor in canonical parameter order, each as a name
//! line, a shape line (space-separated dimensions) and the row-major values
//! as raw little-endian `f64`.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::numerics::Tensor;
use crate::params::{Dims, Params};

pub const MAGIC: &str = "sengen-ckpt v1";
const END: &str = "end";

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub params: Params,
    /// Metadata beyond the sizes, in file order.
    pub metadata: Vec<(String, String)>,
}

impl Checkpoint {
    pub fn new(params: Params) -> Self {
        Self {
            params,
            metadata: Vec::new(),
        }
    }

    pub fn with(mut self, key: &str, value: impl ToString) -> Self {
        self.set(key, value);
        self
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        let value = value.to_string();
        match self.metadata.iter_mut().find(|(k, _)| k == key) {
            Some(slot) => slot.1 = value,
            None => self.metadata.push((key.to_string(), value)),
        }
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.metadata
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn write<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let d = self.params.dims();
        writeln!(w, "{MAGIC}")?;
        writeln!(w, "K={}", d.n_topics)?;
        writeln!(w, "V={}", d.vocab_size)?;
        writeln!(w, "E={}", d.embed_dim)?;
        writeln!(w, "E_z={}", d.topic_embed_dim)?;
        writeln!(w, "H={}", d.hidden_dim)?;
        writeln!(w, "R={}", d.readout_dim)?;
        writeln!(w, "H_doc={}", d.doc_hidden_dim)?;
        writeln!(w, "H_enc={}", d.enc_hidden_dim)?;
        writeln!(w, "decoder_cell={}", d.cell)?;
        for (k, v) in &self.metadata {
            writeln!(w, "{k}={v}")?;
        }
        writeln!(w, "{END}")?;
        for (name, t) in self.params.named() {
            writeln!(w, "{name}")?;
            let shape: Vec<String> = t.shape().iter().map(usize::to_string).collect();
            writeln!(w, "{}", shape.join(" "))?;
            for v in t.data() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        w.flush()
    }

    pub fn read<R: BufRead>(mut r: R, source: &str) -> Result<Self> {
        let mut line_no = 0usize;
        let mut next_line = |r: &mut R| -> Result<String> {
            let mut buf = Vec::new();
            r.read_until(b'\n', &mut buf).map_err(|e| Error::io(source, e))?;
            line_no += 1;
            if buf.last() != Some(&b'\n') {
                return Err(Error::parse(source, "unexpected end of checkpoint"));
            }
            buf.pop();
            String::from_utf8(buf)
                .map_err(|_| Error::parse(format!("{source}:{line_no}"), "invalid UTF-8"))
        };

        if next_line(&mut r)? != MAGIC {
            return Err(Error::parse(source, format!("missing {MAGIC:?} header")));
        }
        let mut meta: Vec<(String, String)> = Vec::new();
        loop {
            let line = next_line(&mut r)?;
            if line == END {
                break;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::parse(source, format!("bad metadata line {line:?}")))?;
            meta.push((k.to_string(), v.to_string()));
        }
        let lookup: HashMap<&str, &str> = meta.iter().map(|(k, v)| (k.as_str(), v.as_str())).collect();
        let size = |key: &str| -> Result<usize> {
            lookup
                .get(key)
                .ok_or_else(|| Error::parse(source, format!("missing metadata key {key}")))?
                .parse()
                .map_err(|_| Error::parse(source, format!("bad value for {key}")))
        };
        let dims = Dims {
            vocab_size: size("V")?,
            n_topics: size("K")?,
            embed_dim: size("E")?,
            topic_embed_dim: size("E_z")?,
            hidden_dim: size("H")?,
            readout_dim: size("R")?,
            doc_hidden_dim: size("H_doc")?,
            enc_hidden_dim: size("H_enc")?,
            cell: lookup
                .get("decoder_cell")
                .ok_or_else(|| Error::parse(source, "missing metadata key decoder_cell"))?
                .parse()?,
        };
        dims.validate()?;

        let params = Params::build(&dims, &mut |name, shape| {
            let got = next_line(&mut r)?;
            if got != name {
                return Err(Error::parse(
                    source,
                    format!("expected tensor {name:?}, found {got:?}"),
                ));
            }
            let shape_line = next_line(&mut r)?;
            let got_shape: Vec<usize> = shape_line
                .split(' ')
                .map(|s| s.parse())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| Error::parse(source, format!("bad shape line {shape_line:?}")))?;
            if got_shape != shape {
                return Err(Error::parse(
                    source,
                    format!("tensor {name}: shape {got_shape:?}, expected {shape:?}"),
                ));
            }
            let n: usize = shape.iter().product();
            let mut bytes = vec![0u8; n * 8];
            r.read_exact(&mut bytes).map_err(|e| Error::io(source, e))?;
            let data = bytes
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
                .collect();
            Ok(Tensor::new(shape.to_vec(), data)?)
        })?;

        const SIZE_KEYS: [&str; 9] = ["K", "V", "E", "E_z", "H", "R", "H_doc", "H_enc", "decoder_cell"];
        let metadata = meta
            .into_iter()
            .filter(|(k, _)| !SIZE_KEYS.contains(&k.as_str()))
            .collect();
        Ok(Self { params, metadata })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = File::create(path).map_err(|e| Error::io(path, e))?;
        self.write(BufWriter::new(f)).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read(BufReader::new(f), &path.display().to_string())
    }
}
