//! Sentence-level topic model with one recurrent decoder per topic,
//! trained by maximizing a variational lower bound.
//!
//! The guide under `book/` walks through the pipeline; its code blocks run
//! as doctests of this crate.

pub mod cli;
pub mod corpus;
pub mod encoder;
pub mod error;
pub mod generation;
pub mod model;
pub mod numerics;
pub mod objective;
pub mod oracle;
pub mod params;
pub mod trainer;

#[cfg(test)]
pub(crate) mod testutil;

#[cfg(test)]
extern crate self as sengen;

pub use error::{Error, Result};
pub use params::{DecoderCell, Dims, Params};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/corpus.md")]
    mod corpus {}
    #[doc = include_str!("../../../book/src/model.md")]
    mod model {}
    #[doc = include_str!("../../../book/src/objective.md")]
    mod objective {}
    #[doc = include_str!("../../../book/src/training.md")]
    mod training {}
    #[doc = include_str!("../../../book/src/generation.md")]
    mod generation {}
    #[doc = include_str!("../../../book/src/synthetic.md")]
    mod synthetic {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
