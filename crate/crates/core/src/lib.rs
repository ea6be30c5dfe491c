//! Cloze-style pseudo training data and an attention-based reader for
//! anaphoric zero pronoun resolution.
//!
//! The pipeline runs in this order:
//!
//! 1. [`corpus`] loads POS-tagged documents and gold zero-pronoun annotations.
//! 2. [`pseudogen`] blanks a repeated noun or pronoun to build `<D, Q, A>`
//!    triples, and turns annotated gaps into triples of the same shape.
//! 3. [`vocab`] builds a frequency shortlist and maps each triple to ids,
//!    numbering its unknown words by first occurrence.
//! 4. [`reader`] is the bidirectional-GRU attentive reader, built on the
//!    small reverse-mode core in [`tensor`].
//! 5. [`trainer`] runs ADAM with global-norm clipping, and the
//!    pre-train-then-adapt driver.
//! 6. [`resolver`] maps a predicted word onto the nearest candidate NP whose
//!    head matches, and [`evaluator`] scores the result per domain.
//!
//! Data-parallel loops go through [`exec`]; they use rayon when the
//! `parallel` feature is on and run sequentially otherwise.

pub mod corpus;
pub mod error;
pub mod evaluator;
pub mod exec;
pub mod pseudogen;
pub mod reader;
pub mod resolver;
pub mod rng;
pub mod synth;
pub mod tensor;
pub mod trainer;
pub mod vocab;

pub use error::{Error, Result};
