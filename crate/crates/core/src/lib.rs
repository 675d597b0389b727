//! Pair-wise blank resolution for contract inconsistency checking.
//!
//! Blanks in a contract carry no meaning of their own, so each one is
//! represented purely from the sentence around it: a Transformer encodes the
//! sentence, a masked pooling over the words nearest the gap gives an initial
//! blank vector, and a few gated refinement rounds pull in evidence from the
//! rest of the sentence. Two blank vectors are compared by a small classifier
//! that predicts whether the blanks should hold the same content.

pub mod blankcoder;
pub mod check;
pub mod corpus;
pub mod embedding;
pub mod error;
pub mod numerics;
pub mod pbr_head;
pub mod train_eval;

pub use error::{Error, Result};
