//! Constrained-sequence code toolkit: constraint capacity, the 4B6B code and
//! shuffled concatenations of it, an OOK/AWGN channel, table-lookup, ML and
//! neural decoders, neural training, and Monte-Carlo BER evaluation.

pub mod channel;
pub mod codebook;
pub mod constraint;
pub mod decoder;
pub mod error;
pub mod eval;
pub mod neural;
pub mod training;

pub use error::{Error, Result};
