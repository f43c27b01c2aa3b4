//! Learning code-fix suggestions from code review history.
//!
//! The pipeline mines review comments and the revisions they triggered,
//! localizes each change, tokenizes code and comments into one lossless
//! token stream, trains a pointer-generator encoder-decoder and decodes
//! ranked fix suggestions that apply as patches.

pub mod localize;
pub mod tokenize;
pub mod corpus;
pub mod miner;
pub mod seqbuild;
pub mod neural;
pub mod infer;
pub mod eval;
pub mod pipeline;
