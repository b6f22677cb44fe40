//! Topical news text generation, end to end.
//!
//! Ingest a corpus, carve keyword-tagged topical subsets, train a word-level
//! LSTM language model per topic, decode text by sampling or beam search,
//! drop generated sentences that sit too close to the source corpus, assemble
//! articles under strict single-edit rules, and publish a static blog.
//!
//! Each module maps to one pipeline stage; [`pipeline`] chains them with
//! resumable, content-hashed artifacts and [`service`] exposes the human
//! curation step over HTTP.

pub mod assembler;
pub mod corpus;
pub mod decoder;
pub mod io;
pub mod lm;
pub mod novelty;
pub mod pipeline;
pub mod service;
pub mod site;
pub mod slug;
pub mod tagger;
