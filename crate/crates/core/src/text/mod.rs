//! Tokenization, the inverted index and the base retrieval scorers.

mod index;
mod lm;
mod persist;
mod ranked;
mod scoring;
mod tokenize;

pub use index::{read_corpus, InvertedIndex, Posting};
pub use lm::LanguageModel;
pub use persist::{INDEX_MAGIC, INDEX_VERSION};
pub use ranked::RankedList;
pub use scoring::{rm3_expand, score_bm25, score_ql_dirichlet, Bm25Params, Rm3Params, DEFAULT_MU};
pub use tokenize::{tokenize, Tokenizer};
