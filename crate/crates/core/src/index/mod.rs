//! Fingerprint stores, exact cosine top-K search and recall@K evaluation.

mod query;
mod recall;
mod store;

pub use query::{cosine, topk_query, Hit, RetrievalResult};
pub use recall::{cross_lingual_recall, recall_csv, recall_eval, sample_group, Direction, RecallReport, DEFAULT_KS};
pub use store::{build_store, ids_path, EmbeddingStore, STORE_MAGIC, STORE_VERSION};
