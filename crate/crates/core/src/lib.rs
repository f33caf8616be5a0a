//! Detection of guest-nationality references in German hotel reviews.
//!
//! The pipeline segments reviews into unique sentences, pre-filters them with a
//! nationality gazetteer (seed terms, inflections and embedding-neighbour slang), trains
//! dictionary, TF-IDF + linear SVM and (Bi)LSTM classifiers, and aggregates positive
//! detections into per-business composition estimates exported as GeoJSON.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases below fix the
//! 64-bit variants used by checkpoints and the command line.

pub mod composition;
pub mod corpus;
pub mod country;
pub mod dataset;
pub mod embeddings;
pub mod eval;
pub mod gazetteer;
pub mod hash;
pub mod models;
pub mod qualitative;
pub mod scalar;
pub mod synthetic;

pub use scalar::Scalar;

pub type EmbeddingTable = embeddings::EmbeddingTable<f64>;
pub type SubwordHasher = embeddings::SubwordHasher<f64>;
pub type TfidfVectorizer = models::tfidf::TfidfVectorizer<f64>;
pub type TfidfSvm = models::svm::TfidfSvm<f64>;
pub type RecurrentClassifier = models::recurrent::RecurrentClassifier<f64>;

pub type EmbeddingTable32 = embeddings::EmbeddingTable<f32>;
pub type SubwordHasher32 = embeddings::SubwordHasher<f32>;
pub type RecurrentClassifier32 = models::recurrent::RecurrentClassifier<f32>;
