pub mod assets;
pub mod docstore;
pub mod embed;
pub mod error;
pub mod generation;
pub mod intent;
pub mod lang;
pub mod lexical;
pub mod providers;
pub mod queryparse;
pub mod retrieval;
pub mod service;
pub mod text;
pub mod toolplanner;

pub use docstore::{CorpusRecord, CorpusSnapshot, DocKind, Document};
pub use embed::{cosine_similarity, Embedder, EmbeddingVector, HashEmbedder};
pub use error::{Error, ProviderError, Result};
pub use generation::{FinalResponse, Reference, Warning};
pub use intent::{IntentClass, IntentPrediction};
pub use lang::{FrontDoor, LanguageTag, NormalizedQuery};
pub use retrieval::{CascadeTrace, EvidenceSet, Stage, StageRecord};
pub use service::{ChatRequest, ChatResponseWire, Config, Engine};
pub use toolplanner::{ToolLink, ToolRegistry};
