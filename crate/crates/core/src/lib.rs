//! Repository-aware code comprehension pipeline: repository context
//! fetching, deterministic quality metrics, prompt construction, LLM
//! inference and response structuring.

pub mod dispatch;
pub mod inference;
pub mod language;
pub mod metrics;
pub mod prompt;
pub mod repo;
pub mod response;

pub use language::Language;
