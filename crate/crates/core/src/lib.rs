//! Orchestration building blocks for an education chat assistant.
//!
//! - [`prompt`]: three-part system prompts and per-scene tool/skill defaults.
//! - [`backend`]: the chat model seam, with a scripted mock and an HTTP client.
//! - [`retrieval`]: web snippet retrieval, model self-check filtering and injection.
//! - [`skills`]: essay assessment schema, Socratic lint, counseling stage tags.
//! - [`dedup`]: embedding-based semantic deduplication of instruction data.
//! - [`eval`]: multiple-choice evaluation harness.

pub mod backend;
pub mod dedup;
pub mod eval;
pub mod prompt;
pub mod retrieval;
pub mod skills;
pub mod template;

pub use template::{Locale, Templates};
