//! Layered defenses for natural-language-to-SQL applications.
//!
//! Prompts pass through two pre-translation layers: the input security shield
//! ([`shield`]), which labels prompts by keyword/character risk, and the
//! threat detector ([`detect`]), which classifies prompts into five semantic
//! threat categories. Generated SQL then passes the query signature control
//! layer ([`signature`]), a character allowlist plus a categorized keyword
//! blocklist over a minimal SQL lexer. The [`pipeline`] module composes the
//! layers with a pluggable translator, [`corpus`] generates and loads labeled
//! attack/legitimate sample sets, and [`eval`] measures layer configurations
//! against a corpus, reporting per-attack confusion matrices and derived
//! metrics.

pub mod config;
pub mod corpus;
pub mod detect;
pub mod eval;
pub mod naive;
pub mod pipeline;
pub mod shield;
pub mod signature;

pub use config::AppConfig;
pub use pipeline::{process_request, Layer, LayerConfig, PipelineResult, Translator};
