//! Service front door for the layered prompt-to-SQL pipeline: a small HTTP
//! API (`POST /v1/query`, `GET /v1/health`), append-only audit logging with
//! prompt digests instead of plaintext, and an in-memory flight-table
//! executor stub for demos and tests.

pub mod audit;
pub mod executor;
pub mod http;

pub use http::{build_state, router, AppState, QueryRequest, QueryResponse};
