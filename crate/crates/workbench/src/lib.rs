//! Files, caching, jobs and the HTTP service around `trajql-core`.
//!
//! The `trajql` binary wraps the same [`workspace::Workspace`] the service
//! uses, so both print identical JSON for identical requests.

pub mod api;
pub mod cache;
pub mod dataset;
pub mod error;
pub mod export;
pub mod fixtures;
pub mod jobs;
pub mod workspace;

pub use error::WorkbenchError;
pub use workspace::Workspace;
