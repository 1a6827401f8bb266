//! Core of the trajectory query workbench.
//!
//! Everything in this crate is pure computation over in-memory data and
//! builds without `std` (an allocator is required):
//!
//! - [`store`]: the immutable columnar [`TrajectoryStore`] of attributes,
//!   events and intervals, plus deterministic per-trajectory splits.
//! - [`query`]: lexer, parser, canonical formatter and autocomplete for the
//!   temporal query language.
//! - [`engine`]: evaluation of parsed queries into typed series aligned to
//!   timestep indexes.
//! - [`profile`]: compact result summaries for live result tiles.
//! - [`model`]: design matrices, gradient-boosted tree prototypes, metrics
//!   and specification alerts.
//! - [`subgroup`]: rule-based subgroup discovery with a discovery/evaluation
//!   split.
//!
//! File formats, caching on disk, the HTTP service and the CLI live in the
//! `trajql-workbench` crate.
#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod engine;
pub mod hash;
pub mod model;
pub mod profile;
pub mod query;
pub mod store;
pub mod subgroup;
pub mod value;

pub use engine::{evaluate, EvalError, QueryValue, TimeSeries, TimestepIndex};
pub use query::{format_canonical, parse, Expr, ParseError};
pub use store::{Split, SplitFractions, StoreBuilder, StoreError, TrajectoryStore};
pub use value::{DType, Scalar, TimeUnit};
