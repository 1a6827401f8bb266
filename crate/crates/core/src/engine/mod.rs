//! Query evaluation.
//!
//! An expression evaluates to one of four result shapes: per-trajectory
//! attributes, timed events, intervals, or a time series with one slot per
//! row of a [`TimestepIndex`]. Aggregations are the only way to produce a
//! time series from raw data; everything else maps over rows.

use alloc::string::{String, ToString};
use alloc::sync::Arc;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::query::ast::{Expr, TimestepDef};
use crate::store::{Split, TrajectoryStore};
use crate::value::{DType, Scalar};

mod aggregate;
mod eval;
mod ops;
mod shape;
mod timesteps;
mod transform;


pub use eval::Evaluator;
pub use timesteps::resolve_timesteps;
pub use transform::{quantile_edges, range_labels};

/// Ordered `(trajectory, time)` rows at which aggregations are evaluated.
/// Row `i` is the shared identity of slot `i` in every series evaluated on
/// this index.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TimestepIndex {
    pub traj: Vec<u32>,
    pub times: Vec<f64>,
    /// Canonical text of the timestep definition, `every ...`.
    pub definition: String,
    /// Definition plus any row filters applied since.
    pub provenance: String,
}

impl PartialEq for TimestepIndex {
    fn eq(&self, other: &Self) -> bool {
        self.traj == other.traj && self.times == other.times
    }
}

impl TimestepIndex {
    pub fn new(traj: Vec<u32>, times: Vec<f64>, definition: String) -> Self {
        let provenance = definition.clone();
        TimestepIndex { traj, times, definition, provenance }
    }

    pub fn len(&self) -> usize {
        self.traj.len()
    }

    pub fn is_empty(&self) -> bool {
        self.traj.is_empty()
    }

    /// Keep the rows where `keep` is true. `note` is appended to the
    /// provenance when any row is dropped.
    pub fn filter(&self, keep: &[bool], note: &str) -> TimestepIndex {
        let mut traj = Vec::new();
        let mut times = Vec::new();
        for (i, &k) in keep.iter().enumerate() {
            if k {
                traj.push(self.traj[i]);
                times.push(self.times[i]);
            }
        }
        let provenance = if traj.len() == self.len() {
            self.provenance.clone()
        } else {
            alloc::format!("{} | {}", self.provenance, note)
        };
        TimestepIndex { traj, times, definition: self.definition.clone(), provenance }
    }

    pub fn same_rows(a: &Arc<TimestepIndex>, b: &Arc<TimestepIndex>) -> bool {
        Arc::ptr_eq(a, b) || **a == **b
    }
}

/// A typed value column; `None` is a missing value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Column {
    pub dtype: DType,
    pub values: Vec<Option<Scalar>>,
}

impl Column {
    pub fn new(dtype: DType, values: Vec<Option<Scalar>>) -> Self {
        Column { dtype, values }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn missing(&self) -> usize {
        self.values.iter().filter(|v| v.is_none()).count()
    }

    pub fn numbers(&self) -> impl Iterator<Item = Option<f64>> + '_ {
        self.values.iter().map(|v| v.as_ref().and_then(Scalar::as_f64))
    }

    fn select(&self, keep: &[bool]) -> Column {
        let values = self.values.iter().zip(keep).filter(|(_, k)| **k).map(|(v, _)| v.clone()).collect();
        Column { dtype: self.dtype, values }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    pub index: Arc<TimestepIndex>,
    pub column: Column,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ValueKind {
    Attribute,
    Event,
    Interval,
    TimeSeries,
}

impl ValueKind {
    pub fn name(self) -> &'static str {
        match self {
            ValueKind::Attribute => "attribute",
            ValueKind::Event => "event",
            ValueKind::Interval => "interval",
            ValueKind::TimeSeries => "timeseries",
        }
    }
}

/// Result of evaluating a query.
#[derive(Clone, Debug, PartialEq)]
pub enum QueryValue {
    /// At most one row per trajectory, sorted by trajectory.
    Attributes { traj: Vec<u32>, column: Column },
    /// Sorted by `(traj, time)`.
    Events { traj: Vec<u32>, times: Vec<f64>, column: Column },
    /// Sorted by `(traj, start, end)`.
    Intervals { traj: Vec<u32>, starts: Vec<f64>, ends: Vec<f64>, column: Column },
    TimeSeries(TimeSeries),
}

impl QueryValue {
    pub fn kind(&self) -> ValueKind {
        match self {
            QueryValue::Attributes { .. } => ValueKind::Attribute,
            QueryValue::Events { .. } => ValueKind::Event,
            QueryValue::Intervals { .. } => ValueKind::Interval,
            QueryValue::TimeSeries(_) => ValueKind::TimeSeries,
        }
    }

    pub fn column(&self) -> &Column {
        match self {
            QueryValue::Attributes { column, .. }
            | QueryValue::Events { column, .. }
            | QueryValue::Intervals { column, .. } => column,
            QueryValue::TimeSeries(ts) => &ts.column,
        }
    }

    pub fn dtype(&self) -> DType {
        self.column().dtype
    }

    pub fn len(&self) -> usize {
        self.column().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Trajectory of every row.
    pub fn traj(&self) -> &[u32] {
        match self {
            QueryValue::Attributes { traj, .. }
            | QueryValue::Events { traj, .. }
            | QueryValue::Intervals { traj, .. } => traj,
            QueryValue::TimeSeries(ts) => &ts.index.traj,
        }
    }

    pub fn as_time_series(&self) -> Option<&TimeSeries> {
        match self {
            QueryValue::TimeSeries(ts) => Some(ts),
            _ => None,
        }
    }

    /// Align to `index`: attributes are looked up per row; a time series must
    /// already live on the same rows.
    pub fn broadcast_to(&self, index: &Arc<TimestepIndex>) -> Result<TimeSeries, EvalError> {
        match self {
            QueryValue::TimeSeries(ts) if TimestepIndex::same_rows(&ts.index, index) => {
                Ok(TimeSeries { index: index.clone(), column: ts.column.clone() })
            }
            QueryValue::TimeSeries(ts) => Err(EvalError::IndexMismatch(alloc::format!(
                "series on `{}` cannot be used on `{}`",
                ts.index.provenance, index.provenance
            ))),
            QueryValue::Attributes { traj, column } => {
                let values = index
                    .traj
                    .iter()
                    .map(|t| traj.binary_search(t).ok().and_then(|i| column.values[i].clone()))
                    .collect();
                Ok(TimeSeries { index: index.clone(), column: Column::new(column.dtype, values) })
            }
            other => Err(EvalError::Type(alloc::format!(
                "{} series cannot be aligned to timesteps; aggregate it first",
                other.kind().name()
            ))),
        }
    }

    /// Keep rows whose trajectory is in `scope`.
    pub fn restrict(self, store: &TrajectoryStore, scope: SplitScope) -> QueryValue {
        if scope == SplitScope::ALL {
            return self;
        }
        let keep: Vec<bool> = self.traj().iter().map(|&t| scope.contains(store.split(t))).collect();
        let pick_f = |xs: &[f64]| -> Vec<f64> { xs.iter().zip(&keep).filter(|(_, k)| **k).map(|(x, _)| *x).collect() };
        let pick_t = |xs: &[u32]| -> Vec<u32> { xs.iter().zip(&keep).filter(|(_, k)| **k).map(|(x, _)| *x).collect() };
        match self {
            QueryValue::Attributes { traj, column } => {
                QueryValue::Attributes { traj: pick_t(&traj), column: column.select(&keep) }
            }
            QueryValue::Events { traj, times, column } => {
                QueryValue::Events { traj: pick_t(&traj), times: pick_f(&times), column: column.select(&keep) }
            }
            QueryValue::Intervals { traj, starts, ends, column } => QueryValue::Intervals {
                traj: pick_t(&traj),
                starts: pick_f(&starts),
                ends: pick_f(&ends),
                column: column.select(&keep),
            },
            QueryValue::TimeSeries(ts) => {
                let index = Arc::new(ts.index.filter(&keep, &scope.note()));
                QueryValue::TimeSeries(TimeSeries { index, column: ts.column.select(&keep) })
            }
        }
    }
}

/// Which splits' trajectories appear in a result.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitScope {
    pub train: bool,
    pub val: bool,
    pub test: bool,
}

impl SplitScope {
    pub const ALL: SplitScope = SplitScope { train: true, val: true, test: true };
    pub const TRAIN: SplitScope = SplitScope { train: true, val: false, test: false };

    pub fn contains(self, split: Split) -> bool {
        match split {
            Split::Train => self.train,
            Split::Val => self.val,
            Split::Test => self.test,
        }
    }

    fn note(self) -> String {
        let names: Vec<&str> = Split::ALL.iter().filter(|s| self.contains(**s)).map(|s| s.name()).collect();
        alloc::format!("splits {}", names.join("+"))
    }
}

impl Default for SplitScope {
    fn default() -> Self {
        SplitScope::ALL
    }
}

#[derive(Clone, Debug, PartialEq, Error)]
pub enum EvalError {
    #[error("unknown field `{0}`")]
    UnknownField(String),
    #[error("type error: {0}")]
    Type(String),
    #[error("{0} requires a timestep definition; add `at every ...` or evaluate it as a model variable")]
    MissingTimesteps(String),
    #[error("timestep mismatch: {0}")]
    IndexMismatch(String),
    #[error("invalid timestep definition: {0}")]
    InvalidTimesteps(String),
    #[error("{0}")]
    Statistic(String),
}

impl EvalError {
    pub fn code(&self) -> &'static str {
        match self {
            EvalError::UnknownField(_) => "unknown_field",
            EvalError::Type(_) => "type_error",
            EvalError::MissingTimesteps(_) => "missing_timesteps",
            EvalError::IndexMismatch(_) => "index_mismatch",
            EvalError::InvalidTimesteps(_) => "invalid_timesteps",
            EvalError::Statistic(_) => "statistic_error",
        }
    }
}

/// Evaluate `expr` against `store`. `index` supplies the timesteps for
/// aggregations when the query has no `at every` clause of its own. Output
/// rows are restricted to trajectories in `scope`; statistics of `impute`
/// and `cut` are always fitted on training trajectories.
pub fn evaluate(
    expr: &Expr,
    store: &TrajectoryStore,
    index: Option<&Arc<TimestepIndex>>,
    scope: SplitScope,
) -> Result<QueryValue, EvalError> {
    Evaluator::new(store).evaluate(expr, index, scope)
}

/// Source of named model variables. The model lab asks for each input and
/// the target through this trait so that callers can add caching.
pub trait VariableSource {
    fn variable(
        &mut self,
        name: &str,
        expr: &Expr,
        store: &TrajectoryStore,
        index: &Arc<TimestepIndex>,
    ) -> Result<QueryValue, EvalError>;

    fn timesteps(&mut self, def: &TimestepDef, store: &TrajectoryStore) -> Result<Arc<TimestepIndex>, EvalError> {
        resolve_timesteps(def, store)
    }
}

/// Evaluates every request; counts how many variables were computed.
#[derive(Default, Debug)]
pub struct DirectSource {
    pub computed: usize,
    pub aggregations: usize,
}

impl VariableSource for DirectSource {
    fn variable(
        &mut self,
        _name: &str,
        expr: &Expr,
        store: &TrajectoryStore,
        index: &Arc<TimestepIndex>,
    ) -> Result<QueryValue, EvalError> {
        let mut ev = Evaluator::new(store);
        let out = ev.evaluate(expr, Some(index), SplitScope::ALL)?;
        self.computed += 1;
        self.aggregations += ev.aggregations;
        Ok(out)
    }
}

pub(crate) fn type_error(message: impl ToString) -> EvalError {
    EvalError::Type(message.to_string())
}
