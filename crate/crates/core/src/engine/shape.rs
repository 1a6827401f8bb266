//! Broadcasting between result shapes.

use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use super::{type_error, Column, EvalError, QueryValue, TimeSeries, TimestepIndex};
use crate::value::{DType, Scalar};

/// Intermediate value: a query result or a scalar constant that combines
/// with any shape.
#[derive(Clone, Debug)]
pub(crate) enum Val {
    Const(Option<Scalar>, DType),
    Q(QueryValue),
}

impl Val {
    pub fn dtype(&self) -> DType {
        match self {
            Val::Const(_, d) => *d,
            Val::Q(q) => q.dtype(),
        }
    }

    pub fn shape(&self) -> Shape {
        match self {
            Val::Const(..) => Shape::Const,
            Val::Q(QueryValue::Attributes { traj, .. }) => Shape::Attr(traj.clone()),
            Val::Q(QueryValue::Events { traj, times, .. }) => Shape::Events(traj.clone(), times.clone()),
            Val::Q(QueryValue::Intervals { traj, starts, ends, .. }) => {
                Shape::Intervals(traj.clone(), starts.clone(), ends.clone())
            }
            Val::Q(QueryValue::TimeSeries(ts)) => Shape::Series(ts.index.clone()),
        }
    }
}

#[derive(Clone, Debug)]
pub(crate) enum Shape {
    Const,
    Attr(Vec<u32>),
    Events(Vec<u32>, Vec<f64>),
    Intervals(Vec<u32>, Vec<f64>, Vec<f64>),
    Series(Arc<TimestepIndex>),
}

impl Shape {
    pub fn len(&self) -> usize {
        match self {
            Shape::Const => 1,
            Shape::Attr(t) | Shape::Events(t, _) | Shape::Intervals(t, _, _) => t.len(),
            Shape::Series(ix) => ix.len(),
        }
    }

    pub fn traj(&self) -> Option<&[u32]> {
        match self {
            Shape::Const => None,
            Shape::Attr(t) | Shape::Events(t, _) | Shape::Intervals(t, _, _) => Some(t),
            Shape::Series(ix) => Some(&ix.traj),
        }
    }

    fn name(&self) -> &'static str {
        match self {
            Shape::Const => "constant",
            Shape::Attr(_) => "attribute",
            Shape::Events(..) => "event",
            Shape::Intervals(..) => "interval",
            Shape::Series(_) => "timeseries",
        }
    }

    pub fn build(self, column: Column) -> Val {
        match self {
            Shape::Const => {
                let v = column.values.into_iter().next().flatten();
                Val::Const(v, column.dtype)
            }
            Shape::Attr(traj) => Val::Q(QueryValue::Attributes { traj, column }),
            Shape::Events(traj, times) => Val::Q(QueryValue::Events { traj, times, column }),
            Shape::Intervals(traj, starts, ends) => Val::Q(QueryValue::Intervals { traj, starts, ends, column }),
            Shape::Series(index) => Val::Q(QueryValue::TimeSeries(TimeSeries { index, column })),
        }
    }
}

/// Shape of `a op b`.
pub(crate) fn join(a: Shape, b: Shape) -> Result<Shape, EvalError> {
    Ok(match (a, b) {
        (Shape::Const, s) | (s, Shape::Const) => s,
        (Shape::Attr(x), Shape::Attr(y)) => {
            let mut traj = x;
            traj.extend(y);
            traj.sort_unstable();
            traj.dedup();
            Shape::Attr(traj)
        }
        (Shape::Attr(_), s) | (s, Shape::Attr(_)) => s,
        (Shape::Events(t1, x1), Shape::Events(t2, x2)) => {
            if t1 != t2 || x1 != x2 {
                return Err(type_error("event series with different rows cannot be combined; aggregate them first"));
            }
            Shape::Events(t1, x1)
        }
        (Shape::Intervals(t1, s1, e1), Shape::Intervals(t2, s2, e2)) => {
            if t1 != t2 || s1 != s2 || e1 != e2 {
                return Err(type_error(
                    "interval series with different rows cannot be combined; aggregate them first",
                ));
            }
            Shape::Intervals(t1, s1, e1)
        }
        (Shape::Series(a), Shape::Series(b)) => {
            if !TimestepIndex::same_rows(&a, &b) {
                return Err(EvalError::IndexMismatch(alloc::format!(
                    "`{}` and `{}` have different timesteps",
                    a.provenance, b.provenance
                )));
            }
            Shape::Series(a)
        }
        (a, b) => {
            return Err(type_error(alloc::format!("cannot combine {} and {} series", a.name(), b.name())));
        }
    })
}

/// Values of `v` for every row of `target`, which must be `v`'s own shape or
/// a shape produced by [`join`] with it.
pub(crate) fn align(v: &Val, target: &Shape) -> Vec<Option<Scalar>> {
    let n = target.len();
    match v {
        Val::Const(x, _) => vec![x.clone(); n],
        Val::Q(QueryValue::Attributes { traj, column }) => match target.traj() {
            Some(rows) if rows.len() == traj.len() && rows == traj.as_slice() => column.values.clone(),
            Some(rows) => rows
                .iter()
                .map(|t| traj.binary_search(t).ok().and_then(|i| column.values[i].clone()))
                .collect(),
            None => vec![None; n],
        },
        Val::Q(q) => q.column().values.clone(),
    }
}
