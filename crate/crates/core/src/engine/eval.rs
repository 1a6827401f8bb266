use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use super::aggregate::{aggregate, Operand};
use super::ops::{apply_binary, apply_unary, binary_dtype, unary_dtype};
use super::shape::{align, join, Shape, Val};
use super::timesteps::resolve_with;
use super::transform::{as_unit, cut, impute};
use super::{type_error, Column, EvalError, QueryValue, SplitScope, TimeSeries, TimestepIndex};
use crate::query::ast::*;
use crate::query::format_timestep_def;
use crate::store::{FieldData, TrajectoryStore};
use crate::value::{DType, Scalar};

/// Evaluates expressions against one store and counts the aggregation work
/// it performs.
pub struct Evaluator<'s> {
    store: &'s TrajectoryStore,
    /// Aggregation nodes evaluated so far.
    pub aggregations: usize,
}

impl<'s> Evaluator<'s> {
    pub fn new(store: &'s TrajectoryStore) -> Self {
        Evaluator { store, aggregations: 0 }
    }

    pub fn store(&self) -> &'s TrajectoryStore {
        self.store
    }

    pub fn evaluate(
        &mut self,
        expr: &Expr,
        index: Option<&Arc<TimestepIndex>>,
        scope: SplitScope,
    ) -> Result<QueryValue, EvalError> {
        let value = self.evaluate_unscoped(expr, index)?;
        Ok(value.restrict(self.store, scope))
    }

    pub(crate) fn evaluate_unscoped(
        &mut self,
        expr: &Expr,
        index: Option<&Arc<TimestepIndex>>,
    ) -> Result<QueryValue, EvalError> {
        let v = self.eval(expr, index)?;
        Ok(match v {
            Val::Q(q) => q,
            Val::Const(x, dtype) => match index {
                Some(ix) => QueryValue::TimeSeries(TimeSeries {
                    index: ix.clone(),
                    column: Column::new(dtype, vec![x; ix.len()]),
                }),
                None => {
                    let n = self.store.trajectory_count();
                    QueryValue::Attributes { traj: (0..n as u32).collect(), column: Column::new(dtype, vec![x; n]) }
                }
            },
        })
    }

    pub fn resolve_timesteps(&mut self, def: &TimestepDef) -> Result<Arc<TimestepIndex>, EvalError> {
        resolve_with(self, def)
    }

    fn eval(&mut self, e: &Expr, ctx: Option<&Arc<TimestepIndex>>) -> Result<Val, EvalError> {
        match e {
            Expr::Field(f) => self.field(f),
            Expr::Number(x) => Ok(Val::Const(Some(Scalar::Number(*x)), DType::Number)),
            Expr::Text(s) => Ok(Val::Const(Some(Scalar::Text(s.clone())), DType::Category)),
            Expr::Duration(d) => {
                let x = d.value * d.unit.in_time_unit(self.store.time_unit());
                Ok(Val::Const(Some(Scalar::Number(x)), DType::Number))
            }
            Expr::Now => {
                let ix = ctx.ok_or_else(|| EvalError::MissingTimesteps("`#now`".into()))?;
                let values = ix.times.iter().map(|&t| Some(Scalar::Number(t))).collect();
                Ok(Val::Q(QueryValue::TimeSeries(TimeSeries {
                    index: ix.clone(),
                    column: Column::new(DType::Number, values),
                })))
            }
            Expr::Binary { op, lhs, rhs } => {
                let l = self.eval(lhs, ctx)?;
                let r = self.eval(rhs, ctx)?;
                let dtype = binary_dtype(*op, l.dtype(), r.dtype())?;
                let shape = join(l.shape(), r.shape())?;
                let (lv, rv) = (align(&l, &shape), align(&r, &shape));
                let values = lv.iter().zip(&rv).map(|(a, b)| apply_binary(*op, a.as_ref(), b.as_ref())).collect();
                Ok(shape.build(Column::new(dtype, values)))
            }
            Expr::Unary { op, operand } => {
                let v = self.eval(operand, ctx)?;
                let dtype = unary_dtype(*op, v.dtype())?;
                let shape = v.shape();
                let values = align(&v, &shape).iter().map(|a| apply_unary(*op, a.as_ref())).collect();
                Ok(shape.build(Column::new(dtype, values)))
            }
            Expr::TimeFn { func, arg } => {
                let v = self.eval(arg, ctx)?;
                time_fn(*func, v)
            }
            Expr::Aggregate(agg) => self.aggregate(agg, ctx),
            Expr::Transform { transform, operand } => {
                let v = self.eval(operand, ctx)?;
                match transform {
                    Transform::Impute(s) => impute(v, s, self.store),
                    Transform::Cut(spec) => cut(v, spec, self.store),
                    Transform::As(unit) => as_unit(v, *unit, self.store),
                    Transform::Where(pred) => {
                        let p = self.eval(pred, ctx)?;
                        apply_where(v, p)
                    }
                }
            }
            Expr::AtEvery { operand, timesteps } => match ctx {
                Some(ix) => {
                    let def = format_timestep_def(timesteps);
                    if ix.definition != def {
                        return Err(EvalError::IndexMismatch(alloc::format!(
                            "`at every` clause `{}` differs from the enclosing `{}`",
                            def, ix.definition
                        )));
                    }
                    self.eval(operand, ctx)
                }
                None => {
                    let ix = self.resolve_timesteps(timesteps)?;
                    self.eval(operand, Some(&ix))
                }
            },
        }
    }

    fn field(&mut self, f: &FieldRef) -> Result<Val, EvalError> {
        let field = self.store.field(&f.name).ok_or_else(|| EvalError::UnknownField(f.name.clone()))?;
        let column = Column::new(field.value_dtype(), field.data.values().to_vec());
        let q = match &field.data {
            FieldData::Attribute(r) => QueryValue::Attributes { traj: r.traj.clone(), column },
            FieldData::Event(r) => QueryValue::Events { traj: r.traj.clone(), times: r.times.clone(), column },
            FieldData::Interval(r) => QueryValue::Intervals {
                traj: r.traj.clone(),
                starts: r.starts.clone(),
                ends: r.ends.clone(),
                column,
            },
        };
        let Some(filter) = &f.filter else { return Ok(Val::Q(q)) };
        let (lit, lit_dtype) = match &filter.value {
            Literal::Number(x) => (Scalar::Number(*x), DType::Number),
            Literal::Text(s) => (Scalar::Text(s.clone()), DType::Category),
        };
        binary_dtype(filter.op, q.dtype(), lit_dtype)?;
        let keep: Vec<bool> = q
            .column()
            .values
            .iter()
            .map(|v| apply_binary(filter.op, v.as_ref(), Some(&lit)) == Some(Scalar::Boolean(true)))
            .collect();
        let v = Val::Q(q);
        let shape = v.shape();
        let values = align(&v, &shape);
        Ok(select_rows(shape, Column::new(v.dtype(), values), &keep))
    }

    fn aggregate(&mut self, agg: &Aggregation, ctx: Option<&Arc<TimestepIndex>>) -> Result<Val, EvalError> {
        let ix = ctx.ok_or_else(|| EvalError::MissingTimesteps(alloc::format!("`{}`", agg.func.name())))?;
        self.aggregations += 1;
        let operand = self.eval(&agg.operand, ctx)?;
        let (from, to) = match &agg.window {
            Window::Between { from, to } => (Some(from), Some(to)),
            Window::Before(t) => (None, Some(t)),
            Window::After(t) => (Some(t), None),
        };
        let lo = match from {
            Some(e) => self.bound(e, ix)?,
            None => vec![Some(f64::NEG_INFINITY); ix.len()],
        };
        let hi = match to {
            Some(e) => self.bound(e, ix)?,
            None => vec![Some(f64::INFINITY); ix.len()],
        };
        let bounds: Vec<Option<(f64, f64)>> = lo.into_iter().zip(hi).map(|(a, b)| Some((a?, b?))).collect();
        let n_traj = self.store.trajectory_count();
        let column = match &operand {
            Val::Q(QueryValue::Events { traj, times, column }) => {
                aggregate(agg.func, &Operand { traj, starts: times, ends: None, column }, ix, &bounds, n_traj)?
            }
            Val::Q(QueryValue::Intervals { traj, starts, ends, column }) => {
                aggregate(agg.func, &Operand { traj, starts, ends: Some(ends), column }, ix, &bounds, n_traj)?
            }
            Val::Q(QueryValue::TimeSeries(ts)) => {
                if !TimestepIndex::same_rows(&ts.index, ix) {
                    return Err(EvalError::IndexMismatch("nested aggregation on different timesteps".into()));
                }
                let op = Operand { traj: &ts.index.traj, starts: &ts.index.times, ends: None, column: &ts.column };
                aggregate(agg.func, &op, ix, &bounds, n_traj)?
            }
            Val::Q(QueryValue::Attributes { .. }) => {
                return Err(type_error(alloc::format!(
                    "`{}` cannot aggregate an attribute; attributes are constant per trajectory",
                    agg.func.name()
                )))
            }
            Val::Const(..) => {
                return Err(type_error(alloc::format!("`{}` cannot aggregate a constant", agg.func.name())))
            }
        };
        Ok(Val::Q(QueryValue::TimeSeries(TimeSeries { index: ix.clone(), column })))
    }

    /// A window bound, one value per index row.
    fn bound(&mut self, e: &Expr, ix: &Arc<TimestepIndex>) -> Result<Vec<Option<f64>>, EvalError> {
        let v = self.eval(e, Some(ix))?;
        if v.dtype() != DType::Number {
            return Err(type_error(alloc::format!("window bounds must be times, got {}", v.dtype())));
        }
        let shape = join(Shape::Series(ix.clone()), v.shape())?;
        Ok(align(&v, &shape).iter().map(|x| x.as_ref().and_then(Scalar::as_f64)).collect())
    }
}

fn time_fn(func: TimeFn, v: Val) -> Result<Val, EvalError> {
    let times = |xs: &[f64]| Column::new(DType::Number, xs.iter().map(|&t| Some(Scalar::Number(t))).collect());
    let q = match (func, v) {
        (_, Val::Q(QueryValue::Events { traj, times: t, .. })) => {
            QueryValue::Events { column: times(&t), traj, times: t }
        }
        (TimeFn::StartTime, Val::Q(QueryValue::Intervals { traj, starts, ends, .. })) => {
            QueryValue::Intervals { column: times(&starts), traj, starts, ends }
        }
        (TimeFn::EndTime, Val::Q(QueryValue::Intervals { traj, starts, ends, .. })) => {
            QueryValue::Intervals { column: times(&ends), traj, starts, ends }
        }
        (TimeFn::Time, Val::Q(QueryValue::Intervals { .. })) => {
            return Err(type_error("`time` of an interval is ambiguous; use `starttime` or `endtime`"))
        }
        (TimeFn::Time, Val::Q(QueryValue::TimeSeries(ts))) => {
            QueryValue::TimeSeries(TimeSeries { column: times(&ts.index.times), index: ts.index })
        }
        (func, _) => {
            return Err(type_error(alloc::format!("`{}` needs an event or interval series", func.name())));
        }
    };
    Ok(Val::Q(q))
}

/// Rows where the predicate is true keep their values. Time series keep
/// their rows and turn the rest missing; other shapes drop them.
fn apply_where(v: Val, pred: Val) -> Result<Val, EvalError> {
    if pred.dtype() != DType::Boolean {
        return Err(type_error(alloc::format!("`where` needs a boolean predicate, got {}", pred.dtype())));
    }
    let dtype = v.dtype();
    let shape = join(v.shape(), pred.shape())?;
    let values = align(&v, &shape);
    let keep: Vec<bool> = align(&pred, &shape).iter().map(|p| *p == Some(Scalar::Boolean(true))).collect();
    Ok(match shape {
        Shape::Const | Shape::Series(_) => {
            let values = values.into_iter().zip(&keep).map(|(x, k)| if *k { x } else { None }).collect();
            shape.build(Column::new(dtype, values))
        }
        _ => select_rows(shape, Column::new(dtype, values), &keep),
    })
}

fn select_rows(shape: Shape, column: Column, keep: &[bool]) -> Val {
    fn pick<T: Copy>(xs: &[T], keep: &[bool]) -> Vec<T> {
        xs.iter().zip(keep).filter(|(_, k)| **k).map(|(x, _)| *x).collect()
    }
    let column = column.select(keep);
    match shape {
        Shape::Attr(t) => Shape::Attr(pick(&t, keep)),
        Shape::Events(t, x) => Shape::Events(pick(&t, keep), pick(&x, keep)),
        Shape::Intervals(t, s, e) => Shape::Intervals(pick(&t, keep), pick(&s, keep), pick(&e, keep)),
        Shape::Series(ix) => Shape::Series(Arc::new(ix.filter(keep, "where"))),
        Shape::Const => Shape::Const,
    }
    .build(column)
}
