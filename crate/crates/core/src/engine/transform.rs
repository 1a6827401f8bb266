//! `impute`, `cut` and `as`. Statistics are fitted on rows of training
//! trajectories only and applied to every row.

use alloc::string::String;
use alloc::vec::Vec;

use super::shape::Val;
use super::{type_error, Column, EvalError, QueryValue};
use crate::query::ast::{CutBins, CutSpec, ImputeStrategy, Literal};
use crate::store::{Split, TrajectoryStore};
use crate::value::{format_edge, format_number, parse_boolean, DType, DurationUnit, Scalar};

fn map_column(v: Val, f: impl FnOnce(&Column) -> Column) -> Val {
    match v {
        Val::Const(x, d) => {
            let out = f(&Column::new(d, alloc::vec![x]));
            Val::Const(out.values.into_iter().next().flatten(), out.dtype)
        }
        Val::Q(q) => Val::Q(match q {
            QueryValue::Attributes { traj, column } => QueryValue::Attributes { column: f(&column), traj },
            QueryValue::Events { traj, times, column } => QueryValue::Events { column: f(&column), traj, times },
            QueryValue::Intervals { traj, starts, ends, column } => {
                QueryValue::Intervals { column: f(&column), traj, starts, ends }
            }
            QueryValue::TimeSeries(mut ts) => {
                ts.column = f(&ts.column);
                QueryValue::TimeSeries(ts)
            }
        }),
    }
}

/// Present values on rows of training trajectories.
fn train_values<'v>(v: &'v Val, store: &TrajectoryStore) -> Vec<&'v Scalar> {
    match v {
        Val::Const(x, _) => x.iter().collect(),
        Val::Q(q) => q
            .traj()
            .iter()
            .zip(&q.column().values)
            .filter(|(t, _)| store.split(**t) == Split::Train)
            .filter_map(|(_, x)| x.as_ref())
            .collect(),
    }
}

fn cast_literal(lit: &Literal, dtype: DType) -> Result<Scalar, EvalError> {
    match (lit, dtype) {
        (Literal::Number(x), DType::Number) => Ok(Scalar::Number(*x)),
        (Literal::Number(x), DType::Boolean) => Ok(Scalar::Boolean(*x != 0.0)),
        (Literal::Number(x), DType::Category) => Ok(Scalar::Text(format_number(*x))),
        (Literal::Text(s), DType::Category) => Ok(Scalar::Text(s.clone())),
        (Literal::Text(s), DType::Boolean) => parse_boolean(s)
            .map(Scalar::Boolean)
            .ok_or_else(|| type_error(alloc::format!("cannot impute \"{}\" into a boolean series", s))),
        (Literal::Text(s), DType::Number) => {
            Err(type_error(alloc::format!("cannot impute \"{}\" into a numeric series", s)))
        }
    }
}

pub(crate) fn impute(v: Val, strategy: &ImputeStrategy, store: &TrajectoryStore) -> Result<Val, EvalError> {
    let dtype = v.dtype();
    let fill = match strategy {
        ImputeStrategy::Constant(lit) => cast_literal(lit, dtype)?,
        ImputeStrategy::Mean | ImputeStrategy::Median => {
            if dtype != DType::Number {
                return Err(type_error(alloc::format!("`impute mean/median` needs numbers, got {}", dtype)));
            }
            let mut xs: Vec<f64> = train_values(&v, store).into_iter().filter_map(Scalar::as_f64).collect();
            if xs.is_empty() {
                return Err(no_train_values("impute"));
            }
            let stat = if matches!(strategy, ImputeStrategy::Mean) {
                xs.iter().sum::<f64>() / xs.len() as f64
            } else {
                xs.sort_by(f64::total_cmp);
                let m = xs.len() / 2;
                if xs.len() % 2 == 1 {
                    xs[m]
                } else {
                    (xs[m - 1] + xs[m]) / 2.0
                }
            };
            Scalar::Number(stat)
        }
        ImputeStrategy::Mode => {
            let mut xs = train_values(&v, store);
            if xs.is_empty() {
                return Err(no_train_values("impute"));
            }
            xs.sort_by(|a, b| a.total_cmp(b));
            let mut best = (xs[0], 0usize);
            let mut i = 0;
            while i < xs.len() {
                let mut j = i;
                while j < xs.len() && xs[j].total_cmp(xs[i]).is_eq() {
                    j += 1;
                }
                if j - i > best.1 {
                    best = (xs[i], j - i);
                }
                i = j;
            }
            best.0.clone()
        }
    };
    Ok(map_column(v, |c| {
        Column::new(c.dtype, c.values.iter().map(|x| Some(x.clone().unwrap_or_else(|| fill.clone()))).collect())
    }))
}

fn no_train_values(what: &str) -> EvalError {
    EvalError::Statistic(alloc::format!("`{}` found no values in the training split to fit on", what))
}

/// Quantile cut points at `i / n` for `i = 1..n`, by linear interpolation
/// between order statistics of `sorted`.
pub fn quantile_edges(sorted: &[f64], n: usize) -> Vec<f64> {
    let last = sorted.len() - 1;
    (1..n)
        .map(|i| {
            let pos = last as f64 * i as f64 / n as f64;
            let lo = libm::floor(pos) as usize;
            let hi = (lo + 1).min(last);
            sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
        })
        .collect()
}

/// `(-inf, e1]`, `(e1, e2]`, ..., `(ek, inf)`.
pub fn range_labels(edges: &[f64]) -> Vec<String> {
    let mut bounds = alloc::vec![f64::NEG_INFINITY];
    bounds.extend_from_slice(edges);
    bounds.push(f64::INFINITY);
    bounds
        .windows(2)
        .map(|w| {
            let close = if w[1] == f64::INFINITY { ")" } else { "]" };
            alloc::format!("({}, {}{}", format_edge(w[0]), format_edge(w[1]), close)
        })
        .collect()
}

/// Bin of `x` under left-open, right-closed bins split at `edges`.
pub(crate) fn bin_of(x: f64, edges: &[f64]) -> usize {
    edges.partition_point(|&e| x > e)
}

pub(crate) fn cut(v: Val, spec: &CutSpec, store: &TrajectoryStore) -> Result<Val, EvalError> {
    if v.dtype() != DType::Number {
        return Err(type_error(alloc::format!("`cut` needs numbers, got {}", v.dtype())));
    }
    let all_missing = match &v {
        Val::Const(x, _) => x.is_none(),
        Val::Q(q) => q.column().missing() == q.len(),
    };
    let edges = match &spec.bins {
        CutBins::Edges(e) => e.clone(),
        CutBins::Quantiles(_) if all_missing => Vec::new(),
        CutBins::Quantiles(n) => {
            let mut xs: Vec<f64> = train_values(&v, store).into_iter().filter_map(Scalar::as_f64).collect();
            xs.sort_by(f64::total_cmp);
            let mut distinct = xs.clone();
            distinct.dedup();
            if distinct.len() < *n {
                return Err(EvalError::Statistic(alloc::format!(
                    "`cut {} quantiles` needs at least {} distinct training values, found {}",
                    n,
                    n,
                    distinct.len()
                )));
            }
            quantile_edges(&xs, *n)
        }
    };
    let labels = match &spec.names {
        Some(names) => names.clone(),
        None => range_labels(&edges),
    };
    Ok(map_column(v, |c| {
        let values = c
            .values
            .iter()
            .map(|x| x.as_ref().and_then(Scalar::as_f64).map(|x| Scalar::Text(labels[bin_of(x, &edges)].clone())))
            .collect();
        Column::new(DType::Category, values)
    }))
}

pub(crate) fn as_unit(v: Val, unit: DurationUnit, store: &TrajectoryStore) -> Result<Val, EvalError> {
    if v.dtype() != DType::Number {
        return Err(type_error(alloc::format!("`as {}` needs numbers, got {}", unit.plural(), v.dtype())));
    }
    let factor = unit.in_time_unit(store.time_unit());
    Ok(map_column(v, |c| {
        Column::new(DType::Number, c.numbers().map(|x| x.map(|x| Scalar::Number(x / factor))).collect())
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tertiles_of_one_to_nine() {
        let xs: Vec<f64> = (1..=9).map(f64::from).collect();
        let edges = quantile_edges(&xs, 3);
        assert!((edges[0] - 11.0 / 3.0).abs() < 1e-12);
        assert!((edges[1] - 19.0 / 3.0).abs() < 1e-12);
        let bins: Vec<usize> = xs.iter().map(|&x| bin_of(x, &edges)).collect();
        assert_eq!(bins, [0, 0, 0, 1, 1, 1, 2, 2, 2]);
    }

    #[test]
    fn bins_are_right_closed() {
        assert_eq!(bin_of(0.0, &[0.0]), 0);
        assert_eq!(bin_of(0.5, &[0.0]), 1);
        assert_eq!(range_labels(&[40.0, 60.0]), ["(-inf, 40]", "(40, 60]", "(60, inf)"]);
    }
}
