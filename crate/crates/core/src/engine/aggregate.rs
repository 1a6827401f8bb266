//! Windowed aggregation of events, intervals and nested series.

use alloc::vec::Vec;

use super::{type_error, Column, EvalError, TimestepIndex};
use crate::query::ast::AggFn;
use crate::value::{DType, Scalar};

/// Rows being aggregated, sorted by trajectory and then time (or start).
pub(crate) struct Operand<'a> {
    pub traj: &'a [u32],
    /// Event times, or interval starts.
    pub starts: &'a [f64],
    /// Interval ends; `None` for instantaneous rows.
    pub ends: Option<&'a [f64]>,
    pub column: &'a Column,
}

pub(crate) fn output_dtype(func: AggFn, input: DType) -> Result<DType, EvalError> {
    if func.numeric_only() && input != DType::Number {
        return Err(type_error(alloc::format!("`{}` needs numeric values, got {}", func.name(), input)));
    }
    Ok(match func {
        AggFn::Exists | AggFn::Any | AggFn::All => DType::Boolean,
        AggFn::First | AggFn::Last => input,
        _ => DType::Number,
    })
}

/// Start offset of each trajectory's rows; `offsets[t]..offsets[t + 1]`.
pub(crate) fn offsets(traj: &[u32], n_traj: usize) -> Vec<usize> {
    let mut out = Vec::with_capacity(n_traj + 1);
    let mut i = 0;
    for t in 0..=n_traj as u32 {
        while i < traj.len() && traj[i] < t {
            i += 1;
        }
        out.push(i);
    }
    out
}

/// Aggregate `op` over the window `(from, to]` of every index row. A `None`
/// bound makes the row missing; a window with `to <= from` is empty.
pub(crate) fn aggregate(
    func: AggFn,
    op: &Operand<'_>,
    index: &TimestepIndex,
    bounds: &[Option<(f64, f64)>],
    n_traj: usize,
) -> Result<Column, EvalError> {
    let dtype = output_dtype(func, op.column.dtype)?;
    if func.is_interval_weighted() && op.ends.is_none() {
        return Err(type_error(alloc::format!("`{}` needs an interval series", func.name())));
    }
    let offs = offsets(op.traj, n_traj);
    let mut hits: Vec<Hit> = Vec::new();
    let mut values = Vec::with_capacity(index.len());
    for (row, bound) in bounds.iter().enumerate() {
        let Some((a, b)) = *bound else {
            values.push(None);
            continue;
        };
        let t = index.traj[row] as usize;
        let (r0, r1) = if t < n_traj { (offs[t], offs[t + 1]) } else { (0, 0) };
        hits.clear();
        if !(a < b) {
            values.push(reduce(func, &hits, &op.column.values));
            continue;
        }
        let starts = &op.starts[r0..r1];
        match op.ends {
            None => {
                let lo = r0 + starts.partition_point(|&x| x <= a);
                let hi = r0 + starts.partition_point(|&x| x <= b);
                hits.extend((lo..hi).map(|i| Hit { row: i, overlap: 0.0, length: 0.0 }));
            }
            Some(ends) => {
                let hi = r0 + starts.partition_point(|&s| s <= b);
                for i in r0..hi {
                    let (s, e) = (op.starts[i], ends[i]);
                    if e > a {
                        let overlap = (e.min(b) - s.max(a)).max(0.0);
                        hits.push(Hit { row: i, overlap, length: e - s });
                    }
                }
            }
        }
        values.push(reduce(func, &hits, &op.column.values));
    }
    Ok(Column::new(dtype, values))
}

struct Hit {
    row: usize,
    overlap: f64,
    length: f64,
}

fn number(v: &Option<Scalar>) -> Option<f64> {
    v.as_ref().and_then(Scalar::as_f64)
}

fn reduce(func: AggFn, hits: &[Hit], values: &[Option<Scalar>]) -> Option<Scalar> {
    let present = || hits.iter().filter_map(|h| values[h.row].as_ref());
    let nums = || hits.iter().filter_map(|h| number(&values[h.row]));
    let finite = |x: f64| x.is_finite().then_some(Scalar::Number(x));
    match func {
        AggFn::Count => Some(Scalar::Number(hits.len() as f64)),
        AggFn::Exists => Some(Scalar::Boolean(!hits.is_empty())),
        AggFn::CountDistinct => {
            let mut seen: Vec<&Scalar> = present().collect();
            seen.sort_by(|a, b| a.total_cmp(b));
            seen.dedup_by(|a, b| a.total_cmp(b).is_eq());
            Some(Scalar::Number(seen.len() as f64))
        }
        AggFn::Any => {
            let mut it = present().peekable();
            it.peek()?;
            Some(Scalar::Boolean(it.any(|v| v.truthy())))
        }
        AggFn::All => {
            let mut it = present().peekable();
            it.peek()?;
            Some(Scalar::Boolean(it.all(|v| v.truthy())))
        }
        AggFn::First => present().next().cloned(),
        AggFn::Last => present().next_back().cloned(),
        AggFn::Sum => {
            let mut it = nums().peekable();
            it.peek()?;
            finite(it.sum())
        }
        AggFn::Mean => {
            let (mut sum, mut n) = (0.0, 0usize);
            for x in nums() {
                sum += x;
                n += 1;
            }
            if n == 0 {
                return None;
            }
            finite(sum / n as f64)
        }
        AggFn::Min => nums().reduce(f64::min).map(Scalar::Number),
        AggFn::Max => nums().reduce(f64::max).map(Scalar::Number),
        AggFn::SumAmount => {
            let mut sum = 0.0;
            for h in hits {
                if let Some(v) = number(&values[h.row]) {
                    sum += if h.length > 0.0 { v * h.overlap / h.length } else { v };
                }
            }
            finite(sum)
        }
        AggFn::SumRate => {
            let mut sum = 0.0;
            for h in hits {
                if let Some(v) = number(&values[h.row]) {
                    sum += v * h.overlap;
                }
            }
            finite(sum)
        }
        AggFn::MeanRate => {
            let (mut sum, mut weight) = (0.0, 0.0);
            for h in hits {
                if let Some(v) = number(&values[h.row]) {
                    sum += v * h.overlap;
                    weight += h.overlap;
                }
            }
            if weight > 0.0 {
                finite(sum / weight)
            } else {
                None
            }
        }
    }
}
