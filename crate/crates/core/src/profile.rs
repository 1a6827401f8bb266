//! Compact summaries of query results, pooled across trajectories.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::engine::{QueryValue, ValueKind};
use crate::value::{DType, Scalar};

pub const HISTOGRAM_BINS: usize = 10;
pub const TOP_CATEGORIES: usize = 8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultProfile {
    pub kind: ValueKind,
    pub rows: usize,
    pub trajectories: usize,
    pub dtype: DType,
    pub missing: usize,
    /// Missing rows over all rows; 0 for an empty result.
    pub missingness: f64,
    /// Set whenever anything is missing, so the tile can highlight it.
    pub missing_flag: bool,
    pub distribution: Distribution,
    /// Time between consecutive events of one trajectory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gaps: Option<Histogram>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub durations: Option<Histogram>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Distribution {
    Numeric { histogram: Option<Histogram>, mean: Option<f64> },
    Categorical { categories: Vec<CategoryCount>, other: usize, distinct: usize },
    Boolean { true_count: usize, false_count: usize, true_fraction: Option<f64> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CategoryCount {
    pub value: String,
    pub count: usize,
}

/// Equal-width histogram; `edges` has one more entry than `counts`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

impl Histogram {
    /// `None` when there is nothing to bin.
    pub fn of(values: &[f64]) -> Option<Histogram> {
        let min = values.iter().copied().reduce(f64::min)?;
        let max = values.iter().copied().reduce(f64::max)?;
        let width = (max - min) / HISTOGRAM_BINS as f64;
        let edges = (0..=HISTOGRAM_BINS)
            .map(|i| if i == HISTOGRAM_BINS { max } else { min + width * i as f64 })
            .collect();
        let mut counts = alloc::vec![0usize; HISTOGRAM_BINS];
        for &x in values {
            let bin = if width > 0.0 { ((x - min) / width) as usize } else { 0 };
            counts[bin.min(HISTOGRAM_BINS - 1)] += 1;
        }
        Some(Histogram { edges, counts })
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }
}

pub fn profile_value(value: &QueryValue) -> ResultProfile {
    let column = value.column();
    let rows = column.len();
    let missing = column.missing();
    let mut trajs: Vec<u32> = value.traj().to_vec();
    trajs.sort_unstable();
    trajs.dedup();

    let distribution = match column.dtype {
        DType::Number => {
            let mut xs: Vec<f64> = column.numbers().flatten().collect();
            xs.sort_by(f64::total_cmp);
            let mean = (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64);
            Distribution::Numeric { histogram: Histogram::of(&xs), mean }
        }
        DType::Boolean => {
            let true_count = column.values.iter().filter(|v| matches!(v, Some(Scalar::Boolean(true)))).count();
            let present = rows - missing;
            Distribution::Boolean {
                true_count,
                false_count: present - true_count,
                true_fraction: (present > 0).then(|| true_count as f64 / present as f64),
            }
        }
        DType::Category => {
            let mut labels: Vec<String> = column.values.iter().flatten().map(Scalar::label).collect();
            labels.sort();
            let mut counts: Vec<CategoryCount> = Vec::new();
            for label in labels {
                match counts.last_mut() {
                    Some(c) if c.value == label => c.count += 1,
                    _ => counts.push(CategoryCount { value: label, count: 1 }),
                }
            }
            counts.sort_by(|a, b| b.count.cmp(&a.count).then_with(|| a.value.cmp(&b.value)));
            let distinct = counts.len();
            let other = counts.iter().skip(TOP_CATEGORIES).map(|c| c.count).sum();
            counts.truncate(TOP_CATEGORIES);
            Distribution::Categorical { categories: counts, other, distinct }
        }
    };

    let (gaps, durations) = match value {
        QueryValue::Events { traj, times, .. } => {
            let mut rows: Vec<(u32, f64)> = traj.iter().copied().zip(times.iter().copied()).collect();
            rows.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
            let mut gaps: Vec<f64> = rows.windows(2).filter(|w| w[0].0 == w[1].0).map(|w| w[1].1 - w[0].1).collect();
            gaps.sort_by(f64::total_cmp);
            (Histogram::of(&gaps), None)
        }
        QueryValue::Intervals { starts, ends, .. } => {
            let mut d: Vec<f64> = starts.iter().zip(ends).map(|(s, e)| e - s).collect();
            d.sort_by(f64::total_cmp);
            (None, Histogram::of(&d))
        }
        _ => (None, None),
    };

    ResultProfile {
        kind: value.kind(),
        rows,
        trajectories: trajs.len(),
        dtype: column.dtype,
        missing,
        missingness: if rows == 0 { 0.0 } else { missing as f64 / rows as f64 },
        missing_flag: missing > 0,
        distribution,
        gaps,
        durations,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{Column, TimeSeries, TimestepIndex};
    use alloc::sync::Arc;
    use alloc::vec;

    fn series(dtype: DType, values: Vec<Option<Scalar>>) -> QueryValue {
        let n = values.len();
        let index = TimestepIndex::new(vec![0; n], (0..n).map(|i| i as f64).collect(), "every 1 hour".into());
        QueryValue::TimeSeries(TimeSeries { index: Arc::new(index), column: Column::new(dtype, values) })
    }

    #[test]
    fn numeric_missingness() {
        let n = |x: f64| Some(Scalar::Number(x));
        let p = profile_value(&series(DType::Number, vec![n(70.0), None, n(100.0), None, None]));
        assert_eq!(p.missingness, 0.6);
        assert!(p.missing_flag);
        let Distribution::Numeric { histogram: Some(h), mean } = p.distribution else { panic!() };
        assert_eq!(h.total(), 2);
        assert_eq!((h.edges[0], h.edges[10]), (70.0, 100.0));
        assert_eq!((h.counts[0], h.counts[9]), (1, 1));
        assert_eq!(mean, Some(85.0));
    }

    #[test]
    fn boolean_true_fraction() {
        let mut values = vec![Some(Scalar::Boolean(true))];
        values.extend((0..24).map(|_| Some(Scalar::Boolean(false))));
        let p = profile_value(&series(DType::Boolean, values));
        assert_eq!(p.distribution, Distribution::Boolean { true_count: 1, false_count: 24, true_fraction: Some(0.04) });
        assert!(!p.missing_flag);
    }

    #[test]
    fn empty_series() {
        let p = profile_value(&series(DType::Number, vec![]));
        assert_eq!((p.rows, p.missingness, p.missing_flag), (0, 0.0, false));
    }

    #[test]
    fn categories_are_capped() {
        let values = (0..20).map(|i| Some(Scalar::Text(alloc::format!("c{}", i % 10)))).collect();
        let p = profile_value(&series(DType::Category, values));
        let Distribution::Categorical { categories, other, distinct } = p.distribution else { panic!() };
        assert_eq!(categories.len(), 8);
        assert_eq!((other, distinct), (4, 10));
    }

    #[test]
    fn constant_values_fill_first_bin() {
        let h = Histogram::of(&[3.0, 3.0]).unwrap();
        assert_eq!(h.counts[0], 2);
    }
}
