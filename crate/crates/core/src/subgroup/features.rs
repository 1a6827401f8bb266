use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::engine::{quantile_edges, range_labels, Column};
use crate::model::{DesignMatrix, InputVariable};
use crate::store::Split;
use crate::value::{format_number, DType, Scalar};

/// Most values a grouping feature may take; larger categoricals keep the
/// most frequent ones and pool the rest.
pub const MAX_VALUES: usize = 8;
pub const OTHER: &str = "Other";
const NUMERIC_BINS: usize = 3;

/// A discrete per-row variable that subgroup rules are built from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupingFeature {
    pub name: String,
    /// Query the feature came from, when known.
    pub query: Option<String>,
    pub values: Vec<String>,
    /// Position in `values` per matrix row; `None` when missing.
    pub codes: Vec<Option<u8>>,
}

impl GroupingFeature {
    pub fn value_index(&self, value: &str) -> Option<usize> {
        self.values.iter().position(|v| v == value)
    }

    pub fn label(&self, row: usize) -> Option<&str> {
        self.codes[row].map(|c| self.values[c as usize].as_str())
    }

    fn is_constant(&self) -> bool {
        let mut seen = self.codes.iter().flatten();
        match seen.next() {
            None => true,
            Some(first) => seen.all(|c| c == first),
        }
    }
}

/// Grouping features for every input of a design matrix. Constant features
/// are dropped.
pub fn discretize_inputs(matrix: &DesignMatrix, inputs: &[InputVariable]) -> Vec<GroupingFeature> {
    matrix
        .variables
        .iter()
        .zip(&matrix.inputs)
        .filter_map(|(name, column)| {
            let query = inputs.iter().find(|i| &i.name == name).map(|i| i.query.clone());
            discretize_column(name, query, column, &matrix.splits)
        })
        .collect()
}

/// Discretize one column. Numbers with more than three distinct training
/// values become training-set tertiles; other values pass through, with
/// large categoricals capped at [`MAX_VALUES`].
pub fn discretize_column(
    name: &str,
    query: Option<String>,
    column: &Column,
    splits: &[Split],
) -> Option<GroupingFeature> {
    let fit_rows: Vec<usize> = {
        let train: Vec<usize> =
            (0..column.len()).filter(|&r| splits[r] == Split::Train && column.values[r].is_some()).collect();
        if train.is_empty() {
            (0..column.len()).filter(|&r| column.values[r].is_some()).collect()
        } else {
            train
        }
    };
    let feature = match column.dtype {
        DType::Number => numeric(name, column, &fit_rows),
        _ => labelled(name, column, &fit_rows),
    };
    let mut feature = feature?;
    feature.query = query;
    (!feature.is_constant()).then_some(feature)
}

fn numeric(name: &str, column: &Column, fit_rows: &[usize]) -> Option<GroupingFeature> {
    let values: Vec<Option<f64>> = column.numbers().collect();
    let mut sorted: Vec<f64> = fit_rows.iter().filter_map(|&r| values[r]).collect();
    if sorted.is_empty() {
        return None;
    }
    sorted.sort_by(f64::total_cmp);
    let mut distinct = sorted.clone();
    distinct.dedup();
    if distinct.len() <= NUMERIC_BINS {
        let codes = values
            .iter()
            .map(|x| x.and_then(|x| distinct.iter().position(|&d| d == x)).map(|p| p as u8))
            .collect();
        let labels = distinct.iter().map(|&x| format_number(x)).collect();
        return Some(GroupingFeature { name: name.into(), query: None, values: labels, codes });
    }
    let mut edges = quantile_edges(&sorted, NUMERIC_BINS);
    edges.dedup();
    let codes = values.iter().map(|x| x.map(|x| edges.partition_point(|&e| x > e) as u8)).collect();
    Some(GroupingFeature { name: name.into(), query: None, values: range_labels(&edges), codes })
}

fn labelled(name: &str, column: &Column, fit_rows: &[usize]) -> Option<GroupingFeature> {
    let label = |v: &Scalar| v.label();
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for &r in fit_rows {
        if let Some(v) = &column.values[r] {
            *counts.entry(label(v)).or_default() += 1;
        }
    }
    if counts.is_empty() {
        return None;
    }
    let (values, pooled) = if counts.len() <= MAX_VALUES {
        (counts.keys().cloned().collect::<Vec<_>>(), false)
    } else {
        let mut by_count: Vec<(String, usize)> = counts.into_iter().collect();
        by_count.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        let mut keep: Vec<String> = by_count.into_iter().take(MAX_VALUES - 1).map(|(v, _)| v).collect();
        keep.sort();
        keep.push(OTHER.into());
        (keep, true)
    };
    let codes = column
        .values
        .iter()
        .map(|v| {
            let v = v.as_ref()?;
            let l = label(v);
            match values.iter().position(|x| *x == l) {
                Some(p) if !(pooled && p == values.len() - 1) => Some(p as u8),
                _ if pooled => Some((values.len() - 1) as u8),
                _ => None,
            }
        })
        .collect();
    Some(GroupingFeature { name: name.into(), query: None, values, codes })
}
