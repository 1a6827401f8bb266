use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{ModelError, ModelSpec, Task};
use crate::engine::{Column, QueryValue, TimeSeries, TimestepIndex, VariableSource};
use crate::query::ast::Expr;
use crate::query::format_canonical;
use crate::store::{Split, TrajectoryStore};
use crate::value::{DType, Scalar};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureInfo {
    /// Column name; one-hot columns are `variable=category`.
    pub name: String,
    pub variable: String,
    pub category: Option<String>,
}

/// Row counts through the matrix pipeline.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RowCounts {
    pub timesteps: usize,
    pub after_filter: usize,
    pub missing_target: usize,
    pub rows: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DesignMatrix {
    pub index: Arc<TimestepIndex>,
    pub features: Vec<FeatureInfo>,
    /// Column-major; NaN marks a missing value (`null` when serialized).
    #[serde(with = "nan_as_null")]
    pub columns: Vec<Vec<f64>>,
    /// 0/1 for binary, the class position for multiclass, the value for
    /// regression.
    pub target: Vec<f64>,
    pub task: Task,
    pub classes: Vec<String>,
    pub splits: Vec<Split>,
    /// Input variable names in spec order.
    pub variables: Vec<String>,
    /// Input values before encoding, one column per variable, aligned to
    /// the rows.
    pub inputs: Vec<Column>,
    pub counts: RowCounts,
}

impl DesignMatrix {
    pub fn rows(&self) -> usize {
        self.target.len()
    }

    pub fn rows_in(&self, split: Split) -> Vec<usize> {
        (0..self.rows()).filter(|&r| self.splits[r] == split).collect()
    }

    /// Keep only the columns of the given variables.
    pub fn with_variables(&self, keep: &[String]) -> DesignMatrix {
        let cols: Vec<usize> = (0..self.features.len()).filter(|&i| keep.contains(&self.features[i].variable)).collect();
        DesignMatrix {
            features: cols.iter().map(|&i| self.features[i].clone()).collect(),
            columns: cols.iter().map(|&i| self.columns[i].clone()).collect(),
            variables: self.variables.iter().filter(|v| keep.contains(v)).cloned().collect(),
            inputs: self
                .variables
                .iter()
                .zip(&self.inputs)
                .filter(|(v, _)| keep.contains(v))
                .map(|(_, c)| c.clone())
                .collect(),
            ..self.clone()
        }
    }

    /// A matrix over plain numeric columns, one variable per column. Rows
    /// are numbered as trajectories `0..n` at time 0.
    pub fn from_numeric(
        names: &[&str],
        columns: Vec<Vec<f64>>,
        target: Vec<f64>,
        task: Task,
        classes: Vec<String>,
        splits: Vec<Split>,
    ) -> DesignMatrix {
        let n = target.len();
        let index = TimestepIndex::new((0..n as u32).collect(), vec![0.0; n], "rows".into());
        DesignMatrix {
            index: Arc::new(index),
            features: names
                .iter()
                .map(|n| FeatureInfo { name: (*n).into(), variable: (*n).into(), category: None })
                .collect(),
            inputs: columns
                .iter()
                .map(|c| {
                    let values = c.iter().map(|&x| (!x.is_nan()).then_some(Scalar::Number(x))).collect();
                    Column::new(DType::Number, values)
                })
                .collect(),
            columns,
            target,
            task,
            classes,
            splits,
            variables: names.iter().map(|n| (*n).into()).collect(),
            counts: RowCounts { timesteps: n, after_filter: n, missing_target: 0, rows: n },
        }
    }
}

mod nan_as_null {
    use alloc::vec::Vec;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(columns: &[Vec<f64>], s: S) -> Result<S::Ok, S::Error> {
        let out: Vec<Vec<Option<f64>>> =
            columns.iter().map(|c| c.iter().map(|x| (!x.is_nan()).then_some(*x)).collect()).collect();
        out.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Vec<f64>>, D::Error> {
        let raw: Vec<Vec<Option<f64>>> = Deserialize::deserialize(d)?;
        Ok(raw.into_iter().map(|c| c.into_iter().map(|x| x.unwrap_or(f64::NAN)).collect()).collect())
    }
}

fn as_series(name: &str, v: QueryValue, index: &Arc<TimestepIndex>) -> Result<TimeSeries, ModelError> {
    match v {
        QueryValue::TimeSeries(ts) if TimestepIndex::same_rows(&ts.index, index) => Ok(ts),
        QueryValue::TimeSeries(_) => Err(ModelError::InvalidSpec(alloc::format!(
            "`{}` was computed at different timesteps than the model; remove its `at every` clause",
            name
        ))),
        v @ QueryValue::Attributes { .. } => v.broadcast_to(index).map_err(|error| ModelError::Eval { what: name.into(), error }),
        other => Err(ModelError::NotTimeSeries { variable: name.into(), kind: other.kind().name().into() }),
    }
}

fn select(col: &[Option<Scalar>], keep: &[usize]) -> Vec<Option<Scalar>> {
    keep.iter().map(|&i| col[i].clone()).collect()
}

/// Resolve timesteps, apply the filter, evaluate inputs and target, drop
/// rows with a missing target and encode features.
pub fn build_design_matrix(
    spec: &ModelSpec,
    store: &TrajectoryStore,
    source: &mut dyn VariableSource,
) -> Result<DesignMatrix, ModelError> {
    let parsed = spec.parse()?;
    let eval = |source: &mut dyn VariableSource, what: &str, e: &Expr, ix: &Arc<TimestepIndex>| {
        source.variable(what, e, store, ix).map_err(|error| ModelError::Eval { what: what.into(), error })
    };
    let mut index = source
        .timesteps(&parsed.timesteps, store)
        .map_err(|error| ModelError::Eval { what: "timestep definition".into(), error })?;
    let mut counts = RowCounts { timesteps: index.len(), ..Default::default() };

    if let Some(filter) = &parsed.filter {
        let v = as_series("timestep filter", eval(source, "timestep filter", filter, &index)?, &index)?;
        if v.column.dtype != DType::Boolean {
            return Err(ModelError::InvalidSpec(alloc::format!(
                "the timestep filter must be boolean, got {}",
                v.column.dtype
            )));
        }
        let keep: Vec<bool> = v.column.values.iter().map(|x| matches!(x, Some(Scalar::Boolean(true)))).collect();
        index = Arc::new(index.filter(&keep, &alloc::format!("where {}", format_canonical(filter))));
    }
    counts.after_filter = index.len();
    if index.is_empty() {
        return Err(ModelError::NoRows("no timesteps remain after the timestep filter".into()));
    }

    let mut inputs = Vec::with_capacity(parsed.inputs.len());
    for (name, e) in &parsed.inputs {
        inputs.push(as_series(name, eval(source, name, e, &index)?, &index)?);
    }
    let target = as_series("target", eval(source, "target", &parsed.target, &index)?, &index)?;

    let keep: Vec<usize> = (0..index.len()).filter(|&i| target.column.values[i].is_some()).collect();
    counts.missing_target = index.len() - keep.len();
    if keep.is_empty() {
        return Err(ModelError::TargetAllMissing);
    }
    counts.rows = keep.len();
    let mask: Vec<bool> = (0..index.len()).map(|i| target.column.values[i].is_some()).collect();
    let final_index = if keep.len() == index.len() { index.clone() } else { Arc::new(index.filter(&mask, "target present")) };
    let splits: Vec<Split> = final_index.traj.iter().map(|&t| store.split(t)).collect();

    let target_values = select(&target.column.values, &keep);
    let (task, classes, target) = match target.column.dtype {
        DType::Boolean => (
            Task::Binary,
            vec!["false".into(), "true".into()],
            target_values.iter().map(|v| if matches!(v, Some(Scalar::Boolean(true))) { 1.0 } else { 0.0 }).collect(),
        ),
        DType::Category => {
            let mut classes: Vec<String> = target_values.iter().flatten().map(Scalar::label).collect();
            classes.sort();
            classes.dedup();
            let y = target_values
                .iter()
                .map(|v| classes.binary_search(&v.as_ref().unwrap().label()).unwrap() as f64)
                .collect();
            (Task::Multiclass, classes, y)
        }
        DType::Number => (Task::Regression, Vec::new(), target_values.iter().map(|v| v.as_ref().and_then(Scalar::as_f64).unwrap()).collect()),
    };

    let mut features = Vec::new();
    let mut columns = Vec::new();
    let mut raw = Vec::with_capacity(inputs.len());
    for ((name, _), series) in parsed.inputs.iter().zip(&inputs) {
        let values = select(&series.column.values, &keep);
        match series.column.dtype {
            DType::Number | DType::Boolean => {
                features.push(FeatureInfo { name: name.clone(), variable: name.clone(), category: None });
                columns.push(values.iter().map(|v| v.as_ref().and_then(Scalar::as_f64).unwrap_or(f64::NAN)).collect());
            }
            DType::Category => {
                let mut cats: Vec<String> = values
                    .iter()
                    .zip(&splits)
                    .filter(|(_, s)| **s == Split::Train)
                    .filter_map(|(v, _)| v.as_ref().map(Scalar::label))
                    .collect();
                cats.sort();
                cats.dedup();
                for cat in cats {
                    columns.push(
                        values.iter().map(|v| if v.as_ref().is_some_and(|v| v.label() == cat) { 1.0 } else { 0.0 }).collect(),
                    );
                    features.push(FeatureInfo {
                        name: alloc::format!("{}={}", name, cat),
                        variable: name.clone(),
                        category: Some(cat),
                    });
                }
            }
        }
        raw.push(Column::new(series.column.dtype, values));
    }

    Ok(DesignMatrix {
        index: final_index,
        features,
        columns,
        target,
        task,
        classes,
        splits,
        variables: parsed.inputs.iter().map(|(n, _)| n.clone()).collect(),
        inputs: raw,
        counts,
    })
}
