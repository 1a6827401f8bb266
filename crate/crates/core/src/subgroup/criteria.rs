use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::SubgroupError;
use crate::engine::TimestepIndex;
use crate::model::{DesignMatrix, Task, TrainedModel};
use crate::store::Split;

/// A per-row quantity whose rate (mean over a rule's extent) subgroups are
/// ranked by. `model` names one of the models passed alongside; `None`
/// means the first.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Metric {
    /// 1 where the true label is `class` (default `true` for binary
    /// targets); the target value for regression.
    TrueLabel {
        #[serde(default)]
        model: Option<String>,
        #[serde(default)]
        class: Option<String>,
    },
    /// Predicted probability of `class`; the prediction for regression.
    PredictedScore {
        #[serde(default)]
        model: Option<String>,
        #[serde(default)]
        class: Option<String>,
    },
    /// 1 where the predicted class is `class`.
    PredictedClass {
        #[serde(default)]
        model: Option<String>,
        #[serde(default)]
        class: Option<String>,
    },
    /// 1 where the prediction is wrong; the absolute error for regression.
    Error {
        #[serde(default)]
        model: Option<String>,
    },
    /// 1 where the two models predict different classes.
    Disagreement { model: String, other: String },
    /// 1 where `model` is wrong and `other` is right.
    WrongWhereOtherRight { model: String, other: String },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    #[default]
    Maximize,
    Minimize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Weights {
    pub rate: f64,
    pub size: f64,
    pub simplicity: f64,
}

impl Default for Weights {
    fn default() -> Self {
        Weights { rate: 1.0, size: 0.3, simplicity: 0.5 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankingCriteria {
    pub metric: Metric,
    #[serde(default)]
    pub weights: Weights,
    #[serde(default)]
    pub direction: Direction,
}

pub const EPSILON: f64 = 1e-6;

impl RankingCriteria {
    pub fn new(metric: Metric) -> Self {
        RankingCriteria { metric, weights: Weights::default(), direction: Direction::Maximize }
    }

    /// `ratio^w_rate * coverage^w_size * (1/predicates)^w_simplicity`, with
    /// the rate ratio inverted when minimizing. Empty extents score 0.
    pub fn score(&self, rate: Option<f64>, overall: Option<f64>, coverage: f64, predicates: usize) -> f64 {
        let (Some(rate), Some(overall)) = (rate, overall) else { return 0.0 };
        let ratio = match self.direction {
            Direction::Maximize => (rate + EPSILON) / (overall + EPSILON),
            Direction::Minimize => (overall + EPSILON) / (rate + EPSILON),
        };
        let w = &self.weights;
        let simplicity = 1.0 / predicates.max(1) as f64;
        libm::pow(ratio.max(0.0), w.rate) * libm::pow(coverage, w.size) * libm::pow(simplicity, w.simplicity)
    }
}

/// One model's predictions over its design matrix rows.
#[derive(Clone, Debug)]
pub struct ModelRows<'a> {
    pub id: &'a str,
    pub index: &'a Arc<TimestepIndex>,
    pub task: Task,
    pub classes: &'a [String],
    pub target: &'a [f64],
    pub outputs: &'a [Vec<f64>],
    pub threshold: f64,
    pub splits: &'a [Split],
}

impl<'a> ModelRows<'a> {
    pub fn new(id: &'a str, matrix: &'a DesignMatrix, model: &'a TrainedModel) -> Self {
        ModelRows {
            id,
            index: &matrix.index,
            task: model.task,
            classes: &model.classes,
            target: &matrix.target,
            outputs: &model.outputs,
            threshold: model.threshold,
            splits: &matrix.splits,
        }
    }

    fn predicted_class(&self, row: usize) -> f64 {
        let out = &self.outputs[row];
        match self.task {
            Task::Binary => (out[0] >= self.threshold) as u8 as f64,
            Task::Multiclass => {
                let mut best = 0;
                for (i, p) in out.iter().enumerate() {
                    if *p > out[best] {
                        best = i;
                    }
                }
                best as f64
            }
            Task::Regression => out[0],
        }
    }

    fn wrong(&self, row: usize) -> f64 {
        match self.task {
            Task::Regression => libm::fabs(self.outputs[row][0] - self.target[row]),
            _ => (self.predicted_class(row) != self.target[row]) as u8 as f64,
        }
    }

    fn class_position(&self, class: Option<&str>) -> Result<usize, SubgroupError> {
        match (self.task, class) {
            (Task::Binary, None) => Ok(1),
            (Task::Multiclass, None) => Err(SubgroupError::Criteria("choose a class for a multiclass model".into())),
            (_, Some(c)) => self.classes.iter().position(|x| x == c).ok_or_else(|| {
                SubgroupError::Criteria(alloc::format!("model `{}` has no class `{}`", self.id, c))
            }),
            (Task::Regression, None) => Ok(0),
        }
    }
}

/// Per-row metric values. Every model must share one set of rows.
pub fn metric_values(metric: &Metric, models: &[ModelRows]) -> Result<Vec<f64>, SubgroupError> {
    let first = models.first().ok_or_else(|| SubgroupError::Criteria("criteria need at least one model".into()))?;
    for m in &models[1..] {
        if !TimestepIndex::same_rows(m.index, first.index) {
            return Err(SubgroupError::IndexMismatch { a: first.id.into(), b: m.id.into() });
        }
    }
    let find = |id: &Option<String>| -> Result<&ModelRows, SubgroupError> {
        match id {
            None => Ok(first),
            Some(id) => models.iter().find(|m| m.id == id).ok_or_else(|| SubgroupError::UnknownModel(id.clone())),
        }
    };
    let n = first.target.len();
    let values = match metric {
        Metric::TrueLabel { model, class } => {
            let m = find(model)?;
            if m.task == Task::Regression {
                m.target.to_vec()
            } else {
                let c = m.class_position(class.as_deref())? as f64;
                m.target.iter().map(|&y| (y == c) as u8 as f64).collect()
            }
        }
        Metric::PredictedScore { model, class } => {
            let m = find(model)?;
            match m.task {
                Task::Regression => m.outputs.iter().map(|o| o[0]).collect(),
                Task::Binary => {
                    let c = m.class_position(class.as_deref())?;
                    m.outputs.iter().map(|o| if c == 1 { o[0] } else { 1.0 - o[0] }).collect()
                }
                Task::Multiclass => {
                    let c = m.class_position(class.as_deref())?;
                    m.outputs.iter().map(|o| o[c]).collect()
                }
            }
        }
        Metric::PredictedClass { model, class } => {
            let m = find(model)?;
            if m.task == Task::Regression {
                return Err(SubgroupError::Criteria("regression models have no predicted class".into()));
            }
            let c = m.class_position(class.as_deref())? as f64;
            (0..n).map(|r| (m.predicted_class(r) == c) as u8 as f64).collect()
        }
        Metric::Error { model } => {
            let m = find(model)?;
            (0..n).map(|r| m.wrong(r)).collect()
        }
        Metric::Disagreement { model, other } => {
            let (a, b) = (find(&Some(model.clone()))?, find(&Some(other.clone()))?);
            (0..n).map(|r| (a.predicted_class(r) != b.predicted_class(r)) as u8 as f64).collect()
        }
        Metric::WrongWhereOtherRight { model, other } => {
            let (a, b) = (find(&Some(model.clone()))?, find(&Some(other.clone()))?);
            if a.task == Task::Regression || b.task == Task::Regression {
                return Err(SubgroupError::Criteria("comparing right and wrong needs classifiers".into()));
            }
            (0..n).map(|r| (a.wrong(r) == 1.0 && b.wrong(r) == 0.0) as u8 as f64).collect()
        }
    };
    Ok(values)
}
