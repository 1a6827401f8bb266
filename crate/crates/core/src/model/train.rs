use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::gbdt::{grow_tree, Binning, GrowParams, Tree};
use super::metrics::{
    auroc, binary_metrics, multiclass_metrics, r2, regression_metrics, BinaryMetrics, MulticlassMetrics,
    RegressionMetrics,
};
use super::{DesignMatrix, FeatureInfo, LearnerParams, ModelError, Task};
use crate::store::Split;

pub const MIN_TRAIN_ROWS: usize = 20;
/// Variables kept by the reduced model of the trivial-approximation check.
pub const TOP_K: usize = 5;
pub const TRIVIAL_RATIO: f64 = 0.95;
pub const RARE_RECALL: f64 = 0.10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ensemble {
    pub task: Task,
    /// One raw score per output; multiclass has one per class.
    pub base: Vec<f64>,
    /// `rounds[i][k]` is the tree for output `k` in boosting round `i`.
    pub rounds: Vec<Vec<Tree>>,
}

impl Ensemble {
    pub fn raw(&self, columns: &[Vec<f64>], row: usize) -> Vec<f64> {
        let mut out = self.base.clone();
        for round in &self.rounds {
            for (k, tree) in round.iter().enumerate() {
                out[k] += tree.predict(columns, row);
            }
        }
        out
    }

    /// Probability of the positive class, class probabilities, or the
    /// regression value.
    pub fn predict(&self, columns: &[Vec<f64>], row: usize) -> Vec<f64> {
        transform(self.task, self.raw(columns, row))
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + libm::exp(-x))
}

fn softmax(mut xs: Vec<f64>) -> Vec<f64> {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for x in xs.iter_mut() {
        *x = libm::exp(*x - max);
        total += *x;
    }
    for x in xs.iter_mut() {
        *x /= total;
    }
    xs
}

fn transform(task: Task, raw: Vec<f64>) -> Vec<f64> {
    match task {
        Task::Binary => vec![sigmoid(raw[0])],
        Task::Multiclass => softmax(raw),
        Task::Regression => raw,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "task", rename_all = "lowercase")]
pub enum Metrics {
    Binary(BinaryMetrics),
    Multiclass(MulticlassMetrics),
    Regression(RegressionMetrics),
}

impl Metrics {
    /// AUROC, macro AUROC, or R².
    pub fn primary(&self) -> Option<f64> {
        match self {
            Metrics::Binary(m) => m.auroc,
            Metrics::Multiclass(m) => m.macro_auroc,
            Metrics::Regression(m) => m.r2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsBundle {
    pub train: Metrics,
    pub val: Metrics,
    pub test: Metrics,
}

impl MetricsBundle {
    pub fn get(&self, split: Split) -> &Metrics {
        match split {
            Split::Train => &self.train,
            Split::Val => &self.val,
            Split::Test => &self.test,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub depth: usize,
    pub learning_rate: f64,
    pub trees: usize,
    /// Validation primary metric at the kept number of trees.
    pub score: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Importance {
    pub name: String,
    pub importance: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RareClass {
    pub class: String,
    pub recall: f64,
    pub support: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Alert {
    /// A model on only the top variables performs almost as well as the
    /// full model.
    TrivialApproximation { variables: Vec<String>, metric: String, full: f64, reduced: f64 },
    /// Classes the model almost never recovers on validation rows.
    RareClass { classes: Vec<RareClass> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub task: Task,
    pub classes: Vec<String>,
    pub features: Vec<FeatureInfo>,
    pub threshold: f64,
    pub ensemble: Ensemble,
    pub chosen: GridResult,
    pub grid: Vec<GridResult>,
    /// One entry per matrix row, see [`Ensemble::predict`].
    pub outputs: Vec<Vec<f64>>,
    pub metrics: MetricsBundle,
    /// Normalized total gain per feature column, in column order.
    pub importances: Vec<Importance>,
    /// Column importances summed per input variable, largest first.
    pub variable_importances: Vec<Importance>,
    pub alerts: Vec<Alert>,
}

impl TrainedModel {
    /// The positive-class probability, the predicted class position, or the
    /// regression value.
    pub fn prediction(&self, row: usize) -> f64 {
        match self.task {
            Task::Multiclass => argmax(&self.outputs[row]) as f64,
            _ => self.outputs[row][0],
        }
    }

    pub fn primary_metric_name(&self) -> &'static str {
        primary_name(self.task)
    }
}

fn primary_name(task: Task) -> &'static str {
    match task {
        Task::Binary => "auroc",
        Task::Multiclass => "macro_auroc",
        Task::Regression => "r2",
    }
}

fn argmax(p: &[f64]) -> usize {
    let mut best = 0;
    for (k, &x) in p.iter().enumerate() {
        if x > p[best] {
            best = k;
        }
    }
    best
}

fn outputs_per_row(m: &DesignMatrix) -> usize {
    if m.task == Task::Multiclass {
        m.classes.len()
    } else {
        1
    }
}

/// Primary metric of raw scores on `rows`.
fn primary(m: &DesignMatrix, raw: &[Vec<f64>], rows: &[usize]) -> Option<f64> {
    match m.task {
        Task::Binary => {
            let s: Vec<f64> = rows.iter().map(|&r| raw[r][0]).collect();
            let y: Vec<bool> = rows.iter().map(|&r| m.target[r] == 1.0).collect();
            auroc(&s, &y)
        }
        Task::Multiclass => {
            let probs: Vec<Vec<f64>> = rows.iter().map(|&r| softmax(raw[r].clone())).collect();
            let aucs: Vec<f64> = (0..m.classes.len())
                .filter_map(|k| {
                    let s: Vec<f64> = probs.iter().map(|p| p[k]).collect();
                    let y: Vec<bool> = rows.iter().map(|&r| m.target[r] as usize == k).collect();
                    auroc(&s, &y)
                })
                .collect();
            (!aucs.is_empty()).then(|| aucs.iter().sum::<f64>() / aucs.len() as f64)
        }
        Task::Regression => {
            let p: Vec<f64> = rows.iter().map(|&r| raw[r][0]).collect();
            let y: Vec<f64> = rows.iter().map(|&r| m.target[r]).collect();
            r2(&p, &y)
        }
    }
}

fn base_scores(m: &DesignMatrix, train: &[usize]) -> Vec<f64> {
    let n = train.len() as f64;
    match m.task {
        Task::Binary => {
            let pos = train.iter().filter(|&&r| m.target[r] == 1.0).count() as f64;
            let p = (pos + 0.5) / (n + 1.0);
            vec![libm::log(p / (1.0 - p))]
        }
        Task::Multiclass => {
            let k = m.classes.len();
            (0..k)
                .map(|c| {
                    let count = train.iter().filter(|&&r| m.target[r] as usize == c).count() as f64;
                    libm::log((count + 1.0) / (n + k as f64))
                })
                .collect()
        }
        Task::Regression => vec![train.iter().map(|&r| m.target[r]).sum::<f64>() / n],
    }
}

struct Fit {
    ensemble: Ensemble,
    gains: Vec<f64>,
    result: GridResult,
}

fn fit_one(m: &DesignMatrix, train: &[usize], val: &[usize], depth: usize, lr: f64, params: &LearnerParams, config: u64) -> Fit {
    let k = outputs_per_row(m);
    let n = m.rows();
    let binning = Binning::fit(&m.columns, train);
    let codes = binning.codes(&m.columns);
    let base = base_scores(m, train);
    let mut raw: Vec<Vec<f64>> = vec![base.clone(); n];
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed ^ config.wrapping_mul(0x9e37_79b9_7f4a_7c15));
    let mut g = vec![0.0; n];
    let mut h = vec![0.0; n];
    let mut rounds: Vec<Vec<Tree>> = Vec::new();
    let mut round_gains: Vec<Vec<f64>> = Vec::new();
    // Without a usable validation set, stop on the training metric.
    let monitor: &[usize] = if primary(m, &raw, val).is_some() { val } else { train };
    let (mut best, mut best_round) = (f64::NEG_INFINITY, 0usize);
    let grow = GrowParams { max_depth: depth, learning_rate: lr };

    for round in 0..params.max_trees {
        let sample: Vec<usize> = if params.subsample >= 1.0 {
            train.to_vec()
        } else {
            train.iter().copied().filter(|_| rng.random_bool(params.subsample)).collect()
        };
        let probs: Vec<Vec<f64>> = match m.task {
            Task::Multiclass => sample.iter().map(|&r| softmax(raw[r].clone())).collect(),
            _ => Vec::new(),
        };
        let mut trees = Vec::with_capacity(k);
        let mut gains = vec![0.0; m.columns.len()];
        for out in 0..k {
            for (i, &r) in sample.iter().enumerate() {
                let y = m.target[r];
                let (gr, hr) = match m.task {
                    Task::Binary => {
                        let p = sigmoid(raw[r][0]);
                        (p - y, (p * (1.0 - p)).max(1e-16))
                    }
                    Task::Multiclass => {
                        let p = probs[i][out];
                        let is = if y as usize == out { 1.0 } else { 0.0 };
                        (p - is, (p * (1.0 - p)).max(1e-16))
                    }
                    Task::Regression => (raw[r][0] - y, 1.0),
                };
                g[r] = gr;
                h[r] = hr;
            }
            trees.push(grow_tree(&codes, &binning, sample.clone(), &g, &h, &grow, &mut gains));
        }
        for (r, scores) in raw.iter_mut().enumerate() {
            for (out, tree) in trees.iter().enumerate() {
                scores[out] += tree.predict(&m.columns, r);
            }
        }
        rounds.push(trees);
        round_gains.push(gains);
        let score = primary(m, &raw, monitor).unwrap_or(f64::NEG_INFINITY);
        if score > best + 1e-12 || round == 0 {
            best = score;
            best_round = round + 1;
        } else if round + 1 - best_round >= params.patience {
            break;
        }
    }
    rounds.truncate(best_round);
    let mut gains = vec![0.0; m.columns.len()];
    for rg in round_gains.iter().take(best_round) {
        for (a, b) in gains.iter_mut().zip(rg) {
            *a += b;
        }
    }
    let ensemble = Ensemble { task: m.task, base, rounds };
    let kept: Vec<Vec<f64>> = (0..n).map(|r| ensemble.raw(&m.columns, r)).collect();
    let score = primary(m, &kept, val);
    Fit { ensemble, gains, result: GridResult { depth, learning_rate: lr, trees: best_round, score } }
}

fn metrics_on(m: &DesignMatrix, outputs: &[Vec<f64>], rows: &[usize], threshold: f64) -> Metrics {
    match m.task {
        Task::Binary => {
            let s: Vec<f64> = rows.iter().map(|&r| outputs[r][0]).collect();
            let y: Vec<bool> = rows.iter().map(|&r| m.target[r] == 1.0).collect();
            Metrics::Binary(binary_metrics(&s, &y, threshold))
        }
        Task::Multiclass => {
            let p: Vec<Vec<f64>> = rows.iter().map(|&r| outputs[r].clone()).collect();
            let y: Vec<usize> = rows.iter().map(|&r| m.target[r] as usize).collect();
            Metrics::Multiclass(multiclass_metrics(&p, &y, &m.classes))
        }
        Task::Regression => {
            let p: Vec<f64> = rows.iter().map(|&r| outputs[r][0]).collect();
            let y: Vec<f64> = rows.iter().map(|&r| m.target[r]).collect();
            Metrics::Regression(regression_metrics(&p, &y))
        }
    }
}

struct Search {
    best: Fit,
    grid: Vec<GridResult>,
}

fn search(m: &DesignMatrix, params: &LearnerParams) -> Result<Search, ModelError> {
    let train = m.rows_in(Split::Train);
    let val = m.rows_in(Split::Val);
    if train.len() < MIN_TRAIN_ROWS {
        return Err(ModelError::TooFewRows { found: train.len(), needed: MIN_TRAIN_ROWS });
    }
    if m.task != Task::Regression {
        let mut seen: Vec<u64> = train.iter().map(|&r| m.target[r] as u64).collect();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() < 2 {
            return Err(ModelError::SingleClass);
        }
    }
    let mut best: Option<Fit> = None;
    let mut grid = Vec::new();
    let mut config = 0u64;
    for &depth in &params.grid.depths {
        for &lr in &params.grid.learning_rates {
            let fit = fit_one(m, &train, &val, depth, lr, params, config);
            config += 1;
            grid.push(fit.result.clone());
            let better = match &best {
                None => true,
                Some(b) => fit.result.score.unwrap_or(f64::NEG_INFINITY) > b.result.score.unwrap_or(f64::NEG_INFINITY),
            };
            if better {
                best = Some(fit);
            }
        }
    }
    Ok(Search { best: best.expect("grid is not empty"), grid })
}

/// Fit the grid, keep the best configuration by validation score, and
/// compute metrics, importances and alerts.
pub fn train_model(m: &DesignMatrix, params: &LearnerParams, threshold: f64) -> Result<TrainedModel, ModelError> {
    let Search { best, grid } = search(m, params)?;
    let outputs: Vec<Vec<f64>> = (0..m.rows()).map(|r| best.ensemble.predict(&m.columns, r)).collect();
    let metrics = MetricsBundle {
        train: metrics_on(m, &outputs, &m.rows_in(Split::Train), threshold),
        val: metrics_on(m, &outputs, &m.rows_in(Split::Val), threshold),
        test: metrics_on(m, &outputs, &m.rows_in(Split::Test), threshold),
    };
    let total: f64 = best.gains.iter().sum();
    let importances: Vec<Importance> = m
        .features
        .iter()
        .zip(&best.gains)
        .map(|(f, g)| Importance { name: f.name.clone(), importance: if total > 0.0 { g / total } else { 0.0 } })
        .collect();
    let mut variable_importances: Vec<Importance> = m
        .variables
        .iter()
        .map(|v| Importance {
            name: v.clone(),
            importance: m.features.iter().zip(&importances).filter(|(f, _)| f.variable == *v).map(|(_, i)| i.importance).sum(),
        })
        .collect();
    variable_importances.sort_by(|a, b| b.importance.total_cmp(&a.importance));

    let mut model = TrainedModel {
        task: m.task,
        classes: m.classes.clone(),
        features: m.features.clone(),
        threshold,
        ensemble: best.ensemble,
        chosen: best.result,
        grid,
        outputs,
        metrics,
        importances,
        variable_importances,
        alerts: Vec::new(),
    };
    if let Some(alert) = detect_trivial_approximation(&model, m, params)? {
        model.alerts.push(alert);
    }
    if let Some(alert) = detect_rare_classes(&model) {
        model.alerts.push(alert);
    }
    Ok(model)
}

/// Retrain on the top variables by importance and compare validation
/// scores. Models with at most [`TOP_K`] variables are never flagged.
pub fn detect_trivial_approximation(
    model: &TrainedModel,
    m: &DesignMatrix,
    params: &LearnerParams,
) -> Result<Option<Alert>, ModelError> {
    if m.variables.len() <= TOP_K {
        return Ok(None);
    }
    let Some(full) = model.chosen.score else { return Ok(None) };
    let top: Vec<String> = model.variable_importances.iter().take(TOP_K).map(|i| i.name.clone()).collect();
    let reduced = search(&m.with_variables(&top), params)?;
    let Some(small) = reduced.best.result.score else { return Ok(None) };
    Ok((small >= TRIVIAL_RATIO * full).then(|| Alert::TrivialApproximation {
        variables: top,
        metric: primary_name(m.task).into(),
        full,
        reduced: small,
    }))
}

/// Classes whose validation recall is below [`RARE_RECALL`].
pub fn detect_rare_classes(model: &TrainedModel) -> Option<Alert> {
    let classes: Vec<RareClass> = match &model.metrics.val {
        Metrics::Binary(b) => [
            ("false", b.specificity, b.true_negatives + b.false_positives),
            ("true", b.sensitivity, b.positives),
        ]
        .into_iter()
        .filter_map(|(c, r, n)| r.filter(|r| *r < RARE_RECALL).map(|recall| RareClass { class: c.into(), recall, support: n }))
        .collect(),
        Metrics::Multiclass(mc) => mc
            .classes
            .iter()
            .filter_map(|c| {
                c.recall
                    .filter(|r| *r < RARE_RECALL)
                    .map(|recall| RareClass { class: c.class.clone(), recall, support: c.support })
            })
            .collect(),
        Metrics::Regression(_) => return None,
    };
    (!classes.is_empty()).then_some(Alert::RareClass { classes })
}
