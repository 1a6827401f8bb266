//! Datasets, specs, trained models and subgroup runs under one data
//! directory. The CLI and the HTTP service both go through [`Workspace`].
//!
//! ```text
//! <root>/datasets/<name>/dataset.json
//!                        specs/<id>.json
//!                        models/<id>.json
//!                        subgroups/<id>.json
//!                        cache/
//! <root>/jobs/<id>.json
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};
use std::time::Instant;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use trajql_core::engine::{Evaluator, QueryValue, SplitScope, TimestepIndex, ValueKind};
use trajql_core::hash::ContentHasher;
use trajql_core::model::{
    build_design_matrix, train_model, Alert, DesignMatrix, GridResult, Importance, MetricsBundle, ModelSpec, RowCounts,
    Task, TrainedModel,
};
use trajql_core::profile::{profile_value, ResultProfile};
use trajql_core::query::{format_canonical, parse, parse_timestep_def, suggest_completions, Suggestion};
use trajql_core::store::{FieldInfo, Split, TrajectoryStore};
use trajql_core::subgroup::{
    discretize_column, discretize_inputs, metric_values, DistinguishingTable, GroupingFeature, MineParams, ModelRows,
    RankingCriteria, RuleEdit, SubgroupContext, SubgroupReport, SubgroupRule,
};
use trajql_core::value::{DType, Scalar, TimeUnit};
use trajql_core::engine::VariableSource;

use crate::cache::{CacheStats, CachedSource, ResultCache, SourceReport, ENV_CACHE_DIR};
use crate::dataset::{load_dataset, DatasetConfig};
use crate::error::WorkbenchError;

pub type Result<T> = std::result::Result<T, WorkbenchError>;

/// Rows returned by a preview at most.
pub const MAX_PREVIEW_ROWS: usize = 20;

pub struct Dataset {
    pub config: DatasetConfig,
    pub store: Arc<TrajectoryStore>,
    pub cache: ResultCache,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub name: String,
    pub time_unit: TimeUnit,
    pub trajectories: usize,
    pub checksum: String,
    pub splits: SplitCounts,
    pub fields: Vec<FieldInfo>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpecRecord {
    pub id: String,
    pub dataset: String,
    /// Bumped on every update.
    pub version: u64,
    pub spec: ModelSpec,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelRecord {
    pub id: String,
    pub dataset: String,
    #[serde(default)]
    pub spec_id: Option<String>,
    #[serde(default)]
    pub spec_version: Option<u64>,
    /// The spec with every query in canonical form.
    pub spec: ModelSpec,
    pub content_hash: String,
    pub sources: SourceReport,
    pub train_seconds: f64,
    pub model: TrainedModel,
    pub matrix: DesignMatrix,
}

/// Everything about a model except its trees and rows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub id: String,
    pub dataset: String,
    pub name: String,
    pub spec_id: Option<String>,
    pub spec_version: Option<u64>,
    pub task: Task,
    pub classes: Vec<String>,
    pub primary_metric: String,
    pub val_score: Option<f64>,
    pub test_score: Option<f64>,
    pub alerts: Vec<Alert>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelMetrics {
    pub id: String,
    pub task: Task,
    pub classes: Vec<String>,
    pub primary_metric: String,
    pub metrics: MetricsBundle,
    pub chosen: GridResult,
    pub grid: Vec<GridResult>,
    pub importances: Vec<Importance>,
    pub variable_importances: Vec<Importance>,
    pub alerts: Vec<Alert>,
    pub counts: RowCounts,
    pub sources: SourceReport,
}

impl ModelRecord {
    pub fn summary(&self) -> ModelSummary {
        ModelSummary {
            id: self.id.clone(),
            dataset: self.dataset.clone(),
            name: self.spec.name.clone(),
            spec_id: self.spec_id.clone(),
            spec_version: self.spec_version,
            task: self.model.task,
            classes: self.model.classes.clone(),
            primary_metric: self.model.primary_metric_name().into(),
            val_score: self.model.metrics.val.primary(),
            test_score: self.model.metrics.test.primary(),
            alerts: self.model.alerts.clone(),
        }
    }

    pub fn metrics(&self) -> ModelMetrics {
        let m = &self.model;
        ModelMetrics {
            id: self.id.clone(),
            task: m.task,
            classes: m.classes.clone(),
            primary_metric: m.primary_metric_name().into(),
            metrics: m.metrics.clone(),
            chosen: m.chosen.clone(),
            grid: m.grid.clone(),
            importances: m.importances.clone(),
            variable_importances: m.variable_importances.clone(),
            alerts: m.alerts.clone(),
            counts: self.matrix.counts.clone(),
            sources: self.sources.clone(),
        }
    }
}

/// Rows a subgroup search runs over.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MineScope {
    /// Validation and test rows.
    #[default]
    Heldout,
    All,
    Train,
    Val,
    Test,
}

impl MineScope {
    fn contains(self, split: Split) -> bool {
        match self {
            MineScope::Heldout => split != Split::Train,
            MineScope::All => true,
            MineScope::Train => split == Split::Train,
            MineScope::Val => split == Split::Val,
            MineScope::Test => split == Split::Test,
        }
    }
}

/// An extra grouping feature given as a query over the model's timesteps.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureQuery {
    pub name: String,
    pub query: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MineRequest {
    pub model: String,
    /// Further models the metric may refer to; they must share the rows.
    #[serde(default)]
    pub models: Vec<String>,
    pub criteria: RankingCriteria,
    #[serde(default)]
    pub params: MineParams,
    #[serde(default)]
    pub scope: MineScope,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub features: Vec<FeatureQuery>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureSummary {
    pub name: String,
    pub query: Option<String>,
    pub values: Vec<String>,
}

impl From<&GroupingFeature> for FeatureSummary {
    fn from(f: &GroupingFeature) -> Self {
        FeatureSummary { name: f.name.clone(), query: f.query.clone(), values: f.values.clone() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubgroupRun {
    pub id: String,
    pub dataset: String,
    pub request: MineRequest,
    /// Rows per half.
    pub discovery_rows: usize,
    pub evaluation_rows: usize,
    pub features: Vec<FeatureSummary>,
    pub reports: Vec<SubgroupReport>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluateRequest {
    pub run: String,
    pub rule: SubgroupRule,
    /// Features added since the run, e.g. by a query edit.
    #[serde(default)]
    pub features: Vec<FeatureQuery>,
}

/// A rule edit. `replace_query` swaps a predicate for one on a feature
/// computed from a new query.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum EditAction {
    DropPredicate { index: usize },
    SetValues { index: usize, values: Vec<String> },
    AddPredicate { feature: String, values: Vec<String> },
    ReplacePredicate { index: usize, feature: String, values: Vec<String> },
    ReplaceQuery { index: usize, name: String, query: String, #[serde(default)] values: Option<Vec<String>> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EditRequest {
    pub run: String,
    pub rule: SubgroupRule,
    pub edit: EditAction,
    #[serde(default)]
    pub features: Vec<FeatureQuery>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EditResponse {
    pub report: SubgroupReport,
    /// The feature a `replace_query` edit created.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feature: Option<FeatureSummary>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistinguishingRequest {
    pub run: String,
    pub rule: SubgroupRule,
    #[serde(default)]
    pub offset: i64,
    #[serde(default)]
    pub features: Vec<FeatureQuery>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PreviewRequest {
    pub dataset: String,
    pub query: String,
    /// Timestep definition for queries that use `#now`.
    #[serde(default)]
    pub timesteps: Option<String>,
    #[serde(default)]
    pub head: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleRow {
    pub trajectory_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub end: Option<f64>,
    pub value: Option<Scalar>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PreviewResponse {
    pub canonical: String,
    pub kind: ValueKind,
    pub dtype: DType,
    pub rows: usize,
    pub profile: ResultProfile,
    pub sample: Vec<SampleRow>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompleteRequest {
    pub dataset: String,
    pub source: String,
    pub cursor: usize,
}

/// Progress and cancellation hook for long operations. Returns `false`
/// once the caller wants the operation to stop.
pub type Progress<'a> = &'a (dyn Fn(f64, &str) -> bool + Sync);

pub fn no_progress(_: f64, _: &str) -> bool {
    true
}

pub struct Workspace {
    root: PathBuf,
    datasets: RwLock<BTreeMap<String, Arc<Dataset>>>,
    specs: Mutex<BTreeMap<String, SpecRecord>>,
    next_spec: AtomicU64,
    models: Mutex<BTreeMap<String, Arc<ModelRecord>>>,
    runs: Mutex<BTreeMap<String, Arc<SubgroupRun>>>,
    contexts: Mutex<BTreeMap<String, Arc<SubgroupContext>>>,
}

fn io_error(path: &Path, e: impl std::fmt::Display) -> WorkbenchError {
    WorkbenchError::Internal(format!("{}: {}", path.display(), e))
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let dir = path.parent().expect("artifact paths have a parent");
    std::fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
    let bytes = serde_json::to_vec_pretty(value).map_err(WorkbenchError::internal)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| io_error(dir, e))?;
    std::io::Write::write_all(&mut tmp, &bytes).map_err(|e| io_error(path, e))?;
    tmp.persist(path).map_err(|e| io_error(path, e.error))?;
    Ok(())
}

pub(crate) fn read_json_dir<T: DeserializeOwned>(dir: &Path) -> Vec<T> {
    let Ok(entries) = std::fs::read_dir(dir) else { return Vec::new() };
    let mut paths: Vec<PathBuf> =
        entries.flatten().map(|e| e.path()).filter(|p| p.extension().is_some_and(|x| x == "json")).collect();
    paths.sort();
    paths
        .into_iter()
        .filter_map(|p| {
            let parsed = std::fs::read(&p).map_err(|e| e.to_string()).and_then(|b| serde_json::from_slice(&b).map_err(|e| e.to_string()));
            parsed.map_err(|e| log::warn!("skipping {}: {}", p.display(), e)).ok()
        })
        .collect()
}

/// Content hash of a spec on a dataset. The spec name is left out so that
/// duplicates of an unchanged spec map to the same model.
pub fn model_key(store: &TrajectoryStore, spec: &ModelSpec) -> Result<String> {
    let mut canonical = spec.canonical()?;
    canonical.name.clear();
    let split = store.split_config();
    let mut h = ContentHasher::new();
    h.str("model-1")
        .str(store.checksum())
        .u64(split.seed)
        .f64(split.fractions.train)
        .f64(split.fractions.val)
        .f64(split.fractions.test)
        .str(&serde_json::to_string(&canonical).map_err(WorkbenchError::internal)?);
    Ok(h.finish_hex())
}

pub fn mine_key(request: &MineRequest) -> String {
    let mut h = ContentHasher::new();
    h.str("mine-1").str(&serde_json::to_string(request).expect("request serializes"));
    h.finish_hex()
}

impl Workspace {
    /// Open `root`, creating it if needed, and reload every dataset and
    /// artifact found there.
    pub fn open(root: impl Into<PathBuf>) -> Result<Workspace> {
        let root = root.into();
        std::fs::create_dir_all(root.join("datasets")).map_err(|e| io_error(&root, e))?;
        let ws = Workspace {
            root,
            datasets: RwLock::new(BTreeMap::new()),
            specs: Mutex::new(BTreeMap::new()),
            next_spec: AtomicU64::new(1),
            models: Mutex::new(BTreeMap::new()),
            runs: Mutex::new(BTreeMap::new()),
            contexts: Mutex::new(BTreeMap::new()),
        };
        let mut names: Vec<PathBuf> = std::fs::read_dir(ws.root.join("datasets"))
            .map_err(|e| io_error(&ws.root, e))?
            .flatten()
            .map(|e| e.path())
            .filter(|p| p.join("dataset.json").is_file())
            .collect();
        names.sort();
        for dir in names {
            let config = match DatasetConfig::read(&dir.join("dataset.json")) {
                Ok(c) => c,
                Err(e) => {
                    log::warn!("skipping dataset in {}: {}", dir.display(), e);
                    continue;
                }
            };
            if let Err(e) = ws.attach(config) {
                log::warn!("skipping dataset in {}: {}", dir.display(), e);
                continue;
            }
            for spec in read_json_dir::<SpecRecord>(&dir.join("specs")) {
                if let Some(n) = spec.id.strip_prefix("spec-").and_then(|n| n.parse::<u64>().ok()) {
                    ws.next_spec.fetch_max(n + 1, Ordering::SeqCst);
                }
                ws.specs.lock().unwrap().insert(spec.id.clone(), spec);
            }
            for model in read_json_dir::<ModelRecord>(&dir.join("models")) {
                ws.models.lock().unwrap().insert(model.id.clone(), Arc::new(model));
            }
            for run in read_json_dir::<SubgroupRun>(&dir.join("subgroups")) {
                ws.runs.lock().unwrap().insert(run.id.clone(), Arc::new(run));
            }
        }
        Ok(ws)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn dataset_dir(&self, name: &str) -> PathBuf {
        self.root.join("datasets").join(name)
    }

    fn cache_dir(&self, name: &str) -> PathBuf {
        match std::env::var_os(ENV_CACHE_DIR) {
            Some(dir) if !dir.is_empty() => PathBuf::from(dir).join(name),
            _ => self.dataset_dir(name).join("cache"),
        }
    }

    fn attach(&self, config: DatasetConfig) -> Result<Arc<Dataset>> {
        let store = load_dataset(&config)?;
        let cache_dir = self.cache_dir(&config.name);
        let cache = ResultCache::open(&cache_dir).map_err(|e| io_error(&cache_dir, e))?;
        let ds = Arc::new(Dataset { config, store: Arc::new(store), cache });
        self.datasets.write().unwrap().insert(ds.config.name.clone(), ds.clone());
        Ok(ds)
    }

    /// Load the tables named by `config`, validate them and register the
    /// dataset. Loading a name again replaces the earlier data.
    pub fn ingest(&self, mut config: DatasetConfig) -> Result<DatasetSummary> {
        let cwd = std::env::current_dir().map_err(WorkbenchError::internal)?;
        config.resolve_paths(&cwd);
        config.validate()?;
        let ds = self.attach(config)?;
        write_json(&self.dataset_dir(&ds.config.name).join("dataset.json"), &ds.config)?;
        Ok(summarize(&ds))
    }

    pub fn dataset(&self, name: &str) -> Result<Arc<Dataset>> {
        self.datasets.read().unwrap().get(name).cloned().ok_or_else(|| WorkbenchError::not_found("dataset", name))
    }

    pub fn datasets(&self) -> Vec<DatasetSummary> {
        self.datasets.read().unwrap().values().map(|d| summarize(d)).collect()
    }

    pub fn dataset_summary(&self, name: &str) -> Result<DatasetSummary> {
        Ok(summarize(&*self.dataset(name)?))
    }

    pub fn fields(&self, name: &str) -> Result<Vec<FieldInfo>> {
        Ok(self.dataset(name)?.store.list_fields())
    }

    pub fn cache_stats(&self, name: &str) -> Result<CacheStats> {
        Ok(self.dataset(name)?.cache.stats())
    }

    // Queries

    pub fn preview(&self, req: &PreviewRequest) -> Result<PreviewResponse> {
        let ds = self.dataset(&req.dataset)?;
        let expr = parse(&req.query)?;
        let index = match req.timesteps.as_deref().filter(|t| !t.trim().is_empty()) {
            Some(t) => {
                let def = parse_timestep_def(t)?;
                Some(trajql_core::engine::DirectSource::default().timesteps(&def, &ds.store)?)
            }
            None => None,
        };
        let value = Evaluator::new(&ds.store).evaluate(&expr, index.as_ref(), SplitScope::ALL)?;
        let head = req.head.unwrap_or(MAX_PREVIEW_ROWS).min(MAX_PREVIEW_ROWS);
        Ok(PreviewResponse {
            canonical: format_canonical(&expr),
            kind: value.kind(),
            dtype: value.dtype(),
            rows: value.len(),
            profile: profile_value(&value),
            sample: sample_rows(&ds.store, &value, head),
        })
    }

    pub fn complete(&self, req: &CompleteRequest) -> Result<Vec<Suggestion>> {
        let ds = self.dataset(&req.dataset)?;
        if req.cursor > req.source.len() || !req.source.is_char_boundary(req.cursor) {
            return Err(WorkbenchError::Invalid(format!("cursor {} is not a character boundary", req.cursor)));
        }
        Ok(suggest_completions(&req.source, req.cursor, &ds.store.list_fields()))
    }

    // Specs

    pub fn specs(&self, dataset: Option<&str>) -> Vec<SpecRecord> {
        let specs = self.specs.lock().unwrap();
        specs.values().filter(|s| dataset.is_none_or(|d| s.dataset == d)).cloned().collect()
    }

    pub fn spec(&self, id: &str) -> Result<SpecRecord> {
        self.specs.lock().unwrap().get(id).cloned().ok_or_else(|| WorkbenchError::not_found("spec", id))
    }

    fn save_spec(&self, record: SpecRecord) -> Result<SpecRecord> {
        write_json(&self.dataset_dir(&record.dataset).join("specs").join(format!("{}.json", record.id)), &record)?;
        self.specs.lock().unwrap().insert(record.id.clone(), record.clone());
        Ok(record)
    }

    pub fn create_spec(&self, dataset: &str, spec: ModelSpec) -> Result<SpecRecord> {
        self.dataset(dataset)?;
        spec.parse()?;
        let id = format!("spec-{}", self.next_spec.fetch_add(1, Ordering::SeqCst));
        self.save_spec(SpecRecord { id, dataset: dataset.into(), version: 1, spec })
    }

    /// Replace a spec. `expected_version`, when given, must match the
    /// stored version.
    pub fn update_spec(&self, id: &str, expected_version: Option<u64>, spec: ModelSpec) -> Result<SpecRecord> {
        spec.parse()?;
        let current = self.spec(id)?;
        if let Some(v) = expected_version {
            if v != current.version {
                return Err(WorkbenchError::Conflict(format!(
                    "spec `{}` is at version {}, not {}",
                    id, current.version, v
                )));
            }
        }
        self.save_spec(SpecRecord { version: current.version + 1, spec, ..current })
    }

    /// Copy a spec under a new name.
    pub fn duplicate_spec(&self, id: &str, name: Option<String>) -> Result<SpecRecord> {
        let current = self.spec(id)?;
        let mut spec = current.spec.clone();
        spec.name = name.unwrap_or_else(|| format!("{} (copy)", spec.name));
        self.create_spec(&current.dataset, spec)
    }

    pub fn delete_spec(&self, id: &str) -> Result<()> {
        let record = self.specs.lock().unwrap().remove(id).ok_or_else(|| WorkbenchError::not_found("spec", id))?;
        let path = self.dataset_dir(&record.dataset).join("specs").join(format!("{}.json", id));
        std::fs::remove_file(&path).map_err(|e| io_error(&path, e))
    }

    // Models

    pub fn models(&self, dataset: Option<&str>) -> Vec<ModelSummary> {
        let models = self.models.lock().unwrap();
        models.values().filter(|m| dataset.is_none_or(|d| m.dataset == d)).map(|m| m.summary()).collect()
    }

    pub fn model(&self, id: &str) -> Result<Arc<ModelRecord>> {
        self.models.lock().unwrap().get(id).cloned().ok_or_else(|| WorkbenchError::not_found("model", id))
    }

    /// Id the model for `spec` on `dataset` has or will have.
    pub fn model_id(&self, dataset: &str, spec: &ModelSpec) -> Result<String> {
        let ds = self.dataset(dataset)?;
        Ok(format!("m-{}", &model_key(&ds.store, spec)?[..12]))
    }

    /// Build the design matrix and train. A spec whose content was trained
    /// before returns the stored model.
    pub fn train(&self, dataset: &str, spec: &ModelSpec, spec_ref: Option<(&str, u64)>, progress: Progress) -> Result<Arc<ModelRecord>> {
        let ds = self.dataset(dataset)?;
        let key = model_key(&ds.store, spec)?;
        let id = format!("m-{}", &key[..12]);
        if let Ok(existing) = self.model(&id) {
            return Ok(existing);
        }
        let started = Instant::now();
        if !progress(0.05, "building design matrix") {
            return Err(WorkbenchError::Cancelled);
        }
        let mut source = CachedSource::new(&ds.cache);
        let matrix = build_design_matrix(spec, &ds.store, &mut source)?;
        if !progress(0.4, "training") {
            return Err(WorkbenchError::Cancelled);
        }
        let model = train_model(&matrix, &spec.learner, spec.threshold)?;
        if !progress(0.95, "saving") {
            return Err(WorkbenchError::Cancelled);
        }
        let record = ModelRecord {
            id: id.clone(),
            dataset: dataset.into(),
            spec_id: spec_ref.map(|(s, _)| s.to_string()),
            spec_version: spec_ref.map(|(_, v)| v),
            spec: spec.canonical()?,
            content_hash: key,
            sources: source.report,
            train_seconds: started.elapsed().as_secs_f64(),
            model,
            matrix,
        };
        write_json(&self.dataset_dir(dataset).join("models").join(format!("{}.json", id)), &record)?;
        let record = Arc::new(record);
        self.models.lock().unwrap().insert(id, record.clone());
        Ok(record)
    }

    pub fn train_spec(&self, spec_id: &str, progress: Progress) -> Result<Arc<ModelRecord>> {
        let record = self.spec(spec_id)?;
        self.train(&record.dataset, &record.spec, Some((&record.id, record.version)), progress)
    }

    pub fn export_model(&self, id: &str, dir: &Path) -> Result<Vec<PathBuf>> {
        let model = self.model(id)?;
        let ds = self.dataset(&model.dataset)?;
        crate::export::export_matrices(&model.matrix, &ds.store, dir)
    }

    pub fn export_split(&self, id: &str, split: Split) -> Result<Vec<u8>> {
        let model = self.model(id)?;
        let ds = self.dataset(&model.dataset)?;
        let mut out = Vec::new();
        crate::export::write_split(&model.matrix, &ds.store, split, &mut out)?;
        Ok(out)
    }

    // Subgroups

    pub fn subgroup_runs(&self, model: Option<&str>) -> Vec<Arc<SubgroupRun>> {
        let runs = self.runs.lock().unwrap();
        runs.values().filter(|r| model.is_none_or(|m| r.request.model == m)).cloned().collect()
    }

    pub fn subgroup_run(&self, id: &str) -> Result<Arc<SubgroupRun>> {
        self.runs.lock().unwrap().get(id).cloned().ok_or_else(|| WorkbenchError::not_found("subgroup run", id))
    }

    pub fn run_id(request: &MineRequest) -> String {
        format!("g-{}", &mine_key(request)[..12])
    }

    /// Evaluate `query` on the model's rows and discretize it.
    fn query_feature(&self, model: &ModelRecord, name: &str, query: &str) -> Result<GroupingFeature> {
        let ds = self.dataset(&model.dataset)?;
        let expr = parse(query)?;
        let mut source = CachedSource::new(&ds.cache);
        let value = source.variable(name, &expr, &ds.store, &model.matrix.index)?;
        let QueryValue::TimeSeries(ts) = value else {
            return Err(WorkbenchError::Invalid(format!(
                "`{}` evaluates to {} rows; grouping features must be aggregated to the timesteps",
                name,
                value.kind().name()
            )));
        };
        discretize_column(name, Some(format_canonical(&expr)), &ts.column, &model.matrix.splits)
            .ok_or_else(|| WorkbenchError::Invalid(format!("`{}` is constant on the model's rows", name)))
    }

    fn build_context(&self, request: &MineRequest) -> Result<SubgroupContext> {
        let model = self.model(&request.model)?;
        let mut features = discretize_inputs(&model.matrix, &model.spec.inputs);
        for extra in &request.features {
            let f = self.query_feature(&model, &extra.name, &extra.query)?;
            features.retain(|g| g.name != f.name);
            features.push(f);
        }
        let others: Vec<Arc<ModelRecord>> = request.models.iter().map(|m| self.model(m)).collect::<Result<_>>()?;
        let mut rows = vec![ModelRows::new(&model.id, &model.matrix, &model.model)];
        rows.extend(others.iter().map(|m| ModelRows::new(&m.id, &m.matrix, &m.model)));
        let metric = metric_values(&request.criteria.metric, &rows)?;
        let in_scope: Vec<usize> =
            (0..model.matrix.rows()).filter(|&r| request.scope.contains(model.matrix.splits[r])).collect();
        Ok(SubgroupContext::new(
            features,
            metric,
            &model.matrix.index.traj,
            &in_scope,
            request.criteria.clone(),
            request.seed,
        )?
        .with_min_support(request.params.min_support))
    }

    fn context(&self, run: &SubgroupRun) -> Result<Arc<SubgroupContext>> {
        if let Some(c) = self.contexts.lock().unwrap().get(&run.id) {
            return Ok(c.clone());
        }
        let ctx = Arc::new(self.build_context(&run.request)?);
        self.contexts.lock().unwrap().insert(run.id.clone(), ctx.clone());
        Ok(ctx)
    }

    fn context_with(&self, run_id: &str, extra: &[FeatureQuery]) -> Result<(Arc<SubgroupRun>, Arc<SubgroupContext>)> {
        let run = self.subgroup_run(run_id)?;
        let mut ctx = self.context(&run)?;
        if !extra.is_empty() {
            let model = self.model(&run.request.model)?;
            let mut c = (*ctx).clone();
            for q in extra {
                c = c.with_feature(self.query_feature(&model, &q.name, &q.query)?)?;
            }
            ctx = Arc::new(c);
        }
        Ok((run, ctx))
    }

    /// Mine subgroups. Repeating a request returns the stored run.
    pub fn mine(&self, request: &MineRequest, progress: Progress) -> Result<Arc<SubgroupRun>> {
        let id = Self::run_id(request);
        if let Ok(run) = self.subgroup_run(&id) {
            return Ok(run);
        }
        let model = self.model(&request.model)?;
        if !progress(0.05, "preparing features") {
            return Err(WorkbenchError::Cancelled);
        }
        let ctx = self.build_context(request)?;
        let mut cancelled = || !progress(0.5, "searching");
        let reports = ctx.mine_with(&request.params, &mut cancelled)?;
        let run = SubgroupRun {
            id: id.clone(),
            dataset: model.dataset.clone(),
            request: request.clone(),
            discovery_rows: (0..ctx.metric().len()).filter(|&r| ctx.half(r) == Some(trajql_core::subgroup::Half::Discovery)).count(),
            evaluation_rows: (0..ctx.metric().len()).filter(|&r| ctx.half(r) == Some(trajql_core::subgroup::Half::Evaluation)).count(),
            features: ctx.features().iter().map(FeatureSummary::from).collect(),
            reports,
        };
        write_json(&self.dataset_dir(&model.dataset).join("subgroups").join(format!("{}.json", id)), &run)?;
        let run = Arc::new(run);
        self.runs.lock().unwrap().insert(id.clone(), run.clone());
        self.contexts.lock().unwrap().insert(id, Arc::new(ctx));
        Ok(run)
    }

    pub fn evaluate_rule(&self, req: &EvaluateRequest) -> Result<SubgroupReport> {
        let (_, ctx) = self.context_with(&req.run, &req.features)?;
        Ok(ctx.evaluate_rule(&req.rule)?)
    }

    pub fn edit_rule(&self, req: &EditRequest) -> Result<EditResponse> {
        let (run, ctx) = self.context_with(&req.run, &req.features)?;
        let edit = match &req.edit {
            EditAction::DropPredicate { index } => RuleEdit::DropPredicate { index: *index },
            EditAction::SetValues { index, values } => RuleEdit::SetValues { index: *index, values: values.clone() },
            EditAction::AddPredicate { feature, values } => {
                RuleEdit::AddPredicate { feature: feature.clone(), values: values.clone() }
            }
            EditAction::ReplacePredicate { index, feature, values } => {
                RuleEdit::ReplacePredicate { index: *index, feature: feature.clone(), values: values.clone() }
            }
            EditAction::ReplaceQuery { index, name, query, values } => {
                let model = self.model(&run.request.model)?;
                let feature = self.query_feature(&model, name, query)?;
                let summary = FeatureSummary::from(&feature);
                let values = values.clone().unwrap_or_else(|| vec![feature.values[0].clone()]);
                let ctx = ctx.with_feature(feature)?;
                let edit = RuleEdit::ReplacePredicate { index: *index, feature: name.clone(), values };
                let report = ctx.edit_rule(&req.rule, &edit)?;
                return Ok(EditResponse { report, feature: Some(summary) });
            }
        };
        Ok(EditResponse { report: ctx.edit_rule(&req.rule, &edit)?, feature: None })
    }

    pub fn distinguishing(&self, req: &DistinguishingRequest) -> Result<DistinguishingTable> {
        let (_, ctx) = self.context_with(&req.run, &req.features)?;
        Ok(ctx.distinguishing_features(&req.rule, req.offset)?)
    }
}

fn summarize(ds: &Dataset) -> DatasetSummary {
    let s = &ds.store;
    let count = |split| s.splits().iter().filter(|x| **x == split).count();
    DatasetSummary {
        name: s.name().into(),
        time_unit: s.time_unit(),
        trajectories: s.trajectory_count(),
        checksum: s.checksum().into(),
        splits: SplitCounts { train: count(Split::Train), val: count(Split::Val), test: count(Split::Test) },
        fields: s.list_fields(),
    }
}

fn sample_rows(store: &TrajectoryStore, value: &QueryValue, head: usize) -> Vec<SampleRow> {
    let column = value.column();
    let n = value.len().min(head);
    let row = |t: u32, i: usize| SampleRow {
        trajectory_id: store.trajectory_id(t).into(),
        time: None,
        start: None,
        end: None,
        value: column.values[i].clone(),
    };
    match value {
        QueryValue::Attributes { traj, .. } => (0..n).map(|i| row(traj[i], i)).collect(),
        QueryValue::Events { traj, times, .. } => {
            (0..n).map(|i| SampleRow { time: Some(times[i]), ..row(traj[i], i) }).collect()
        }
        QueryValue::Intervals { traj, starts, ends, .. } => {
            (0..n).map(|i| SampleRow { start: Some(starts[i]), end: Some(ends[i]), ..row(traj[i], i) }).collect()
        }
        QueryValue::TimeSeries(ts) => {
            let ix: &TimestepIndex = &ts.index;
            (0..n).map(|i| SampleRow { time: Some(ix.times[i]), ..row(ix.traj[i], i) }).collect()
        }
    }
}
