//! Dataset configuration files and delimited-table loading.

use std::fs::File;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;
use trajql_core::store::{FieldData, SplitConfig, SplitFractions, StoreBuilder, StoreError, TrajectoryStore};
use trajql_core::value::{format_number, parse_number, Scalar, TimeUnit};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train: f64,
    pub val: f64,
    pub test: f64,
    #[serde(default)]
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        let f = SplitFractions::default();
        SplitSpec { train: f.train, val: f.val, test: f.test, seed: 0 }
    }
}

impl SplitSpec {
    pub fn config(&self) -> SplitConfig {
        SplitConfig { fractions: SplitFractions { train: self.train, val: self.val, test: self.test }, seed: self.seed }
    }
}

/// The JSON dataset configuration. Relative table paths resolve against the
/// directory holding the configuration file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attributes: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub events: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intervals: Option<PathBuf>,
    #[serde(default)]
    pub time_unit: TimeUnit,
    #[serde(default)]
    pub splits: SplitSpec,
}

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: invalid configuration: {message}")]
    Config { path: PathBuf, message: String },
    #[error("{path}: {message}")]
    Table { path: PathBuf, message: String },
    #[error("{path}: {source}")]
    Store { path: PathBuf, source: StoreError },
    #[error("{0}")]
    Invalid(String),
}

impl LoadError {
    pub fn code(&self) -> &'static str {
        match self {
            LoadError::Io { .. } => "load_error",
            LoadError::Config { .. } => "invalid_config",
            LoadError::Table { .. } => "invalid_table",
            LoadError::Store { .. } => "validation_error",
            LoadError::Invalid(_) => "invalid_config",
        }
    }
}

impl DatasetConfig {
    pub fn read(path: &Path) -> Result<DatasetConfig, LoadError> {
        let text = std::fs::read_to_string(path).map_err(|source| LoadError::Io { path: path.into(), source })?;
        let mut config: DatasetConfig = serde_json::from_str(&text)
            .map_err(|e| LoadError::Config { path: path.into(), message: e.to_string() })?;
        let base = path.parent().unwrap_or(Path::new("."));
        config.resolve_paths(base);
        Ok(config)
    }

    /// Make table paths absolute relative to `base`.
    pub fn resolve_paths(&mut self, base: &Path) {
        for p in [&mut self.attributes, &mut self.events, &mut self.intervals].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }

    pub fn validate(&self) -> Result<(), LoadError> {
        if self.name.trim().is_empty() || self.name.contains(['/', '\\']) || self.name.starts_with('.') {
            return Err(LoadError::Invalid(format!("dataset name `{}` is not a plain name", self.name)));
        }
        if self.attributes.is_none() && self.events.is_none() && self.intervals.is_none() {
            return Err(LoadError::Invalid("at least one of attributes, events and intervals is required".into()));
        }
        self.splits.config().fractions.validate().map_err(|e| LoadError::Invalid(e.to_string()))
    }
}

fn open(path: &Path) -> Result<csv::Reader<File>, LoadError> {
    let file = File::open(path).map_err(|source| LoadError::Io { path: path.into(), source })?;
    Ok(csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(file))
}

fn table_error(path: &Path, message: impl Into<String>) -> LoadError {
    LoadError::Table { path: path.into(), message: message.into() }
}

fn cell(value: &str) -> Option<&str> {
    (!value.is_empty()).then_some(value)
}

fn column_positions(path: &Path, headers: &csv::StringRecord, wanted: &[&str]) -> Result<Vec<usize>, LoadError> {
    wanted
        .iter()
        .map(|w| {
            headers
                .iter()
                .position(|h| h.eq_ignore_ascii_case(w))
                .ok_or_else(|| table_error(path, format!("missing column `{}`", w)))
        })
        .collect()
}

fn time(path: &Path, row: usize, what: &str, text: &str) -> Result<f64, LoadError> {
    parse_number(text).ok_or_else(|| table_error(path, format!("row {}: {} `{}` is not a number", row, what, text)))
}

fn records<'a>(path: &Path, reader: &'a mut csv::Reader<File>) -> impl Iterator<Item = Result<(usize, csv::StringRecord), LoadError>> + 'a {
    let path = path.to_path_buf();
    reader.records().enumerate().map(move |(i, r)| {
        r.map(|r| (i, r)).map_err(|e| table_error(&path, format!("row {}: {}", i, e)))
    })
}

/// Load and validate the tables named by `config`.
pub fn load_dataset(config: &DatasetConfig) -> Result<TrajectoryStore, LoadError> {
    config.validate()?;
    let mut b = StoreBuilder::new(&config.name, config.time_unit);

    if let Some(path) = &config.attributes {
        let mut r = open(path)?;
        let headers = r.headers().map_err(|e| table_error(path, e.to_string()))?.clone();
        let long = headers.len() == 3
            && ["field", "value"].iter().all(|w| headers.iter().any(|h| h.eq_ignore_ascii_case(w)));
        if long {
            let ix = column_positions(path, &headers, &["trajectory_id", "field", "value"])?;
            for rec in records(path, &mut r) {
                let (_, rec) = rec?;
                b.add_attribute(&rec[ix[0]], &rec[ix[1]], cell(&rec[ix[2]]));
            }
        } else {
            // Wide layout: one row per trajectory, one column per field.
            let id = column_positions(path, &headers, &["trajectory_id"])?[0];
            for rec in records(path, &mut r) {
                let (_, rec) = rec?;
                for (j, name) in headers.iter().enumerate() {
                    if j != id {
                        if let Some(v) = cell(&rec[j]) {
                            b.add_attribute(&rec[id], name, Some(v));
                        }
                    }
                }
            }
        }
    }
    if let Some(path) = &config.events {
        let mut r = open(path)?;
        let headers = r.headers().map_err(|e| table_error(path, e.to_string()))?.clone();
        let ix = column_positions(path, &headers, &["trajectory_id", "field", "time"])?;
        let value = headers.iter().position(|h| h.eq_ignore_ascii_case("value"));
        for rec in records(path, &mut r) {
            let (row, rec) = rec?;
            let t = time(path, row, "time", &rec[ix[2]])?;
            b.add_event(&rec[ix[0]], &rec[ix[1]], t, value.and_then(|v| cell(&rec[v])));
        }
    }
    if let Some(path) = &config.intervals {
        let mut r = open(path)?;
        let headers = r.headers().map_err(|e| table_error(path, e.to_string()))?.clone();
        let ix = column_positions(path, &headers, &["trajectory_id", "field", "start", "end"])?;
        let value = headers.iter().position(|h| h.eq_ignore_ascii_case("value"));
        for rec in records(path, &mut r) {
            let (row, rec) = rec?;
            let s = time(path, row, "start", &rec[ix[2]])?;
            let e = time(path, row, "end", &rec[ix[3]])?;
            b.add_interval(&rec[ix[0]], &rec[ix[1]], s, e, value.and_then(|v| cell(&rec[v])));
        }
    }
    b.build(config.splits.config()).map_err(|source| {
        let path = match &source {
            StoreError::IntervalEndsBeforeStart { .. } => config.intervals.clone(),
            StoreError::DuplicateAttribute { .. } => config.attributes.clone(),
            _ => None,
        };
        LoadError::Store { path: path.unwrap_or_else(|| PathBuf::from(&config.name)), source }
    })
}

pub fn load_config_file(path: &Path) -> Result<(DatasetConfig, TrajectoryStore), LoadError> {
    let config = DatasetConfig::read(path)?;
    let store = load_dataset(&config)?;
    Ok((config, store))
}

fn value_text(v: &Option<Scalar>) -> String {
    match v {
        None => String::new(),
        Some(Scalar::Number(x)) => format_number(*x),
        Some(other) => other.label(),
    }
}

/// Write `store` as three long tables plus a configuration file in `dir`.
/// Loading the result reproduces the store.
pub fn write_dataset(store: &TrajectoryStore, dir: &Path) -> Result<DatasetConfig, LoadError> {
    std::fs::create_dir_all(dir).map_err(|source| LoadError::Io { path: dir.into(), source })?;
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |e: csv::Error| table_error(&path, e.to_string())
    };
    let paths = [dir.join("attributes.csv"), dir.join("events.csv"), dir.join("intervals.csv")];
    let mut writers = Vec::new();
    for p in &paths {
        writers.push(csv::Writer::from_path(p).map_err(io(p))?);
    }
    writers[0].write_record(["trajectory_id", "field", "value"]).map_err(io(&paths[0]))?;
    writers[1].write_record(["trajectory_id", "field", "time", "value"]).map_err(io(&paths[1]))?;
    writers[2].write_record(["trajectory_id", "field", "start", "end", "value"]).map_err(io(&paths[2]))?;
    let id = |t: &u32| store.trajectory_id(*t).to_string();
    for f in store.fields() {
        match &f.data {
            FieldData::Attribute(r) => {
                for (t, v) in r.traj.iter().zip(&r.values) {
                    writers[0].write_record([id(t), f.name.clone(), value_text(v)]).map_err(io(&paths[0]))?;
                }
            }
            FieldData::Event(r) => {
                for i in 0..r.traj.len() {
                    let rec = [id(&r.traj[i]), f.name.clone(), format_number(r.times[i]), value_text(&r.values[i])];
                    writers[1].write_record(rec).map_err(io(&paths[1]))?;
                }
            }
            FieldData::Interval(r) => {
                for i in 0..r.traj.len() {
                    let rec = [
                        id(&r.traj[i]),
                        f.name.clone(),
                        format_number(r.starts[i]),
                        format_number(r.ends[i]),
                        value_text(&r.values[i]),
                    ];
                    writers[2].write_record(rec).map_err(io(&paths[2]))?;
                }
            }
        }
    }
    for (w, p) in writers.iter_mut().zip(&paths) {
        w.flush().map_err(|source| LoadError::Io { path: p.clone(), source })?;
    }
    let split = store.split_config();
    let config = DatasetConfig {
        name: store.name().to_string(),
        attributes: Some(paths[0].clone()),
        events: Some(paths[1].clone()),
        intervals: Some(paths[2].clone()),
        time_unit: store.time_unit(),
        splits: SplitSpec {
            train: split.fractions.train,
            val: split.fractions.val,
            test: split.fractions.test,
            seed: split.seed,
        },
    };
    let text = serde_json::to_string_pretty(&config).expect("config serializes");
    std::fs::write(dir.join("dataset.json"), text).map_err(|source| LoadError::Io { path: dir.join("dataset.json"), source })?;
    Ok(config)
}
