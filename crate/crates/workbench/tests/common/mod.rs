#![allow(dead_code)]

use std::path::{Path, PathBuf};

use trajql_core::store::TrajectoryStore;
use trajql_workbench::dataset::{write_dataset, DatasetConfig};
use trajql_workbench::Workspace;

pub fn toy_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data/toy-clinic")
}

/// Write `store` as CSV tables under `dir/<name>` and return the config path.
pub fn write_tables(store: &TrajectoryStore, dir: &Path) -> PathBuf {
    let out = dir.join(store.name());
    write_dataset(store, &out).unwrap();
    out.join("dataset.json")
}

pub fn ingest(ws: &Workspace, store: &TrajectoryStore, dir: &Path) {
    let config = DatasetConfig::read(&write_tables(store, dir)).unwrap();
    ws.ingest(config).unwrap();
}
