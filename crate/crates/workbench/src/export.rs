//! CSV export of design matrices.

use std::io::Write;
use std::path::{Path, PathBuf};

use trajql_core::model::{DesignMatrix, Task};
use trajql_core::store::{Split, TrajectoryStore};
use trajql_core::value::format_number;

use crate::error::WorkbenchError;

/// Header: `trajectory_id`, `time`, one column per feature, `target`.
pub fn header(matrix: &DesignMatrix) -> Vec<String> {
    let mut h = vec!["trajectory_id".to_string(), "time".to_string()];
    h.extend(matrix.features.iter().map(|f| f.name.clone()));
    h.push("target".into());
    h
}

fn target_text(matrix: &DesignMatrix, row: usize) -> String {
    let y = matrix.target[row];
    match matrix.task {
        Task::Regression => format_number(y),
        _ => matrix.classes[y as usize].clone(),
    }
}

/// Rows of one split in index order, i.e. by trajectory then time. Missing
/// values are empty cells.
pub fn write_split<W: Write>(
    matrix: &DesignMatrix,
    store: &TrajectoryStore,
    split: Split,
    out: W,
) -> Result<usize, WorkbenchError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header(matrix)).map_err(WorkbenchError::internal)?;
    let mut n = 0;
    for r in matrix.rows_in(split) {
        let mut rec = vec![store.trajectory_id(matrix.index.traj[r]).to_string(), format_number(matrix.index.times[r])];
        for c in &matrix.columns {
            rec.push(if c[r].is_nan() { String::new() } else { format_number(c[r]) });
        }
        rec.push(target_text(matrix, r));
        w.write_record(&rec).map_err(WorkbenchError::internal)?;
        n += 1;
    }
    w.flush().map_err(WorkbenchError::internal)?;
    Ok(n)
}

/// Write `train.csv`, `val.csv` and `test.csv` into `dir`.
pub fn export_matrices(matrix: &DesignMatrix, store: &TrajectoryStore, dir: &Path) -> Result<Vec<PathBuf>, WorkbenchError> {
    std::fs::create_dir_all(dir).map_err(|e| WorkbenchError::Invalid(format!("{}: {}", dir.display(), e)))?;
    let mut paths = Vec::new();
    for split in Split::ALL {
        let path = dir.join(format!("{}.csv", split.name()));
        let file = std::fs::File::create(&path).map_err(|e| WorkbenchError::Invalid(format!("{}: {}", path.display(), e)))?;
        write_split(matrix, store, split, std::io::BufWriter::new(file))?;
        paths.push(path);
    }
    Ok(paths)
}
