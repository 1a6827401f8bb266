//! Immutable columnar storage of trajectory observations.
//!
//! Data arrives in three long/narrow tables: attributes (one value per
//! trajectory and field), events (a value at an instant) and intervals (a
//! value over `[start, end]`). [`StoreBuilder`] collects raw text cells,
//! auto-types each field and validates the invariants; the resulting
//! [`TrajectoryStore`] is never mutated afterwards.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::cmp::Ordering;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hash::{unit_interval, ContentHasher};
use crate::value::{format_number, parse_boolean, parse_number, DType, Scalar, TimeUnit};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitFractions {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        SplitFractions { train: 0.6, val: 0.2, test: 0.2 }
    }
}

impl SplitFractions {
    pub fn new(train: f64, val: f64, test: f64) -> Result<Self, StoreError> {
        let f = SplitFractions { train, val, test };
        f.validate()?;
        Ok(f)
    }

    pub fn validate(&self) -> Result<(), StoreError> {
        let parts = [self.train, self.val, self.test];
        let in_range = parts.iter().all(|p| p.is_finite() && (0.0..=1.0).contains(p));
        let sum: f64 = parts.iter().sum();
        if !in_range || (sum - 1.0).abs() > 1e-9 {
            return Err(StoreError::InvalidFractions { train: self.train, val: self.val, test: self.test });
        }
        Ok(())
    }

    /// Split for a point `u` in `[0, 1)` by cumulative thresholds.
    pub fn split_for(&self, u: f64) -> Split {
        if u < self.train {
            Split::Train
        } else if u < self.train + self.val {
            Split::Val
        } else {
            Split::Test
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SplitConfig {
    pub fractions: SplitFractions,
    pub seed: u64,
}

/// Split assignment is a pure function of the trajectory id, seed and
/// fractions; row order never matters.
pub fn split_for_trajectory(id: &str, config: &SplitConfig) -> Split {
    config.fractions.split_for(unit_interval("split", config.seed, id))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FieldKind {
    Attribute,
    Event,
    Interval,
}

impl FieldKind {
    pub fn name(self) -> &'static str {
        match self {
            FieldKind::Attribute => "attribute",
            FieldKind::Event => "event",
            FieldKind::Interval => "interval",
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AttributeRows {
    pub traj: Vec<u32>,
    pub values: Vec<Option<Scalar>>,
}

/// Event rows sorted by `(trajectory, time)`, ties kept in input order.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EventRows {
    pub traj: Vec<u32>,
    pub times: Vec<f64>,
    pub values: Vec<Option<Scalar>>,
}

/// Interval rows sorted by `(trajectory, start, end)`, ties kept in input
/// order.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct IntervalRows {
    pub traj: Vec<u32>,
    pub starts: Vec<f64>,
    pub ends: Vec<f64>,
    pub values: Vec<Option<Scalar>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum FieldData {
    Attribute(AttributeRows),
    Event(EventRows),
    Interval(IntervalRows),
}

impl FieldData {
    pub fn kind(&self) -> FieldKind {
        match self {
            FieldData::Attribute(_) => FieldKind::Attribute,
            FieldData::Event(_) => FieldKind::Event,
            FieldData::Interval(_) => FieldKind::Interval,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            FieldData::Attribute(r) => r.traj.len(),
            FieldData::Event(r) => r.traj.len(),
            FieldData::Interval(r) => r.traj.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn values(&self) -> &[Option<Scalar>] {
        match self {
            FieldData::Attribute(r) => &r.values,
            FieldData::Event(r) => &r.values,
            FieldData::Interval(r) => &r.values,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Field {
    pub name: String,
    /// `None` when the field carries no values at all.
    pub dtype: Option<DType>,
    pub data: FieldData,
}

impl Field {
    pub fn kind(&self) -> FieldKind {
        self.data.kind()
    }

    /// Dtype used when the field is evaluated; valueless fields behave as
    /// all-missing numbers.
    pub fn value_dtype(&self) -> DType {
        self.dtype.unwrap_or(DType::Number)
    }
}

/// One line of the field catalog.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldInfo {
    pub name: String,
    pub kind: FieldKind,
    pub dtype: Option<DType>,
    pub rows: usize,
    pub distinct_values: usize,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StoreError {
    #[error("split fractions ({train}, {val}, {test}) must each lie in [0, 1] and sum to 1")]
    InvalidFractions { train: f64, val: f64, test: f64 },
    #[error("{table} row {row}: interval for field `{field}` ends at {end} before it starts at {start}")]
    IntervalEndsBeforeStart { table: &'static str, row: usize, field: String, start: f64, end: f64 },
    #[error("{table} row {row}: non-finite time for field `{field}`")]
    NonFiniteTime { table: &'static str, row: usize, field: String },
    #[error("attributes row {row}: duplicate attribute `{field}` for trajectory `{trajectory}`")]
    DuplicateAttribute { row: usize, field: String, trajectory: String },
    #[error("field `{field}` appears as both {first} and {second}")]
    ConflictingFieldKind { field: String, first: &'static str, second: &'static str },
    #[error("{table} row {row}: empty {what}")]
    EmptyKey { table: &'static str, row: usize, what: &'static str },
}

#[derive(Clone, Debug)]
struct RawRow {
    row: usize,
    traj: String,
    field: String,
    start: f64,
    end: f64,
    value: Option<String>,
}

/// Collects raw rows (text cells, as they come out of delimited files) and
/// builds a validated [`TrajectoryStore`].
#[derive(Clone, Debug, Default)]
pub struct StoreBuilder {
    name: String,
    time_unit: TimeUnit,
    attributes: Vec<RawRow>,
    events: Vec<RawRow>,
    intervals: Vec<RawRow>,
}

impl StoreBuilder {
    pub fn new(name: impl Into<String>, time_unit: TimeUnit) -> Self {
        StoreBuilder { name: name.into(), time_unit, ..Default::default() }
    }

    pub fn add_attribute(&mut self, traj: &str, field: &str, value: Option<&str>) -> &mut Self {
        let row = self.attributes.len();
        self.attributes.push(raw(row, traj, field, 0.0, 0.0, value));
        self
    }

    pub fn add_event(&mut self, traj: &str, field: &str, time: f64, value: Option<&str>) -> &mut Self {
        let row = self.events.len();
        self.events.push(raw(row, traj, field, time, time, value));
        self
    }

    pub fn add_interval(
        &mut self,
        traj: &str,
        field: &str,
        start: f64,
        end: f64,
        value: Option<&str>,
    ) -> &mut Self {
        let row = self.intervals.len();
        self.intervals.push(raw(row, traj, field, start, end, value));
        self
    }

    pub fn add_event_number(&mut self, traj: &str, field: &str, time: f64, value: f64) -> &mut Self {
        self.add_event(traj, field, time, Some(&format_number(value)))
    }

    pub fn add_interval_number(
        &mut self,
        traj: &str,
        field: &str,
        start: f64,
        end: f64,
        value: f64,
    ) -> &mut Self {
        self.add_interval(traj, field, start, end, Some(&format_number(value)))
    }

    pub fn add_attribute_number(&mut self, traj: &str, field: &str, value: f64) -> &mut Self {
        self.add_attribute(traj, field, Some(&format_number(value)))
    }

    pub fn build(self, splits: SplitConfig) -> Result<TrajectoryStore, StoreError> {
        splits.fractions.validate()?;
        for (table, rows) in [("attributes", &self.attributes), ("events", &self.events), ("intervals", &self.intervals)] {
            for r in rows.iter() {
                if r.traj.is_empty() {
                    return Err(StoreError::EmptyKey { table, row: r.row, what: "trajectory id" });
                }
                if r.field.is_empty() {
                    return Err(StoreError::EmptyKey { table, row: r.row, what: "field name" });
                }
                if !r.start.is_finite() || !r.end.is_finite() {
                    return Err(StoreError::NonFiniteTime { table, row: r.row, field: r.field.clone() });
                }
            }
        }
        for r in &self.intervals {
            if r.end < r.start {
                return Err(StoreError::IntervalEndsBeforeStart {
                    table: "intervals",
                    row: r.row,
                    field: r.field.clone(),
                    start: r.start,
                    end: r.end,
                });
            }
        }

        let mut kinds: BTreeMap<&str, FieldKind> = BTreeMap::new();
        for (kind, rows) in [
            (FieldKind::Attribute, &self.attributes),
            (FieldKind::Event, &self.events),
            (FieldKind::Interval, &self.intervals),
        ] {
            for r in rows.iter() {
                let existing = *kinds.entry(&r.field).or_insert(kind);
                if existing != kind {
                    return Err(StoreError::ConflictingFieldKind {
                        field: r.field.clone(),
                        first: existing.name(),
                        second: kind.name(),
                    });
                }
            }
        }

        let ids: BTreeSet<&str> = self
            .attributes
            .iter()
            .chain(&self.events)
            .chain(&self.intervals)
            .map(|r| r.traj.as_str())
            .collect();
        let mut trajectories: Vec<String> = ids.into_iter().map(String::from).collect();
        sort_trajectory_ids(&mut trajectories);
        let lookup: BTreeMap<&str, u32> =
            trajectories.iter().enumerate().map(|(i, t)| (t.as_str(), i as u32)).collect();

        let mut fields = BTreeMap::new();
        for (name, kind) in &kinds {
            let rows: Vec<&RawRow> = match kind {
                FieldKind::Attribute => self.attributes.iter().filter(|r| r.field == *name).collect(),
                FieldKind::Event => self.events.iter().filter(|r| r.field == *name).collect(),
                FieldKind::Interval => self.intervals.iter().filter(|r| r.field == *name).collect(),
            };
            let dtype = infer_dtype(rows.iter().filter_map(|r| r.value.as_deref()));
            let convert = |r: &RawRow| r.value.as_deref().and_then(|v| convert_cell(v, dtype));
            let mut order: Vec<usize> = (0..rows.len()).collect();
            let key = |i: usize| lookup[rows[i].traj.as_str()];
            let data = match kind {
                FieldKind::Attribute => {
                    order.sort_by_key(|&i| key(i));
                    for w in order.windows(2) {
                        if key(w[0]) == key(w[1]) {
                            let dup = rows[w[0]].row.max(rows[w[1]].row);
                            return Err(StoreError::DuplicateAttribute {
                                row: dup,
                                field: name.to_string(),
                                trajectory: rows[w[0]].traj.clone(),
                            });
                        }
                    }
                    FieldData::Attribute(AttributeRows {
                        traj: order.iter().map(|&i| key(i)).collect(),
                        values: order.iter().map(|&i| convert(rows[i])).collect(),
                    })
                }
                FieldKind::Event => {
                    order.sort_by(|&a, &b| key(a).cmp(&key(b)).then(rows[a].start.total_cmp(&rows[b].start)));
                    FieldData::Event(EventRows {
                        traj: order.iter().map(|&i| key(i)).collect(),
                        times: order.iter().map(|&i| rows[i].start).collect(),
                        values: order.iter().map(|&i| convert(rows[i])).collect(),
                    })
                }
                FieldKind::Interval => {
                    order.sort_by(|&a, &b| {
                        key(a)
                            .cmp(&key(b))
                            .then(rows[a].start.total_cmp(&rows[b].start))
                            .then(rows[a].end.total_cmp(&rows[b].end))
                    });
                    FieldData::Interval(IntervalRows {
                        traj: order.iter().map(|&i| key(i)).collect(),
                        starts: order.iter().map(|&i| rows[i].start).collect(),
                        ends: order.iter().map(|&i| rows[i].end).collect(),
                        values: order.iter().map(|&i| convert(rows[i])).collect(),
                    })
                }
            };
            fields.insert(name.to_string(), Field { name: name.to_string(), dtype, data });
        }

        Ok(TrajectoryStore::assemble(self.name, self.time_unit, trajectories, fields, splits))
    }
}

fn raw(row: usize, traj: &str, field: &str, start: f64, end: f64, value: Option<&str>) -> RawRow {
    RawRow {
        row,
        traj: traj.to_string(),
        field: field.to_string(),
        start,
        end,
        value: value.filter(|v| !v.trim().is_empty()).map(String::from),
    }
}

/// Numeric ids sort numerically, anything else lexicographically.
fn sort_trajectory_ids(ids: &mut [String]) {
    let all_numeric = ids.iter().all(|s| s.parse::<i64>().is_ok());
    if all_numeric {
        ids.sort_by_key(|s| s.parse::<i64>().unwrap_or(0));
    } else {
        ids.sort();
    }
}

/// Auto-typing: number if every present cell parses as a number, else
/// boolean if every cell is in {true, false, 0, 1}, else category.
pub fn infer_dtype<'a>(cells: impl Iterator<Item = &'a str> + Clone) -> Option<DType> {
    let mut any = false;
    let mut numeric = true;
    let mut boolean = true;
    for c in cells {
        any = true;
        numeric &= parse_number(c).is_some();
        boolean &= parse_boolean(c).is_some();
        if !numeric && !boolean {
            break;
        }
    }
    if !any {
        None
    } else if numeric {
        Some(DType::Number)
    } else if boolean {
        Some(DType::Boolean)
    } else {
        Some(DType::Category)
    }
}

fn convert_cell(cell: &str, dtype: Option<DType>) -> Option<Scalar> {
    match dtype? {
        DType::Number => parse_number(cell).map(Scalar::Number),
        DType::Boolean => parse_boolean(cell).map(Scalar::Boolean),
        DType::Category => Some(Scalar::Text(cell.to_string())),
    }
}

/// Validated, immutable dataset. Cloning is a deep copy; share it behind an
/// `Arc` for concurrent readers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryStore {
    name: String,
    time_unit: TimeUnit,
    trajectories: Vec<String>,
    fields: BTreeMap<String, Field>,
    split_config: SplitConfig,
    splits: Vec<Split>,
    spans: Vec<Option<(f64, f64)>>,
    checksum: String,
}

impl TrajectoryStore {
    fn assemble(
        name: String,
        time_unit: TimeUnit,
        trajectories: Vec<String>,
        fields: BTreeMap<String, Field>,
        split_config: SplitConfig,
    ) -> Self {
        let splits = trajectories.iter().map(|id| split_for_trajectory(id, &split_config)).collect();
        let spans = compute_spans(trajectories.len(), &fields);
        let checksum = compute_checksum(time_unit, &trajectories, &fields);
        TrajectoryStore { name, time_unit, trajectories, fields, split_config, splits, spans, checksum }
    }

    pub fn empty(name: impl Into<String>, time_unit: TimeUnit) -> Self {
        TrajectoryStore::assemble(name.into(), time_unit, Vec::new(), BTreeMap::new(), SplitConfig::default())
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn time_unit(&self) -> TimeUnit {
        self.time_unit
    }

    /// Hex SHA-256 over the observations (not the splits).
    pub fn checksum(&self) -> &str {
        &self.checksum
    }

    pub fn split_config(&self) -> &SplitConfig {
        &self.split_config
    }

    pub fn trajectory_count(&self) -> usize {
        self.trajectories.len()
    }

    pub fn trajectory_ids(&self) -> &[String] {
        &self.trajectories
    }

    pub fn trajectory_id(&self, idx: u32) -> &str {
        &self.trajectories[idx as usize]
    }

    pub fn trajectory_index(&self, id: &str) -> Option<u32> {
        self.trajectories.iter().position(|t| t == id).map(|i| i as u32)
    }

    pub fn split(&self, traj: u32) -> Split {
        self.splits[traj as usize]
    }

    pub fn splits(&self) -> &[Split] {
        &self.splits
    }

    /// First and last observation time (event times, interval starts and
    /// ends) of a trajectory; `None` if it only has attributes.
    pub fn span(&self, traj: u32) -> Option<(f64, f64)> {
        self.spans[traj as usize]
    }

    pub fn field(&self, name: &str) -> Option<&Field> {
        self.fields.get(name)
    }

    pub fn fields(&self) -> impl Iterator<Item = &Field> {
        self.fields.values()
    }

    /// Re-assign splits; returns a new store.
    pub fn assign_splits(&self, fractions: SplitFractions, seed: u64) -> Result<TrajectoryStore, StoreError> {
        fractions.validate()?;
        let config = SplitConfig { fractions, seed };
        let mut next = self.clone();
        next.splits = self.trajectories.iter().map(|id| split_for_trajectory(id, &config)).collect();
        next.split_config = config;
        Ok(next)
    }

    pub fn list_fields(&self) -> Vec<FieldInfo> {
        self.fields
            .values()
            .map(|f| {
                let mut distinct: Vec<&Scalar> = f.data.values().iter().flatten().collect();
                distinct.sort_by(|a, b| a.total_cmp(b));
                distinct.dedup_by(|a, b| a.total_cmp(b) == Ordering::Equal);
                FieldInfo {
                    name: f.name.clone(),
                    kind: f.kind(),
                    dtype: f.dtype,
                    rows: f.data.len(),
                    distinct_values: distinct.len(),
                }
            })
            .collect()
    }
}

fn compute_spans(n: usize, fields: &BTreeMap<String, Field>) -> Vec<Option<(f64, f64)>> {
    let mut spans: Vec<Option<(f64, f64)>> = alloc::vec![None; n];
    let mut widen = |t: u32, lo: f64, hi: f64| {
        let s = &mut spans[t as usize];
        *s = Some(match *s {
            None => (lo, hi),
            Some((a, b)) => (a.min(lo), b.max(hi)),
        });
    };
    for f in fields.values() {
        match &f.data {
            FieldData::Attribute(_) => {}
            FieldData::Event(r) => {
                for (t, x) in r.traj.iter().zip(&r.times) {
                    widen(*t, *x, *x);
                }
            }
            FieldData::Interval(r) => {
                for i in 0..r.traj.len() {
                    widen(r.traj[i], r.starts[i], r.ends[i]);
                }
            }
        }
    }
    spans
}

fn compute_checksum(unit: TimeUnit, trajectories: &[String], fields: &BTreeMap<String, Field>) -> String {
    let mut h = ContentHasher::new();
    h.f64(unit.seconds()).u64(trajectories.len() as u64);
    for t in trajectories {
        h.str(t);
    }
    let hash_values = |h: &mut ContentHasher, values: &[Option<Scalar>]| {
        for v in values {
            match v {
                None => h.u64(0),
                Some(Scalar::Number(x)) => h.u64(1).f64(*x),
                Some(Scalar::Boolean(b)) => h.u64(2).u64(*b as u64),
                Some(Scalar::Text(s)) => h.u64(3).str(s),
            };
        }
    };
    for f in fields.values() {
        h.str(&f.name).str(f.kind().name()).str(f.dtype.map(DType::name).unwrap_or("-"));
        h.u64(f.data.len() as u64);
        match &f.data {
            FieldData::Attribute(r) => {
                r.traj.iter().for_each(|t| {
                    h.u64(*t as u64);
                });
                hash_values(&mut h, &r.values);
            }
            FieldData::Event(r) => {
                for i in 0..r.traj.len() {
                    h.u64(r.traj[i] as u64).f64(r.times[i]);
                }
                hash_values(&mut h, &r.values);
            }
            FieldData::Interval(r) => {
                for i in 0..r.traj.len() {
                    h.u64(r.traj[i] as u64).f64(r.starts[i]).f64(r.ends[i]);
                }
                hash_values(&mut h, &r.values);
            }
        }
    }
    h.finish_hex()
}

/// The toy clinic dataset used throughout the tests and documentation
/// (times in hours).
pub fn toy_clinic() -> TrajectoryStore {
    let mut b = StoreBuilder::new("toy-clinic", TimeUnit::Hours);
    b.add_event_number("P1", "HeartRate", 1.0, 60.0)
        .add_event_number("P1", "HeartRate", 3.0, 80.0)
        .add_event_number("P1", "HeartRate", 10.0, 100.0)
        .add_event("P1", "Diagnosis", 2.0, Some("heart failure"))
        .add_interval("P1", "Admission", 0.0, 12.0, None)
        .add_interval_number("P1", "IVFluid", 2.0, 6.0, 100.0)
        .add_attribute_number("P1", "BirthTime", -87660.0)
        .add_event_number("P2", "HeartRate", 5.0, 70.0)
        .add_interval("P2", "Admission", 4.0, 8.0, None)
        .add_interval("P2", "Admission", 20.0, 30.0, None)
        .add_attribute_number("P2", "BirthTime", -175320.0);
    b.build(SplitConfig { fractions: SplitFractions { train: 1.0, val: 0.0, test: 0.0 }, seed: 0 })
        .expect("toy clinic fixture is valid")
}
