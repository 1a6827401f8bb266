//! Content-addressed cache of evaluated model variables.
//!
//! Each result lives in `<key>.tqlc`, a small columnar file:
//!
//! ```text
//! "TQLC" u32 version  u8 kind  u8 dtype  u64 rows
//! [u32 trajectory; rows]                      attributes only
//! presence bitmap, ceil(rows / 8) bytes
//! values: f64 | u8 | (u32 n, n × (u32 len, utf-8)) then u32 codes
//! 32-byte SHA-256 of everything above
//! ```
//!
//! `manifest.json` maps keys to the variable names, query text, dtype and
//! row count. Files are written to a temporary name and renamed into place.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use trajql_core::engine::{Column, EvalError, Evaluator, QueryValue, SplitScope, TimeSeries, TimestepIndex, ValueKind, VariableSource};
use trajql_core::hash::ContentHasher;
use trajql_core::query::format_canonical;
use trajql_core::store::TrajectoryStore;
use trajql_core::value::{DType, Scalar};
use trajql_core::Expr;

const MAGIC: &[u8; 4] = b"TQLC";
const VERSION: u32 = 1;
pub const ENV_CACHE_DIR: &str = "TRAJQL_CACHE_DIR";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub names: BTreeSet<String>,
    pub query: String,
    pub kind: ValueKind,
    pub dtype: DType,
    pub rows: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub entries: BTreeMap<String, ManifestEntry>,
}

/// Cumulative counters since the cache was opened.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheStats {
    pub hits: u64,
    pub misses: u64,
    pub corrupt: u64,
    /// Variables evaluated by the engine.
    pub computed: u64,
    /// Aggregation operators run while computing them.
    pub aggregations: u64,
}

#[derive(Debug)]
pub struct ResultCache {
    dir: PathBuf,
    manifest: Mutex<Manifest>,
    stats: Mutex<CacheStats>,
}

/// Key of a variable: its canonical text, the data, the row index and the
/// split assignment that `impute` and `cut` are fitted under.
pub fn cache_key(expr: &Expr, store: &TrajectoryStore, index: &TimestepIndex) -> String {
    let split = store.split_config();
    let mut h = ContentHasher::new();
    h.str("tqlc-key-1")
        .str(&format_canonical(expr))
        .str(store.checksum())
        .str(&index.provenance)
        .u64(split.seed)
        .f64(split.fractions.train)
        .f64(split.fractions.val)
        .f64(split.fractions.test);
    h.finish_hex()
}

impl ResultCache {
    pub fn open(dir: impl Into<PathBuf>) -> std::io::Result<ResultCache> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir)?;
        let manifest = match std::fs::read_to_string(dir.join("manifest.json")) {
            Ok(text) => serde_json::from_str(&text).unwrap_or_else(|e| {
                log::warn!("cache manifest in {} is unreadable ({}); starting a new one", dir.display(), e);
                Manifest::default()
            }),
            Err(_) => Manifest::default(),
        };
        Ok(ResultCache { dir, manifest: Mutex::new(manifest), stats: Mutex::new(CacheStats::default()) })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn stats(&self) -> CacheStats {
        self.stats.lock().unwrap().clone()
    }

    pub fn manifest(&self) -> Manifest {
        self.manifest.lock().unwrap().clone()
    }

    fn path(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{}.tqlc", key))
    }

    /// Look up a result; a damaged file counts as a miss.
    pub fn get(&self, key: &str, index: &Arc<TimestepIndex>) -> Option<QueryValue> {
        let bytes = std::fs::read(self.path(key)).ok();
        let decoded = bytes.map(|b| decode(&b, index));
        let mut stats = self.stats.lock().unwrap();
        match decoded {
            Some(Ok(v)) => {
                stats.hits += 1;
                Some(v)
            }
            Some(Err(e)) => {
                log::warn!("cache entry {} is corrupt ({}); recomputing", key, e);
                stats.corrupt += 1;
                stats.misses += 1;
                None
            }
            None => {
                stats.misses += 1;
                None
            }
        }
    }

    /// Store a result. Only attribute and time-series results are cached.
    pub fn put(&self, key: &str, name: &str, query: &str, value: &QueryValue) -> std::io::Result<()> {
        let Some(bytes) = encode(value) else { return Ok(()) };
        write_atomic(&self.dir, &self.path(key), &bytes)?;
        let mut manifest = self.manifest.lock().unwrap();
        let entry = manifest.entries.entry(key.to_string()).or_insert_with(|| ManifestEntry {
            names: BTreeSet::new(),
            query: query.to_string(),
            kind: value.kind(),
            dtype: value.dtype(),
            rows: value.len(),
        });
        entry.names.insert(name.to_string());
        let text = serde_json::to_vec_pretty(&*manifest).expect("manifest serializes");
        write_atomic(&self.dir, &self.dir.join("manifest.json"), &text)
    }

    fn record_computation(&self, aggregations: usize) {
        let mut stats = self.stats.lock().unwrap();
        stats.computed += 1;
        stats.aggregations += aggregations as u64;
    }
}

fn write_atomic(dir: &Path, path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.flush()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

/// What a [`CachedSource`] did for one matrix build.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceReport {
    /// Variable names served from the cache.
    pub hits: Vec<String>,
    /// Variable names evaluated by the engine.
    pub computed: Vec<String>,
    pub aggregations: usize,
}

/// A [`VariableSource`] that consults a [`ResultCache`] first.
pub struct CachedSource<'a> {
    cache: &'a ResultCache,
    pub report: SourceReport,
}

impl<'a> CachedSource<'a> {
    pub fn new(cache: &'a ResultCache) -> Self {
        CachedSource { cache, report: SourceReport::default() }
    }
}

impl VariableSource for CachedSource<'_> {
    fn variable(
        &mut self,
        name: &str,
        expr: &Expr,
        store: &TrajectoryStore,
        index: &Arc<TimestepIndex>,
    ) -> Result<QueryValue, EvalError> {
        let key = cache_key(expr, store, index);
        if let Some(v) = self.cache.get(&key, index) {
            self.report.hits.push(name.to_string());
            return Ok(v);
        }
        let mut ev = Evaluator::new(store);
        let value = ev.evaluate(expr, Some(index), SplitScope::ALL)?;
        self.cache.record_computation(ev.aggregations);
        self.report.computed.push(name.to_string());
        self.report.aggregations += ev.aggregations;
        if let Err(e) = self.cache.put(&key, name, &format_canonical(expr), &value) {
            log::warn!("could not write cache entry for `{}`: {}", name, e);
        }
        Ok(value)
    }
}

fn dtype_code(d: DType) -> u8 {
    match d {
        DType::Number => 0,
        DType::Boolean => 1,
        DType::Category => 2,
    }
}

fn encode(value: &QueryValue) -> Option<Vec<u8>> {
    let (kind, traj, column) = match value {
        QueryValue::Attributes { traj, column } => (0u8, Some(traj), column),
        QueryValue::TimeSeries(ts) => (1u8, None, &ts.column),
        _ => return None,
    };
    let n = column.len();
    let mut out = Vec::with_capacity(16 + n * 9);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(kind);
    out.push(dtype_code(column.dtype));
    out.extend_from_slice(&(n as u64).to_le_bytes());
    if let Some(traj) = traj {
        for t in traj {
            out.extend_from_slice(&t.to_le_bytes());
        }
    }
    let mut bitmap = vec![0u8; n.div_ceil(8)];
    for (i, v) in column.values.iter().enumerate() {
        if v.is_some() {
            bitmap[i / 8] |= 1 << (i % 8);
        }
    }
    out.extend_from_slice(&bitmap);
    match column.dtype {
        DType::Number => {
            for v in &column.values {
                let x = v.as_ref().and_then(Scalar::as_f64).unwrap_or(0.0);
                out.extend_from_slice(&x.to_bits().to_le_bytes());
            }
        }
        DType::Boolean => {
            for v in &column.values {
                out.push(v.as_ref().and_then(Scalar::as_bool).unwrap_or(false) as u8);
            }
        }
        DType::Category => {
            let mut dict: Vec<&str> = column.values.iter().flatten().filter_map(Scalar::as_str).collect();
            dict.sort_unstable();
            dict.dedup();
            out.extend_from_slice(&(dict.len() as u32).to_le_bytes());
            for s in &dict {
                out.extend_from_slice(&(s.len() as u32).to_le_bytes());
                out.extend_from_slice(s.as_bytes());
            }
            for v in &column.values {
                let code = v.as_ref().and_then(Scalar::as_str).map(|s| dict.binary_search(&s).unwrap()).unwrap_or(0);
                out.extend_from_slice(&(code as u32).to_le_bytes());
            }
        }
    }
    let mut h = ContentHasher::new();
    h.bytes(&out);
    out.extend_from_slice(&h.finish());
    Some(out)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], String> {
        let end = self.at.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or("truncated file")?;
        let out = &self.bytes[self.at..end];
        self.at = end;
        Ok(out)
    }

    fn u8(&mut self) -> Result<u8, String> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32, String> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, String> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

fn decode(bytes: &[u8], index: &Arc<TimestepIndex>) -> Result<QueryValue, String> {
    if bytes.len() < 32 + 18 {
        return Err("truncated file".into());
    }
    let (body, digest) = bytes.split_at(bytes.len() - 32);
    let mut h = ContentHasher::new();
    h.bytes(body);
    if h.finish().as_slice() != digest {
        return Err("checksum mismatch".into());
    }
    let mut c = Cursor { bytes: body, at: 0 };
    if c.take(4)? != MAGIC || c.u32()? != VERSION {
        return Err("not a cache file".into());
    }
    let kind = c.u8()?;
    let dtype = match c.u8()? {
        0 => DType::Number,
        1 => DType::Boolean,
        2 => DType::Category,
        other => return Err(format!("unknown dtype {}", other)),
    };
    let n = c.u64()? as usize;
    if n > body.len() * 8 {
        return Err("row count exceeds file size".into());
    }
    let traj = match kind {
        0 => Some((0..n).map(|_| c.u32()).collect::<Result<Vec<_>, _>>()?),
        1 if n == index.len() => None,
        1 => return Err(format!("{} rows cached but the index has {}", n, index.len())),
        other => return Err(format!("unknown kind {}", other)),
    };
    let bitmap = c.take(n.div_ceil(8))?.to_vec();
    let present = |i: usize| bitmap[i / 8] >> (i % 8) & 1 == 1;
    let mut values = Vec::with_capacity(n);
    match dtype {
        DType::Number => {
            for i in 0..n {
                let x = f64::from_bits(c.u64()?);
                values.push(present(i).then_some(Scalar::Number(x)));
            }
        }
        DType::Boolean => {
            for i in 0..n {
                let b = c.u8()? != 0;
                values.push(present(i).then_some(Scalar::Boolean(b)));
            }
        }
        DType::Category => {
            let k = c.u32()? as usize;
            let mut dict = Vec::with_capacity(k.min(n));
            for _ in 0..k {
                let len = c.u32()? as usize;
                let s = std::str::from_utf8(c.take(len)?).map_err(|e| e.to_string())?;
                dict.push(s.to_string());
            }
            for i in 0..n {
                let code = c.u32()? as usize;
                if present(i) {
                    let s = dict.get(code).ok_or("category code out of range")?;
                    values.push(Some(Scalar::Text(s.clone())));
                } else {
                    values.push(None);
                }
            }
        }
    }
    if c.at != body.len() {
        return Err("trailing bytes".into());
    }
    let column = Column::new(dtype, values);
    Ok(match traj {
        Some(traj) => QueryValue::Attributes { traj, column },
        None => QueryValue::TimeSeries(TimeSeries { index: index.clone(), column }),
    })
}
