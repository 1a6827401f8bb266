//! Background training and mining jobs.
//!
//! A fixed pool of worker threads takes jobs from a FIFO queue.
//! Cancellation is cooperative: a queued job is dropped before it starts,
//! a running one stops at its next progress check.

use std::collections::{BTreeMap, VecDeque};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::thread::JoinHandle;

use serde::{Deserialize, Serialize};
use trajql_core::model::ModelSpec;

use crate::error::WorkbenchError;
use crate::workspace::{model_key, mine_key, read_json_dir, write_json, MineRequest, Result, Workspace};

pub const DEFAULT_WORKERS: usize = 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JobKind {
    Train,
    Mine,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JobState {
    Queued,
    Running,
    Done,
    Failed,
    Cancelled,
}

impl JobState {
    pub fn is_finished(self) -> bool {
        matches!(self, JobState::Done | JobState::Failed | JobState::Cancelled)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JobRecord {
    pub id: String,
    pub kind: JobKind,
    pub state: JobState,
    pub progress: f64,
    #[serde(default)]
    pub stage: String,
    /// Model id or subgroup run id once done.
    #[serde(default)]
    pub result: Option<String>,
    #[serde(default)]
    pub error: Option<String>,
    #[serde(default)]
    pub code: Option<String>,
    /// Content key; identical requests share a job while it is active.
    pub key: String,
}

#[derive(Clone, Debug)]
pub enum JobTask {
    Train { dataset: String, spec: ModelSpec, spec_ref: Option<(String, u64)> },
    Mine(MineRequest),
}

struct Entry {
    record: JobRecord,
    task: Option<JobTask>,
    cancel: Arc<AtomicBool>,
}

struct Shared {
    workspace: Arc<Workspace>,
    jobs: Mutex<BTreeMap<String, Entry>>,
    queue: Mutex<VecDeque<String>>,
    ready: Condvar,
    stop: AtomicBool,
    next: AtomicU64,
    // Notified whenever a job finishes.
    finished: Condvar,
}

pub struct JobManager {
    shared: Arc<Shared>,
    workers: Mutex<Vec<JoinHandle<()>>>,
}

fn job_number(id: &str) -> u64 {
    id.strip_prefix("job-").and_then(|n| n.parse().ok()).unwrap_or(0)
}

impl Shared {
    fn path(&self, id: &str) -> std::path::PathBuf {
        self.workspace.root().join("jobs").join(format!("{}.json", id))
    }

    fn persist(&self, record: &JobRecord) {
        if let Err(e) = write_json(&self.path(&record.id), record) {
            log::warn!("could not save job {}: {}", record.id, e);
        }
    }

    fn update(&self, id: &str, f: impl FnOnce(&mut JobRecord)) -> Option<JobRecord> {
        let mut jobs = self.jobs.lock().unwrap();
        let entry = jobs.get_mut(id)?;
        f(&mut entry.record);
        let record = entry.record.clone();
        drop(jobs);
        self.persist(&record);
        Some(record)
    }

    fn work(self: &Arc<Self>) {
        loop {
            let id = {
                let mut queue = self.queue.lock().unwrap();
                loop {
                    if self.stop.load(Ordering::SeqCst) {
                        return;
                    }
                    if let Some(id) = queue.pop_front() {
                        break id;
                    }
                    queue = self.ready.wait(queue).unwrap();
                }
            };
            let (task, cancel) = {
                let mut jobs = self.jobs.lock().unwrap();
                let Some(entry) = jobs.get_mut(&id) else { continue };
                if entry.record.state != JobState::Queued {
                    continue;
                }
                entry.record.state = JobState::Running;
                (entry.task.take(), entry.cancel.clone())
            };
            let Some(task) = task else { continue };
            if let Some(r) = self.update(&id, |_| {}) {
                log::info!("job {} started ({:?})", r.id, r.kind);
            }
            let progress = |p: f64, stage: &str| {
                if cancel.load(Ordering::SeqCst) {
                    return false;
                }
                let mut jobs = self.jobs.lock().unwrap();
                if let Some(e) = jobs.get_mut(&id) {
                    e.record.progress = p;
                    e.record.stage = stage.to_string();
                }
                true
            };
            let outcome = match &task {
                JobTask::Train { dataset, spec, spec_ref } => self
                    .workspace
                    .train(dataset, spec, spec_ref.as_ref().map(|(s, v)| (s.as_str(), *v)), &progress)
                    .map(|m| m.id.clone()),
                JobTask::Mine(req) => self.workspace.mine(req, &progress).map(|r| r.id.clone()),
            };
            let record = self.update(&id, |r| match outcome {
                Ok(result) => {
                    r.state = JobState::Done;
                    r.progress = 1.0;
                    r.stage = "done".into();
                    r.result = Some(result);
                }
                Err(WorkbenchError::Cancelled) => {
                    r.state = JobState::Cancelled;
                    r.stage = "cancelled".into();
                }
                Err(e) => {
                    r.state = JobState::Failed;
                    r.stage = "failed".into();
                    r.code = Some(e.code().into());
                    r.error = Some(e.to_string());
                }
            });
            if let Some(r) = record {
                log::info!("job {} finished: {:?}", r.id, r.state);
            }
            self.finished.notify_all();
        }
    }
}

impl JobManager {
    /// Start `workers` threads. Jobs left queued or running by an earlier
    /// process are marked failed.
    pub fn start(workspace: Arc<Workspace>, workers: usize) -> JobManager {
        let shared = Arc::new(Shared {
            workspace,
            jobs: Mutex::new(BTreeMap::new()),
            queue: Mutex::new(VecDeque::new()),
            ready: Condvar::new(),
            stop: AtomicBool::new(false),
            next: AtomicU64::new(1),
            finished: Condvar::new(),
        });
        let dir = shared.workspace.root().join("jobs");
        for mut record in read_json_dir::<JobRecord>(&dir) {
            shared.next.fetch_max(job_number(&record.id) + 1, Ordering::SeqCst);
            if !record.state.is_finished() {
                record.state = JobState::Failed;
                record.code = Some("interrupted".into());
                record.error = Some("the service stopped before the job finished".into());
                shared.persist(&record);
            }
            let entry = Entry { record: record.clone(), task: None, cancel: Arc::new(AtomicBool::new(false)) };
            shared.jobs.lock().unwrap().insert(record.id, entry);
        }
        let handles = (0..workers.max(1))
            .map(|i| {
                let s = shared.clone();
                std::thread::Builder::new().name(format!("job-worker-{}", i)).spawn(move || s.work()).expect("spawn worker")
            })
            .collect();
        JobManager { shared, workers: Mutex::new(handles) }
    }

    pub fn workspace(&self) -> &Arc<Workspace> {
        &self.shared.workspace
    }

    fn submit(&self, kind: JobKind, key: String, task: JobTask) -> JobRecord {
        let mut jobs = self.shared.jobs.lock().unwrap();
        if let Some(active) = jobs.values().find(|e| e.record.key == key && !e.record.state.is_finished()) {
            return active.record.clone();
        }
        let id = format!("job-{}", self.shared.next.fetch_add(1, Ordering::SeqCst));
        let record = JobRecord {
            id: id.clone(),
            kind,
            state: JobState::Queued,
            progress: 0.0,
            stage: "queued".into(),
            result: None,
            error: None,
            code: None,
            key,
        };
        jobs.insert(id.clone(), Entry { record: record.clone(), task: Some(task), cancel: Arc::new(AtomicBool::new(false)) });
        drop(jobs);
        self.shared.persist(&record);
        self.shared.queue.lock().unwrap().push_back(id);
        self.shared.ready.notify_one();
        record
    }

    pub fn submit_train(&self, dataset: &str, spec: ModelSpec, spec_ref: Option<(String, u64)>) -> Result<JobRecord> {
        let ds = self.shared.workspace.dataset(dataset)?;
        let key = model_key(&ds.store, &spec)?;
        Ok(self.submit(JobKind::Train, key, JobTask::Train { dataset: dataset.into(), spec, spec_ref }))
    }

    pub fn submit_train_spec(&self, spec_id: &str) -> Result<JobRecord> {
        let r = self.shared.workspace.spec(spec_id)?;
        self.submit_train(&r.dataset, r.spec, Some((r.id, r.version)))
    }

    pub fn submit_mine(&self, request: MineRequest) -> Result<JobRecord> {
        self.shared.workspace.model(&request.model)?;
        Ok(self.submit(JobKind::Mine, mine_key(&request), JobTask::Mine(request)))
    }

    pub fn get(&self, id: &str) -> Result<JobRecord> {
        let jobs = self.shared.jobs.lock().unwrap();
        jobs.get(id).map(|e| e.record.clone()).ok_or_else(|| WorkbenchError::not_found("job", id))
    }

    pub fn list(&self) -> Vec<JobRecord> {
        let jobs = self.shared.jobs.lock().unwrap();
        let mut all: Vec<JobRecord> = jobs.values().map(|e| e.record.clone()).collect();
        all.sort_by_key(|r| job_number(&r.id));
        all
    }

    /// Cancel a job. Finished jobs are returned unchanged.
    pub fn cancel(&self, id: &str) -> Result<JobRecord> {
        let mut jobs = self.shared.jobs.lock().unwrap();
        let entry = jobs.get_mut(id).ok_or_else(|| WorkbenchError::not_found("job", id))?;
        entry.cancel.store(true, Ordering::SeqCst);
        if entry.record.state == JobState::Queued {
            entry.record.state = JobState::Cancelled;
            entry.record.stage = "cancelled".into();
            entry.task = None;
            let record = entry.record.clone();
            drop(jobs);
            self.shared.persist(&record);
            self.shared.finished.notify_all();
            return Ok(record);
        }
        Ok(entry.record.clone())
    }

    /// Block until the job finishes.
    pub fn wait(&self, id: &str) -> Result<JobRecord> {
        let mut jobs = self.shared.jobs.lock().unwrap();
        loop {
            let entry = jobs.get(id).ok_or_else(|| WorkbenchError::not_found("job", id))?;
            if entry.record.state.is_finished() {
                return Ok(entry.record.clone());
            }
            jobs = self.shared.finished.wait(jobs).unwrap();
        }
    }

    /// Stop the workers after their current jobs.
    pub fn shutdown(&self) {
        self.shared.stop.store(true, Ordering::SeqCst);
        {
            let _queue = self.shared.queue.lock().unwrap();
            self.shared.ready.notify_all();
        }
        for h in self.workers.lock().unwrap().drain(..) {
            let _ = h.join();
        }
    }
}

impl Drop for JobManager {
    fn drop(&mut self) {
        self.shutdown();
    }
}
