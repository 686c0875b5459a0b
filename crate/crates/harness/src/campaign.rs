//! Campaigns: every task × trial, run on a worker pool, persisted as one
//! JSON file per run plus an index.

use std::collections::VecDeque;
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::sync::mpsc;
use std::sync::{Condvar, Mutex};
use std::thread;

use serde::{Deserialize, Serialize};
use structbench_core::task::TaskSpec;
use structbench_http::suite::TestCollection;

use crate::pipeline::{run_once, EvalOptions};
use crate::provider::PatchProvider;
use crate::record::{RunRecord, RunStatus};
use crate::HarnessError;

pub const INDEX_FILE: &str = "index.json";
pub const RUNS_DIR: &str = "runs";

/// Ports handed out round-robin, so consecutive runs land on different
/// ports and a lingering socket from one run never collides with the next.
pub struct PortPool {
    free: Mutex<VecDeque<u16>>,
    available: Condvar,
}

impl PortPool {
    pub fn new(ports: impl IntoIterator<Item = u16>) -> Self {
        PortPool {
            free: Mutex::new(ports.into_iter().collect()),
            available: Condvar::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.free.lock().unwrap_or_else(|e| e.into_inner()).len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Blocks until a port is free. Ports that something else is already
    /// listening on are rotated to the back and skipped for this call.
    pub fn acquire(&self) -> u16 {
        let mut free = self.free.lock().unwrap_or_else(|e| e.into_inner());
        loop {
            for _ in 0..free.len() {
                let port = free.pop_front().expect("non-empty");
                if port_is_free(port) {
                    return port;
                }
                free.push_back(port);
            }
            free = self
                .available
                .wait_timeout(free, std::time::Duration::from_millis(200))
                .unwrap_or_else(|e| e.into_inner())
                .0;
        }
    }

    pub fn release(&self, port: u16) {
        self.free
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .push_back(port);
        self.available.notify_one();
    }
}

fn port_is_free(port: u16) -> bool {
    TcpListener::bind(("127.0.0.1", port)).is_ok()
}

#[derive(Debug, Clone)]
pub struct CampaignOptions {
    pub trials: u32,
    pub workers: usize,
    pub ports: Vec<u16>,
    pub eval: EvalOptions,
    /// Where records and the index are written; nothing is written if unset.
    pub out_dir: Option<PathBuf>,
}

impl Default for CampaignOptions {
    fn default() -> Self {
        CampaignOptions {
            trials: 3,
            workers: 1,
            ports: (18_000..18_100).collect(),
            eval: EvalOptions::default(),
            out_dir: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub run_id: String,
    pub task_id: String,
    pub trial: u32,
    pub status: RunStatus,
    /// Relative to the results directory.
    pub file: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CampaignIndex {
    pub version: u32,
    pub provider: String,
    pub agent: String,
    pub model: String,
    pub trials: u32,
    pub tasks: Vec<String>,
    pub runs: Vec<IndexEntry>,
}

/// Runs `trials` trials of every task. Records come back ordered by task
/// (in input order) and then trial, whatever order the workers finish in.
pub fn run_campaign(
    tasks: &[TaskSpec],
    provider: &PatchProvider,
    collection: &TestCollection,
    options: &CampaignOptions,
) -> Result<Vec<RunRecord>, HarnessError> {
    if options.trials == 0 {
        return Err(HarnessError::Config("trials must be at least 1".into()));
    }
    if options.ports.is_empty() {
        return Err(HarnessError::Config("port pool is empty".into()));
    }
    let jobs: Vec<(usize, u32)> = (0..tasks.len())
        .flat_map(|t| (0..options.trials).map(move |trial| (t, trial)))
        .collect();
    let pool = PortPool::new(options.ports.iter().copied());
    let workers = options
        .workers
        .clamp(1, options.ports.len())
        .min(jobs.len().max(1));
    let queue = Mutex::new(jobs.iter().copied().enumerate().collect::<VecDeque<_>>());
    let mut slots: Vec<Option<RunRecord>> = vec![None; jobs.len()];

    if let Some(dir) = &options.out_dir {
        let runs = dir.join(RUNS_DIR);
        std::fs::create_dir_all(&runs).map_err(|e| HarnessError::io(&runs, e))?;
    }

    thread::scope(|scope| -> Result<(), HarnessError> {
        let (tx, rx) = mpsc::channel::<(usize, RunRecord)>();
        for _ in 0..workers {
            let tx = tx.clone();
            let (queue, pool) = (&queue, &pool);
            scope.spawn(move || loop {
                let next = queue.lock().unwrap_or_else(|e| e.into_inner()).pop_front();
                let Some((slot, (task_idx, trial))) = next else {
                    break;
                };
                let port = pool.acquire();
                let record = run_once(
                    &tasks[task_idx],
                    provider,
                    trial,
                    collection,
                    port,
                    &options.eval,
                );
                pool.release(port);
                if tx.send((slot, record)).is_err() {
                    break;
                }
            });
        }
        drop(tx);
        // The coordinator owns the results sink.
        for (slot, record) in rx {
            if let Some(dir) = &options.out_dir {
                write_record(dir, &record)?;
            }
            slots[slot] = Some(record);
        }
        Ok(())
    })?;

    let records: Vec<RunRecord> = slots
        .into_iter()
        .map(|r| r.expect("every job reports"))
        .collect();
    if let Some(dir) = &options.out_dir {
        write_index(dir, tasks, provider, options, &records)?;
    }
    Ok(records)
}

fn record_file(run_id: &str) -> String {
    format!("{RUNS_DIR}/{run_id}.json")
}

fn write_record(dir: &Path, record: &RunRecord) -> Result<(), HarnessError> {
    let path = dir.join(record_file(&record.run_id));
    let text = serde_json::to_string_pretty(record)? + "\n";
    std::fs::write(&path, text).map_err(|e| HarnessError::io(&path, e))
}

fn write_index(
    dir: &Path,
    tasks: &[TaskSpec],
    provider: &PatchProvider,
    options: &CampaignOptions,
    records: &[RunRecord],
) -> Result<(), HarnessError> {
    let index = CampaignIndex {
        version: 1,
        provider: provider.to_string(),
        agent: options.eval.agent.clone(),
        model: options.eval.model.clone(),
        trials: options.trials,
        tasks: tasks.iter().map(|t| t.id.clone()).collect(),
        runs: records
            .iter()
            .map(|r| IndexEntry {
                run_id: r.run_id.clone(),
                task_id: r.task_id.clone(),
                trial: r.trial,
                status: r.status,
                file: record_file(&r.run_id),
            })
            .collect(),
    };
    let path = dir.join(INDEX_FILE);
    let text = serde_json::to_string_pretty(&index)? + "\n";
    std::fs::write(&path, text).map_err(|e| HarnessError::io(&path, e))
}

/// Loads every record listed in `<dir>/index.json`, in index order.
pub fn load_results(dir: &Path) -> Result<(CampaignIndex, Vec<RunRecord>), HarnessError> {
    let path = dir.join(INDEX_FILE);
    if !path.is_file() {
        return Err(HarnessError::Results(format!(
            "{} has no {INDEX_FILE}",
            dir.display()
        )));
    }
    let text = std::fs::read_to_string(&path).map_err(|e| HarnessError::io(&path, e))?;
    let index: CampaignIndex = serde_json::from_str(&text)?;
    let mut records = Vec::with_capacity(index.runs.len());
    for entry in &index.runs {
        let p = dir.join(&entry.file);
        let text = std::fs::read_to_string(&p).map_err(|e| HarnessError::io(&p, e))?;
        records.push(serde_json::from_str(&text)?);
    }
    Ok((index, records))
}

/// Writes an index and record files for records produced elsewhere (for
/// example merged from several campaigns).
pub fn save_results(
    dir: &Path,
    index: &CampaignIndex,
    records: &[RunRecord],
) -> Result<(), HarnessError> {
    let runs = dir.join(RUNS_DIR);
    std::fs::create_dir_all(&runs).map_err(|e| HarnessError::io(&runs, e))?;
    for r in records {
        write_record(dir, r)?;
    }
    let path = dir.join(INDEX_FILE);
    let text = serde_json::to_string_pretty(index)? + "\n";
    std::fs::write(&path, text).map_err(|e| HarnessError::io(&path, e))
}
