//! Asynchronous job submission on top of the chunked compressor.
//!
//! A [`Pipeline`] owns a pool of worker threads that drain a FIFO job queue.
//! `submit` returns immediately with a shareable [`JobTicket`]; `poll` reads
//! its status and `await_result` blocks until completion. Job resources
//! (input copy, then result bytes) are accounted in a live-byte gauge so
//! tests can verify that every completed job returns the pipeline to its
//! resource baseline.

use std::collections::VecDeque;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::thread::JoinHandle;

use super::{compress_chunked, ChunkError, PipelineConfig};

/// Lifecycle of a submitted job; transitions only move forward.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum JobStatus {
    Queued,
    Running,
    Done,
    Failed,
}

struct JobEntry {
    id: u64,
    status: Mutex<JobStatus>,
    cv: Condvar,
    result: Mutex<Option<Result<Vec<u8>, ChunkError>>>,
}

impl JobEntry {
    fn advance(&self, to: JobStatus) {
        let mut st = self.status.lock().unwrap();
        debug_assert!(*st < to, "status may only move forward");
        *st = to;
        self.cv.notify_all();
    }
}

/// Shareable handle to one submitted job.
#[derive(Clone)]
pub struct JobTicket {
    entry: Arc<JobEntry>,
}

impl JobTicket {
    pub fn id(&self) -> u64 {
        self.entry.id
    }
}

impl std::fmt::Debug for JobTicket {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("JobTicket").field("id", &self.entry.id).finish()
    }
}

struct Job {
    entry: Arc<JobEntry>,
    input: Vec<u8>,
    config: PipelineConfig,
}

struct Shared {
    queue: Mutex<(VecDeque<Job>, bool)>, // (jobs, shutdown)
    cv: Condvar,
    live_bytes: AtomicUsize,
}

/// Worker pool executing compression jobs asynchronously.
pub struct Pipeline {
    shared: Arc<Shared>,
    workers: Vec<JoinHandle<()>>,
    next_id: AtomicUsize,
}

impl Pipeline {
    /// Starts a pipeline with `workers` job-executor threads (at least one).
    pub fn start(workers: usize) -> Self {
        let shared = Arc::new(Shared {
            queue: Mutex::new((VecDeque::new(), false)),
            cv: Condvar::new(),
            live_bytes: AtomicUsize::new(0),
        });
        let workers = (0..workers.max(1))
            .map(|_| {
                let shared = Arc::clone(&shared);
                std::thread::spawn(move || worker_loop(&shared))
            })
            .collect();
        Pipeline {
            shared,
            workers,
            next_id: AtomicUsize::new(0),
        }
    }

    /// Enqueues a compression job and returns immediately.
    pub fn submit(&self, input: Vec<u8>, config: PipelineConfig) -> Result<JobTicket, ChunkError> {
        config.validate()?;
        let entry = Arc::new(JobEntry {
            id: self.next_id.fetch_add(1, Ordering::Relaxed) as u64,
            status: Mutex::new(JobStatus::Queued),
            cv: Condvar::new(),
            result: Mutex::new(None),
        });
        let mut q = self.shared.queue.lock().unwrap();
        if q.1 {
            return Err(ChunkError::PipelineShutdown);
        }
        self.shared.live_bytes.fetch_add(input.len(), Ordering::Relaxed);
        q.0.push_back(Job {
            entry: Arc::clone(&entry),
            input,
            config,
        });
        drop(q);
        self.shared.cv.notify_one();
        Ok(JobTicket { entry })
    }

    pub fn poll(&self, ticket: &JobTicket) -> JobStatus {
        *ticket.entry.status.lock().unwrap()
    }

    /// Blocks until the job finishes, then hands over the container bytes.
    /// A failed job surfaces as [`ChunkError::JobFailed`] carrying the chunk
    /// error.
    pub fn await_result(&self, ticket: &JobTicket) -> Result<Vec<u8>, ChunkError> {
        let mut st = ticket.entry.status.lock().unwrap();
        while *st < JobStatus::Done {
            st = ticket.entry.cv.wait(st).unwrap();
        }
        drop(st);
        match ticket.entry.result.lock().unwrap().take() {
            Some(Ok(bytes)) => {
                self.shared.live_bytes.fetch_sub(bytes.len(), Ordering::Relaxed);
                Ok(bytes)
            }
            Some(Err(e)) => Err(ChunkError::JobFailed(Box::new(e))),
            None => Err(ChunkError::ResultTaken),
        }
    }

    /// Bytes currently held by submitted-or-completed jobs (inputs in the
    /// queue plus results not yet taken). Returns to zero once every job is
    /// awaited.
    pub fn resource_bytes(&self) -> usize {
        self.shared.live_bytes.load(Ordering::Relaxed)
    }

    /// Drains queued jobs, then stops the workers. Further submissions fail.
    pub fn shutdown(&mut self) {
        {
            let mut q = self.shared.queue.lock().unwrap();
            q.1 = true;
        }
        self.shared.cv.notify_all();
        for handle in self.workers.drain(..) {
            let _ = handle.join();
        }
    }
}

impl Drop for Pipeline {
    fn drop(&mut self) {
        self.shutdown();
    }
}

fn worker_loop(shared: &Shared) {
    loop {
        let job = {
            let mut q = shared.queue.lock().unwrap();
            loop {
                if let Some(job) = q.0.pop_front() {
                    break job;
                }
                if q.1 {
                    return;
                }
                q = shared.cv.wait(q).unwrap();
            }
        };
        job.entry.advance(JobStatus::Running);
        let result = compress_chunked(&job.input, &job.config);
        // input buffer is recycled before the job is observable as done
        shared.live_bytes.fetch_sub(job.input.len(), Ordering::Relaxed);
        drop(job.input);
        if let Ok(bytes) = &result {
            shared.live_bytes.fetch_add(bytes.len(), Ordering::Relaxed);
        }
        let failed = result.is_err();
        *job.entry.result.lock().unwrap() = Some(result);
        job.entry
            .advance(if failed { JobStatus::Failed } else { JobStatus::Done });
    }
}
