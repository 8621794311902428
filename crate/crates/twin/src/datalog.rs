//! Recording of bus traffic to per-topic JSONL files, range queries over a
//! recording and replay onto the bus.
//!
//! A recording is a run directory `runs/<run-id>/` holding one file per
//! topic, named after the topic with dots replaced by underscores. Each line
//! is a full [`Message`].

use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

use incubator_bus::{BusClient, Message};
use incubator_core::{PlantInput, Sample, ThermalState, Trajectory};
use serde_json::{json, Value};
use tokio::sync::watch;
use tokio::task::JoinHandle;
use tracing::{info, warn};

use crate::messages::{topics, DriverState};

#[derive(Debug, thiserror::Error)]
pub enum DatalogError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("no recording found under {0}")]
    Unavailable(PathBuf),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// File name used for `topic` inside a run directory.
pub fn topic_file_name(topic: &str) -> String {
    format!("{}.jsonl", topic.replace('.', "_"))
}

/// UTC timestamp used as a run directory name.
pub fn new_run_id() -> String {
    chrono::Utc::now().format("%Y%m%dT%H%M%S%.3fZ").to_string()
}

/// Creates a fresh run directory under `runs_dir`; never reuses one.
pub fn create_run_dir(runs_dir: &Path) -> std::io::Result<PathBuf> {
    fs::create_dir_all(runs_dir)?;
    let id = new_run_id();
    let mut n = 0;
    loop {
        let name = if n == 0 { id.clone() } else { format!("{id}-{n}") };
        let dir = runs_dir.join(name);
        match fs::create_dir(&dir) {
            Ok(()) => return Ok(dir),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => n += 1,
            Err(e) => return Err(e),
        }
    }
}

/// Messages in a JSONL file and the number of lines that failed to parse.
pub fn read_messages(path: &Path) -> std::io::Result<(Vec<Message>, usize)> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    let mut corrupt = 0;
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<Message>(&line) {
            Ok(m) => out.push(m),
            Err(_) => corrupt += 1,
        }
    }
    Ok((out, corrupt))
}

/// Read access to recordings.
///
/// The path is either a run directory or a directory of runs, in which case
/// the most recent run (by name) is used at each query.
#[derive(Debug, Clone)]
pub struct Datalog {
    path: PathBuf,
}

impl Datalog {
    pub fn open(path: impl Into<PathBuf>) -> Self {
        Datalog { path: path.into() }
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Run directory queries currently read from.
    pub fn run_dir(&self) -> Result<PathBuf, DatalogError> {
        let unavailable = || DatalogError::Unavailable(self.path.clone());
        let entries = fs::read_dir(&self.path).map_err(|_| unavailable())?;
        let mut runs = Vec::new();
        for entry in entries.flatten() {
            let p = entry.path();
            if p.extension().is_some_and(|e| e == "jsonl") {
                return Ok(self.path.clone());
            }
            if p.is_dir() {
                runs.push(p);
            }
        }
        if runs.is_empty() {
            // an empty directory is a run that has not recorded anything yet
            return Ok(self.path.clone());
        }
        runs.sort();
        runs.pop().ok_or_else(unavailable)
    }

    /// Messages on `topic` with `from_ts <= ts <= to_ts`, in timestamp order.
    /// An unknown topic yields an empty result.
    pub fn query(&self, topic: &str, from_ts: f64, to_ts: f64) -> Result<Vec<Message>, DatalogError> {
        if from_ts.is_nan() || to_ts.is_nan() || from_ts > to_ts {
            return Err(DatalogError::InvalidArgument(format!("range [{from_ts}, {to_ts}] is reversed")));
        }
        let file = self.run_dir()?.join(topic_file_name(topic));
        if !file.exists() {
            return Ok(Vec::new());
        }
        let (messages, _) = read_messages(&file)?;
        let mut hits: Vec<Message> = messages.into_iter().filter(|m| m.ts >= from_ts && m.ts <= to_ts).collect();
        hits.sort_by(|a, b| a.ts.total_cmp(&b.ts));
        Ok(hits)
    }
}

/// Builds a calibration trajectory from recorded driver states. Time is
/// taken from the body so replayed recordings give the same data. Samples
/// whose time does not advance are dropped.
pub fn driver_trajectory(messages: &[Message]) -> Trajectory {
    let mut traj = Trajectory::new(false);
    for m in messages {
        let Ok(s) = m.parse::<DriverState>() else { continue };
        let sample = Sample {
            t: s.time,
            state: ThermalState::uniform(s.average_temperature),
            input: PlantInput::new(s.power_w, s.heater_on, s.t_room),
        };
        let _ = traj.push(sample);
    }
    traj
}

/// Running recorder.
pub struct RecorderHandle {
    run_dir: PathBuf,
    stop: watch::Sender<bool>,
    task: JoinHandle<usize>,
}

impl RecorderHandle {
    pub fn run_dir(&self) -> &Path {
        &self.run_dir
    }

    /// Writes everything routed to the recorder so far, then stops.
    /// Returns the number of messages written.
    pub async fn stop(self) -> usize {
        let _ = self.stop.send(true);
        self.task.await.unwrap_or(0)
    }
}

struct Writers {
    dir: PathBuf,
    files: HashMap<String, BufWriter<File>>,
}

impl Writers {
    fn write(&mut self, msg: &Message) -> std::io::Result<()> {
        let file = match self.files.get_mut(&msg.topic) {
            Some(f) => f,
            None => {
                let f = OpenOptions::new().create(true).append(true).open(self.dir.join(topic_file_name(&msg.topic)))?;
                self.files.entry(msg.topic.clone()).or_insert(BufWriter::new(f))
            }
        };
        serde_json::to_writer(&mut *file, msg)?;
        file.write_all(b"\n")?;
        file.flush()
    }
}

/// Records every `incubator.#` message into a new run directory under
/// `runs_dir`. Each line is flushed as soon as it is written.
pub async fn record(bus: BusClient, runs_dir: &Path) -> anyhow::Result<RecorderHandle> {
    let run_dir = create_run_dir(runs_dir)?;
    let mut sub = bus.subscribe(topics::ALL).await?;
    let (stop, mut stopped) = watch::channel(false);
    let mut writers = Writers { dir: run_dir.clone(), files: HashMap::new() };
    info!(dir = %run_dir.display(), "recording");
    let task = tokio::spawn(async move {
        let mut written = 0;
        let mut failed = false;
        let mut handle = |msg: Message, written: &mut usize, failed: &mut bool| {
            if *failed {
                return;
            }
            match writers.write(&msg) {
                Ok(()) => *written += 1,
                Err(e) => {
                    *failed = true;
                    warn!(error = %e, "recording stopped");
                    let alert = json!({"alert": format!("datalog stopped recording: {e}"), "source": "datalog"});
                    if let Value::Object(body) = alert {
                        let _ = bus.publish(topics::ORCHESTRATOR_STATE, body);
                    }
                }
            }
        };
        loop {
            tokio::select! {
                _ = stopped.changed() => break,
                m = sub.recv() => match m {
                    Some(m) => handle(m, &mut written, &mut failed),
                    None => return written,
                },
            }
        }
        // drain whatever the broker routed before the stop request
        let _ = tokio::time::timeout(Duration::from_secs(5), bus.sync()).await;
        while let Some(m) = sub.try_recv() {
            handle(m, &mut written, &mut failed);
        }
        written
    });
    Ok(RecorderHandle { run_dir, stop, task })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize)]
pub struct ReplaySummary {
    pub sent: usize,
    pub skipped: usize,
}

/// Loads a recording: a single JSONL file or every file of a run directory,
/// merged in timestamp order (stable within a topic).
pub fn load_recording(path: &Path) -> std::io::Result<(Vec<Message>, usize)> {
    let mut files = Vec::new();
    if path.is_dir() {
        for entry in fs::read_dir(path)? {
            let p = entry?.path();
            if p.extension().is_some_and(|e| e == "jsonl") {
                files.push(p);
            }
        }
        files.sort();
    } else {
        files.push(path.to_path_buf());
    }
    let mut all = Vec::new();
    let mut corrupt = 0;
    for f in files {
        let (m, c) = read_messages(&f)?;
        all.extend(m);
        corrupt += c;
    }
    all.sort_by(|a, b| a.ts.total_cmp(&b.ts));
    Ok((all, corrupt))
}

/// Republishes a recording. Gaps between messages are divided by `speed`;
/// `None` sends back to back. The original timestamp is kept in the body as
/// `orig_ts` and the envelope carries the send time.
pub async fn replay(path: &Path, bus: &BusClient, speed: Option<f64>) -> anyhow::Result<ReplaySummary> {
    if let Some(s) = speed {
        anyhow::ensure!(s.is_finite() && s > 0.0, "speed must be positive");
    }
    let (messages, skipped) = load_recording(path)?;
    if skipped > 0 {
        warn!(skipped, "skipped corrupt lines");
    }
    let start = tokio::time::Instant::now();
    let first_ts = messages.first().map(|m| m.ts).unwrap_or(0.0);
    let mut sent = 0;
    for m in messages {
        if let Some(speed) = speed {
            let offset = ((m.ts - first_ts) / speed).max(0.0);
            tokio::time::sleep_until(start + Duration::from_secs_f64(offset)).await;
        }
        let mut body = m.body;
        body.insert("orig_ts".into(), json!(m.ts));
        bus.publish(&m.topic, body)?;
        sent += 1;
    }
    bus.sync().await?;
    Ok(ReplaySummary { sent, skipped })
}
