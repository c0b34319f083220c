//! Append-only JSON-lines event log with periodic snapshots.
//!
//! Every accepted event is validated against the in-memory study, written
//! and synced to disk, and only then applied. A crash between write and
//! apply therefore loses nothing: replay applies the event again.

use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use crowdfit_core::{
    Action, Error as CoreError, Event, ModelArtifact, Study, StudyConfig, Timestamp,
};
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum JournalError {
    #[error("CorruptLog: {reason} (line {line})")]
    CorruptLog { line: usize, reason: String },
    #[error("validation failed: {0}")]
    Validation(#[from] CoreError),
    #[error("storage failure: {0}")]
    Storage(#[from] std::io::Error),
    #[error("log is empty; a study config is needed to start it")]
    Uninitialized,
}

impl JournalError {
    fn corrupt(line: usize, reason: impl Into<String>) -> Self {
        JournalError::CorruptLog {
            line,
            reason: reason.into(),
        }
    }
}

/// Parses a log into events, checking only that every line is a
/// well-formed record.
pub fn read_events(path: &Path) -> Result<Vec<Event>, JournalError> {
    let reader = BufReader::new(File::open(path)?);
    let mut events = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let event: Event = serde_json::from_str(&line)
            .map_err(|e| JournalError::corrupt(i + 1, format!("malformed record: {e}")))?;
        events.push(event);
    }
    Ok(events)
}

/// Folds a list of events into a study. Any event that does not apply
/// (sequence gap, invalid payload, artifact digest mismatch) makes the log
/// corrupt. `None` means the log was empty.
pub fn replay_events(events: &[Event]) -> Result<Option<Study>, JournalError> {
    let Some(first) = events.first() else {
        return Ok(None);
    };
    let mut study = Study::create(first).map_err(|e| JournalError::corrupt(1, e.to_string()))?;
    for (i, event) in events.iter().enumerate().skip(1) {
        study
            .apply(event)
            .map_err(|e| JournalError::corrupt(i + 1, e.to_string()))?;
    }
    Ok(Some(study))
}

/// Rebuilds the study recorded in the log at `path`.
pub fn replay_log(path: &Path) -> Result<Option<Study>, JournalError> {
    replay_events(&read_events(path)?)
}

/// Writes `events` as a JSON-lines log.
pub fn write_log(path: &Path, events: &[Event]) -> std::io::Result<()> {
    let mut out = std::io::BufWriter::new(File::create(path)?);
    for e in events {
        serde_json::to_writer(&mut out, e)?;
        out.write_all(b"\n")?;
    }
    out.into_inner().map_err(|e| e.into_error())?.sync_all()
}

#[derive(Serialize, Deserialize)]
struct Snapshot {
    seq: u64,
    study: Study,
}

/// Where the snapshot of the log at `log` lives.
pub fn snapshot_path(log: &Path) -> PathBuf {
    let mut name = log.file_name().unwrap_or_default().to_os_string();
    name.push(".snapshot.json");
    log.with_file_name(name)
}

/// The single writer of one study's log.
pub struct Journal {
    path: PathBuf,
    file: File,
    study: Study,
    snapshot_every: u64,
    since_snapshot: u64,
}

impl Journal {
    /// Opens the log at `path`, creating it from `config` when it is missing
    /// or empty. A final line cut short by a crash (no trailing newline, not
    /// parseable) was never acknowledged and is dropped.
    pub fn open(
        path: &Path,
        config: Option<&StudyConfig>,
        now: Timestamp,
        snapshot_every: u64,
    ) -> Result<Journal, JournalError> {
        let mut file = OpenOptions::new()
            .read(true)
            .append(true)
            .create(true)
            .open(path)?;
        drop_torn_tail(&mut file, path)?;
        let study = match load_study(path)? {
            Some(study) => study,
            None => {
                let config = config.ok_or(JournalError::Uninitialized)?;
                let first = Event {
                    seq: 1,
                    at: now,
                    action: Action::ConfigChanged(config.clone()),
                };
                let study = Study::create(&first)?;
                write_event(&mut file, &first)?;
                study
            }
        };
        Ok(Journal {
            path: path.to_path_buf(),
            file,
            study,
            snapshot_every,
            since_snapshot: 0,
        })
    }

    pub fn study(&self) -> &Study {
        &self.study
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    fn next_event(&self, action: Action, now: Timestamp) -> Event {
        Event {
            seq: self.study.last_seq() + 1,
            at: self.next_at(now),
            action,
        }
    }

    /// Validates, durably writes, then applies `action`. Returns the event
    /// as recorded. Nothing is written when validation fails.
    pub fn append(&mut self, action: Action, now: Timestamp) -> Result<Event, JournalError> {
        let event = self.next_event(action, now);
        self.study.validate(&event)?;
        write_event(&mut self.file, &event)?;
        self.study.apply(&event).expect("validated event applies");
        self.after_write()?;
        Ok(event)
    }

    /// Records an engine run whose artifact was built from the current
    /// state, stamping the artifact digest into the event.
    pub fn append_run(
        &mut self,
        artifact: ModelArtifact,
        now: Timestamp,
    ) -> Result<Event, JournalError> {
        let action = Action::EngineRun {
            built_at: artifact.built_at,
            digest: Some(artifact.digest()),
        };
        let event = self.next_event(action, now);
        self.study.validate(&event)?;
        write_event(&mut self.file, &event)?;
        self.study
            .apply_prebuilt(&event, artifact)
            .expect("validated run applies");
        self.after_write()?;
        Ok(event)
    }

    /// A timestamp for the next event at wall time `now`.
    pub fn next_at(&self, now: Timestamp) -> Timestamp {
        Timestamp(now.0.max(self.study.last_at().0 + 1))
    }

    fn after_write(&mut self) -> Result<(), JournalError> {
        self.since_snapshot += 1;
        if self.snapshot_every > 0 && self.since_snapshot >= self.snapshot_every {
            self.write_snapshot()?;
        }
        Ok(())
    }

    /// Saves the current state next to the log (write, sync, rename).
    pub fn write_snapshot(&mut self) -> Result<(), JournalError> {
        let target = snapshot_path(&self.path);
        let tmp = target.with_extension("tmp");
        let mut f = File::create(&tmp)?;
        serde_json::to_writer(
            &mut f,
            &Snapshot {
                seq: self.study.last_seq(),
                study: self.study.clone(),
            },
        )
        .map_err(std::io::Error::from)?;
        f.sync_all()?;
        fs::rename(&tmp, &target)?;
        self.since_snapshot = 0;
        Ok(())
    }
}

fn write_event(file: &mut File, event: &Event) -> std::io::Result<()> {
    let mut line = serde_json::to_vec(event)?;
    line.push(b'\n');
    file.write_all(&line)?;
    file.sync_data()
}

fn drop_torn_tail(file: &mut File, path: &Path) -> Result<(), JournalError> {
    let mut content = Vec::new();
    file.seek(SeekFrom::Start(0))?;
    file.read_to_end(&mut content)?;
    if content.is_empty() || content.ends_with(b"\n") {
        return Ok(());
    }
    let start = content
        .iter()
        .rposition(|b| *b == b'\n')
        .map_or(0, |i| i + 1);
    if serde_json::from_slice::<Event>(&content[start..]).is_ok() {
        // Complete record, only the newline is missing.
        file.write_all(b"\n")?;
    } else {
        tracing::warn!(path = %path.display(), bytes = content.len() - start, "dropping torn final record");
        file.set_len(start as u64)?;
    }
    file.sync_all()?;
    Ok(())
}

/// Uses the snapshot when it is consistent with the log, replaying only the
/// events after it; falls back to a full replay otherwise.
fn load_study(path: &Path) -> Result<Option<Study>, JournalError> {
    let events = read_events(path)?;
    if let Some(snap) = read_snapshot(path) {
        let n = snap.seq as usize;
        if n >= 1
            && n <= events.len()
            && events[n - 1].seq == snap.seq
            && events[n - 1].at == snap.study.last_at()
        {
            let mut study = snap.study;
            for (i, event) in events.iter().enumerate().skip(n) {
                study
                    .apply(event)
                    .map_err(|e| JournalError::corrupt(i + 1, e.to_string()))?;
            }
            return Ok(Some(study));
        }
        tracing::warn!("snapshot does not match the log; replaying from the start");
    }
    replay_events(&events)
}

fn read_snapshot(path: &Path) -> Option<Snapshot> {
    let bytes = fs::read(snapshot_path(path)).ok()?;
    serde_json::from_slice(&bytes).ok()
}
