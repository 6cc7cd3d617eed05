//! Durable session storage.
//!
//! Layout under the data directory:
//!
//! ```text
//! <data_dir>/<session_id>/config.json    inputs: config, items, similarities
//! <data_dir>/<session_id>/events.log     one JSON event per line, append only
//! <data_dir>/<session_id>/snapshot.json  derived state, rewritten per judgment
//! ```
//!
//! A human judgment is appended and synced to `events.log` before it is
//! applied. On open, the log is replayed; a torn trailing line is dropped.

use std::fs::{self, File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use ezsort_core::{Event, ItemRecord, Outcome, Session, SessionConfig, SessionStats, SimilarityTable};

pub const EXPORT_FORMAT: &str = "ezsort-export/1";

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("session `{0}` not found")]
    NotFound(String),
    #[error("session `{0}` already exists")]
    Exists(String),
    #[error("invalid session id `{0}`")]
    BadId(String),
    #[error("corrupt {file} for session `{id}`: {detail}")]
    Corrupt { id: String, file: &'static str, detail: String },
    #[error(transparent)]
    Engine(#[from] ezsort_core::Error),
    #[error("io error: {0}")]
    Io(#[from] io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type StoreResult<T> = Result<T, StoreError>;

/// Everything needed to rebuild a session from scratch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionInputs {
    pub session_id: String,
    pub created_at_ms: u64,
    pub config: SessionConfig,
    pub items: Vec<ItemRecord>,
    pub similarities: SimilarityTable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub session_id: String,
    pub stats: SessionStats,
    pub session: Session,
}

/// Self-contained archive of a session, importable elsewhere.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExportBundle {
    pub format: String,
    pub inputs: SessionInputs,
    pub events: Vec<Event>,
    pub snapshot: Snapshot,
}

pub fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

fn valid_id(id: &str) -> bool {
    !id.is_empty()
        && id.len() <= 128
        && id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
}

/// Writes `bytes` to `path` via a synced temp file and a rename.
fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)
}

#[derive(Debug, Clone)]
pub struct SessionStore {
    root: PathBuf,
}

impl SessionStore {
    /// Opens a data directory, creating it if missing.
    pub fn open(root: impl Into<PathBuf>) -> StoreResult<Self> {
        let root = root.into();
        fs::create_dir_all(&root)?;
        Ok(Self { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn dir(&self, id: &str) -> StoreResult<PathBuf> {
        if !valid_id(id) {
            return Err(StoreError::BadId(id.into()));
        }
        Ok(self.root.join(id))
    }

    /// Session ids present on disk, sorted.
    pub fn list(&self) -> StoreResult<Vec<String>> {
        let mut ids = Vec::new();
        for entry in fs::read_dir(&self.root)? {
            let entry = entry?;
            let name = entry.file_name().to_string_lossy().into_owned();
            if valid_id(&name) && entry.path().join("config.json").is_file() {
                ids.push(name);
            }
        }
        ids.sort();
        Ok(ids)
    }

    pub fn create(
        &self,
        items: Vec<ItemRecord>,
        similarities: SimilarityTable,
        config: SessionConfig,
    ) -> StoreResult<StoredSession> {
        let inputs = SessionInputs {
            session_id: uuid::Uuid::new_v4().simple().to_string(),
            created_at_ms: now_ms(),
            config,
            items,
            similarities,
        };
        self.create_from(inputs, &[])
    }

    /// Creates a session directory from inputs and a recorded log, which is
    /// replayed and verified first.
    pub fn create_from(&self, inputs: SessionInputs, log: &[Event]) -> StoreResult<StoredSession> {
        let dir = self.dir(&inputs.session_id)?;
        if dir.exists() {
            return Err(StoreError::Exists(inputs.session_id));
        }
        let session = Session::replay(&inputs.items, &inputs.similarities, inputs.config.clone(), log)?;
        let staging = self.root.join(format!(".staging-{}", inputs.session_id));
        if staging.exists() {
            fs::remove_dir_all(&staging)?;
        }
        fs::create_dir_all(&staging)?;
        write_atomic(&staging.join("config.json"), &serde_json::to_vec_pretty(&inputs)?)?;
        write_atomic(&staging.join("events.log"), &encode_log(&session.events)?)?;
        let snap = snapshot(&inputs.session_id, &session);
        write_atomic(&staging.join("snapshot.json"), &serde_json::to_vec(&snap)?)?;
        fs::rename(&staging, &dir)?;
        StoredSession::attach(dir, inputs, session)
    }

    /// Loads a session by replaying its log, then rewrites the log so it
    /// holds exactly the regenerated events.
    pub fn load(&self, id: &str) -> StoreResult<StoredSession> {
        let dir = self.dir(id)?;
        let config_path = dir.join("config.json");
        if !config_path.is_file() {
            return Err(StoreError::NotFound(id.into()));
        }
        let inputs: SessionInputs =
            serde_json::from_slice(&fs::read(&config_path)?).map_err(|e| StoreError::Corrupt {
                id: id.into(),
                file: "config.json",
                detail: e.to_string(),
            })?;
        let log = read_log(id, &dir.join("events.log"))?;
        let session = Session::replay(&inputs.items, &inputs.similarities, inputs.config.clone(), &log)?;
        write_atomic(&dir.join("events.log"), &encode_log(&session.events)?)?;
        write_atomic(&dir.join("snapshot.json"), &serde_json::to_vec(&snapshot(id, &session))?)?;
        StoredSession::attach(dir, inputs, session)
    }

    pub fn import(&self, bundle: ExportBundle) -> StoreResult<StoredSession> {
        if bundle.format != EXPORT_FORMAT {
            return Err(StoreError::Corrupt {
                id: bundle.inputs.session_id,
                file: "export",
                detail: format!("unsupported format `{}`", bundle.format),
            });
        }
        self.create_from(bundle.inputs, &bundle.events)
    }
}

fn encode_log(events: &[Event]) -> StoreResult<Vec<u8>> {
    let mut out = Vec::new();
    for ev in events {
        serde_json::to_writer(&mut out, ev)?;
        out.push(b'\n');
    }
    Ok(out)
}

/// Reads `events.log`. Only the final line may be unparseable (a write cut
/// short by a crash); anything earlier is corruption.
fn read_log(id: &str, path: &Path) -> StoreResult<Vec<Event>> {
    let bytes = match fs::read(path) {
        Ok(b) => b,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(e.into()),
    };
    let text = String::from_utf8_lossy(&bytes);
    let lines: Vec<&str> = text.split('\n').collect();
    let mut events = Vec::new();
    for (i, line) in lines.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let last = i + 1 == lines.len();
        match serde_json::from_str::<Event>(line) {
            Ok(ev) => events.push(ev),
            // a complete line ends with '\n', so a torn write is always last
            Err(_) if last => break,
            Err(e) => {
                return Err(StoreError::Corrupt {
                    id: id.into(),
                    file: "events.log",
                    detail: format!("line {}: {e}", i + 1),
                })
            }
        }
    }
    Ok(events)
}

fn snapshot(id: &str, session: &Session) -> Snapshot {
    Snapshot {
        session_id: id.into(),
        stats: session.stats(),
        session: session.clone(),
    }
}

/// A live session bound to its directory.
#[derive(Debug)]
pub struct StoredSession {
    dir: PathBuf,
    inputs: SessionInputs,
    session: Session,
    log: File,
    persisted: usize,
}

impl StoredSession {
    fn attach(dir: PathBuf, inputs: SessionInputs, session: Session) -> StoreResult<Self> {
        let log = OpenOptions::new().append(true).open(dir.join("events.log"))?;
        let persisted = session.events.len();
        Ok(Self {
            dir,
            inputs,
            session,
            log,
            persisted,
        })
    }

    pub fn id(&self) -> &str {
        &self.inputs.session_id
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn session(&self) -> &Session {
        &self.session
    }

    pub fn inputs(&self) -> &SessionInputs {
        &self.inputs
    }

    fn append(&mut self, events: &[Event]) -> StoreResult<()> {
        if events.is_empty() {
            return Ok(());
        }
        self.log.write_all(&encode_log(events)?)?;
        self.log.sync_data()?;
        Ok(())
    }

    /// Records a human judgment. It is durable before the state changes;
    /// the derived events and snapshot follow.
    pub fn submit(&mut self, request_id: u64, outcome: Outcome) -> StoreResult<()> {
        let ts = Some(now_ms());
        let judged = self.session.preview_judgment(request_id, outcome, ts)?;
        self.append(std::slice::from_ref(&judged))?;
        self.session.submit(request_id, outcome, ts)?;
        debug_assert_eq!(self.session.events[self.persisted], judged);
        let fresh = self.session.events[self.persisted + 1..].to_vec();
        self.append(&fresh)?;
        self.persisted = self.session.events.len();
        self.write_snapshot()
    }

    pub fn write_snapshot(&self) -> StoreResult<()> {
        let snap = snapshot(self.id(), &self.session);
        write_atomic(&self.dir.join("snapshot.json"), &serde_json::to_vec(&snap)?)?;
        Ok(())
    }

    pub fn export(&self) -> ExportBundle {
        ExportBundle {
            format: EXPORT_FORMAT.into(),
            inputs: self.inputs.clone(),
            events: self.session.events.clone(),
            snapshot: snapshot(self.id(), &self.session),
        }
    }
}
