//! Durable storage: object registry, per-object memories, session logs and
//! archived recognition images, all under one data directory.
//!
//! ```text
//! <root>/registry.jsonl               one ObjectProfile per line
//! <root>/memories/<object_id>.jsonl   append-only MemoryRecords
//! <root>/sessions/<session_id>.json   one SessionLog, written once
//! <root>/images/<object_id>/<ts>.<ext>
//! ```
//!
//! The registry is rewritten through a temp file and an atomic rename, so a
//! crash at any point leaves either the old or the new registry in place.
//! Session logs and images are published with `link(2)`, which refuses to
//! replace an existing file.

use std::fs::{self, File, OpenOptions};
use std::io::{Read, Seek, SeekFrom, Write};
use std::path::{Component, Path, PathBuf};
use std::sync::Mutex;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::clock::Timestamp;
use crate::error::StorageError;
use crate::identity::ObjectProfile;
use crate::memory::MemoryRecord;
use crate::providers::ImageMime;
use crate::transcript::{InnerThoughtsEntry, TranscriptEntry};

pub const RECORD_VERSION: u32 = 1;
pub const DATA_DIR_ENV: &str = "PORTAL_DATA_DIR";
pub const DEFAULT_DATA_DIR: &str = "./portal-data";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StoreLayout {
    pub root_dir: PathBuf,
    pub registry_file: PathBuf,
    pub memories_dir: PathBuf,
    pub sessions_dir: PathBuf,
    pub images_dir: PathBuf,
}

impl StoreLayout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        let root_dir = root.into();
        Self {
            registry_file: root_dir.join("registry.jsonl"),
            memories_dir: root_dir.join("memories"),
            sessions_dir: root_dir.join("sessions"),
            images_dir: root_dir.join("images"),
            root_dir,
        }
    }

    /// `$PORTAL_DATA_DIR`, or `./portal-data`.
    pub fn from_env() -> Self {
        Self::new(std::env::var_os(DATA_DIR_ENV).map_or_else(|| DEFAULT_DATA_DIR.into(), PathBuf::from))
    }

    pub fn init(&self) -> Result<(), StorageError> {
        for d in [
            &self.root_dir,
            &self.memories_dir,
            &self.sessions_dir,
            &self.images_dir,
        ] {
            fs::create_dir_all(d).map_err(|e| StorageError::io(d, e))?;
        }
        Ok(())
    }

    fn registry_temp(&self) -> PathBuf {
        self.registry_file.with_extension("jsonl.tmp")
    }
}

/// Steps of the registry rewrite at which a test may simulate a crash.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FaultPoint {
    /// Before the temp file is created.
    CreateTemp,
    /// Halfway through writing the temp file.
    WriteData,
    /// Before the temp file is fsynced.
    SyncTemp,
    /// Before the rename over the live registry.
    Rename,
    /// After the rename, before the directory is fsynced.
    SyncDir,
}

impl FaultPoint {
    pub const ALL: [FaultPoint; 5] = [
        Self::CreateTemp,
        Self::WriteData,
        Self::SyncTemp,
        Self::Rename,
        Self::SyncDir,
    ];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionLog {
    pub session_id: String,
    pub object_id: Option<String>,
    pub started_at: Timestamp,
    pub ended_at: Timestamp,
    pub transcript: Vec<TranscriptEntry>,
    /// Operator channel only.
    pub inner_thoughts: Vec<InnerThoughtsEntry>,
    /// memory_id of the stored session summary.
    pub summary_ref: Option<String>,
    pub summary_skipped: bool,
}

#[derive(Serialize)]
struct VersionedRef<'a, T> {
    version: u32,
    #[serde(flatten)]
    record: &'a T,
}

#[derive(Deserialize)]
struct Versioned<T> {
    version: u32,
    #[serde(flatten)]
    record: T,
}

/// One JSON document, no trailing newline.
pub fn encode_record<T: Serialize>(record: &T) -> Result<String, StorageError> {
    serde_json::to_string(&VersionedRef {
        version: RECORD_VERSION,
        record,
    })
    .map_err(|e| StorageError::Encode(e.to_string()))
}

pub fn decode_record<T: DeserializeOwned>(line: &str) -> Result<T, String> {
    let v: Versioned<T> = serde_json::from_str(line).map_err(|e| e.to_string())?;
    if v.version != RECORD_VERSION {
        return Err(format!("unsupported record version {}", v.version));
    }
    Ok(v.record)
}

/// Records read from a line-delimited file plus a warning per skipped line.
#[derive(Debug)]
pub struct Loaded<T> {
    pub records: Vec<T>,
    pub warnings: Vec<String>,
}

fn parse_lines<T: DeserializeOwned>(path: &Path, text: &str) -> Loaded<T> {
    let mut records = Vec::new();
    let mut warnings = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match decode_record(line) {
            Ok(r) => records.push(r),
            Err(e) => {
                let w = format!("{}:{}: skipped corrupt record: {e}", path.display(), i + 1);
                tracing::warn!("{w}");
                warnings.push(w);
            }
        }
    }
    Loaded { records, warnings }
}

fn read_optional(path: &Path) -> Result<String, StorageError> {
    match fs::read(path) {
        Ok(bytes) => Ok(String::from_utf8_lossy(&bytes).into_owned()),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(String::new()),
        Err(e) => Err(StorageError::io(path, e)),
    }
}

fn sync_dir(dir: &Path) -> Result<(), StorageError> {
    File::open(dir)
        .and_then(|f| f.sync_all())
        .map_err(|e| StorageError::io(dir, e))
}

/// Writes `bytes` to a sibling temp file and links it into place. Fails with
/// `AlreadyExists` rather than replacing `path`.
fn publish_new(path: &Path, bytes: &[u8]) -> Result<(), std::io::Error> {
    let tmp = path.with_extension(format!(
        "{}.tmp",
        path.extension().and_then(|e| e.to_str()).unwrap_or("")
    ));
    {
        let mut f = File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    let linked = fs::hard_link(&tmp, path);
    let _ = fs::remove_file(&tmp);
    linked
}

fn safe_relative(r: &str) -> bool {
    !r.is_empty()
        && Path::new(r)
            .components()
            .all(|c| matches!(c, Component::Normal(_)))
}

#[derive(Debug)]
pub struct Store {
    layout: StoreLayout,
    registry_lock: Mutex<()>,
    memory_lock: Mutex<()>,
    fault: Mutex<Option<FaultPoint>>,
}

impl Store {
    /// Creates the directory tree if needed.
    pub fn open(layout: StoreLayout) -> Result<Self, StorageError> {
        layout.init()?;
        Ok(Self {
            layout,
            registry_lock: Mutex::new(()),
            memory_lock: Mutex::new(()),
            fault: Mutex::new(None),
        })
    }

    pub fn layout(&self) -> &StoreLayout {
        &self.layout
    }

    /// Arms a one-shot simulated crash at `point` in the next registry write.
    /// Testing hook.
    pub fn inject_fault(&self, point: FaultPoint) {
        *self.fault.lock().unwrap() = Some(point);
    }

    fn trip(&self, point: FaultPoint) -> bool {
        let mut f = self.fault.lock().unwrap();
        if *f == Some(point) {
            *f = None;
            true
        } else {
            false
        }
    }

    fn interrupted(point: FaultPoint) -> StorageError {
        StorageError::Interrupted(format!("{point:?}"))
    }

    /// Upserts `profile` into the registry by rewriting it atomically.
    /// Unparseable lines already in the file are carried over untouched.
    pub fn save_profile(&self, profile: &ObjectProfile) -> Result<(), StorageError> {
        let _guard = self.registry_lock.lock().unwrap();
        let path = &self.layout.registry_file;
        let current = read_optional(path)?;
        let new_line = encode_record(profile)?;
        let mut out = String::with_capacity(current.len() + new_line.len() + 1);
        let mut replaced = false;
        for line in current.lines().filter(|l| !l.trim().is_empty()) {
            let same = decode_record::<ObjectProfile>(line)
                .map(|p| p.object_id == profile.object_id)
                .unwrap_or(false);
            if same {
                if !replaced {
                    out.push_str(&new_line);
                    out.push('\n');
                    replaced = true;
                }
            } else {
                out.push_str(line);
                out.push('\n');
            }
        }
        if !replaced {
            out.push_str(&new_line);
            out.push('\n');
        }
        self.replace_registry(out.as_bytes())
    }

    fn replace_registry(&self, bytes: &[u8]) -> Result<(), StorageError> {
        let tmp = self.layout.registry_temp();
        let live = &self.layout.registry_file;
        if self.trip(FaultPoint::CreateTemp) {
            return Err(Self::interrupted(FaultPoint::CreateTemp));
        }
        let mut f = File::create(&tmp).map_err(|e| StorageError::io(&tmp, e))?;
        if self.trip(FaultPoint::WriteData) {
            let _ = f.write_all(&bytes[..bytes.len() / 2]);
            return Err(Self::interrupted(FaultPoint::WriteData));
        }
        f.write_all(bytes).map_err(|e| StorageError::io(&tmp, e))?;
        if self.trip(FaultPoint::SyncTemp) {
            return Err(Self::interrupted(FaultPoint::SyncTemp));
        }
        f.sync_all().map_err(|e| StorageError::io(&tmp, e))?;
        drop(f);
        if self.trip(FaultPoint::Rename) {
            return Err(Self::interrupted(FaultPoint::Rename));
        }
        fs::rename(&tmp, live).map_err(|e| StorageError::io(live, e))?;
        if self.trip(FaultPoint::SyncDir) {
            return Err(Self::interrupted(FaultPoint::SyncDir));
        }
        sync_dir(&self.layout.root_dir)
    }

    /// Every saved profile, in file order. Corrupt lines become warnings.
    pub fn load_registry(&self) -> Result<Loaded<ObjectProfile>, StorageError> {
        let path = &self.layout.registry_file;
        let text = read_optional(path)?;
        Ok(parse_lines(path, &text))
    }

    /// Stores `bytes` under `images/<object_id>/<timestamp>.<ext>` and appends
    /// the resulting reference to `profile.image_refs`. Never overwrites.
    pub fn archive_image(
        &self,
        profile: &mut ObjectProfile,
        bytes: &[u8],
        mime: ImageMime,
        at: Timestamp,
    ) -> Result<String, StorageError> {
        let dir = self.layout.images_dir.join(&profile.object_id);
        fs::create_dir_all(&dir).map_err(|e| StorageError::io(&dir, e))?;
        let stem = at.format("%Y%m%dT%H%M%S%.6fZ").to_string();
        for n in 0u32.. {
            let name = if n == 0 {
                format!("{stem}.{}", mime.extension())
            } else {
                format!("{stem}-{n}.{}", mime.extension())
            };
            let path = dir.join(&name);
            match publish_new(&path, bytes) {
                Ok(()) => {
                    let r = format!("{}/{name}", profile.object_id);
                    profile.image_refs.push(r.clone());
                    return Ok(r);
                }
                Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => continue,
                Err(e) => return Err(StorageError::io(&path, e)),
            }
        }
        unreachable!()
    }

    pub fn read_image(&self, image_ref: &str) -> Result<Vec<u8>, StorageError> {
        if !safe_relative(image_ref) {
            return Err(StorageError::UnknownImage(image_ref.to_string()));
        }
        let path = self.layout.images_dir.join(image_ref);
        fs::read(&path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => StorageError::UnknownImage(image_ref.to_string()),
            _ => StorageError::io(&path, e),
        })
    }

    fn memory_file(&self, object_id: &str) -> PathBuf {
        self.layout.memories_dir.join(format!("{object_id}.jsonl"))
    }

    /// Appends one record as a single write. A torn tail left by an earlier
    /// crash is terminated first so it cannot swallow the new record.
    pub fn append_memory(&self, record: &MemoryRecord) -> Result<(), StorageError> {
        let _guard = self.memory_lock.lock().unwrap();
        let path = self.memory_file(&record.object_id);
        let mut line = encode_record(record)?;
        line.push('\n');
        let mut f = OpenOptions::new()
            .create(true)
            .read(true)
            .append(true)
            .open(&path)
            .map_err(|e| StorageError::io(&path, e))?;
        let len = f.metadata().map_err(|e| StorageError::io(&path, e))?.len();
        if len > 0 {
            let mut last = [0u8; 1];
            f.seek(SeekFrom::Start(len - 1))
                .and_then(|_| f.read_exact(&mut last))
                .map_err(|e| StorageError::io(&path, e))?;
            if last[0] != b'\n' {
                line.insert(0, '\n');
            }
        }
        f.write_all(line.as_bytes())
            .and_then(|_| f.sync_data())
            .map_err(|e| StorageError::io(&path, e))
    }

    /// All memory records across objects, per-file insertion order.
    pub fn load_memories(&self) -> Result<Loaded<MemoryRecord>, StorageError> {
        let dir = &self.layout.memories_dir;
        let mut files: Vec<PathBuf> = fs::read_dir(dir)
            .map_err(|e| StorageError::io(dir, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
            .collect();
        files.sort();
        let mut all = Loaded {
            records: Vec::new(),
            warnings: Vec::new(),
        };
        for path in files {
            let text = read_optional(&path)?;
            let loaded = parse_lines::<MemoryRecord>(&path, &text);
            all.records.extend(loaded.records);
            all.warnings.extend(loaded.warnings);
        }
        Ok(all)
    }

    pub fn session_path(&self, session_id: &str) -> PathBuf {
        self.layout.sessions_dir.join(format!("{session_id}.json"))
    }

    /// Writes the log once; an existing log for the same session is an error.
    pub fn write_session_log(&self, log: &SessionLog) -> Result<PathBuf, StorageError> {
        let path = self.session_path(&log.session_id);
        let mut text = encode_record(log)?;
        text.push('\n');
        publish_new(&path, text.as_bytes()).map_err(|e| StorageError::io(&path, e))?;
        Ok(path)
    }

    pub fn read_session_log(&self, session_id: &str) -> Result<SessionLog, StorageError> {
        let path = self.session_path(session_id);
        let text = fs::read_to_string(&path).map_err(|e| StorageError::io(&path, e))?;
        decode_record(text.trim_end()).map_err(StorageError::Encode)
    }
}
