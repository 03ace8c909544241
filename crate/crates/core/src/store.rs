//! Append-only curve store: JSON Lines shards plus config registries.
//!
//! Layout of a store directory:
//!
//! ```text
//! store.json            schema version and profile fingerprint
//! tasks.jsonl           task configs, one per line
//! optimizers.jsonl      optimizer configs, one per line
//! shards/<xx>.jsonl     curve records, sharded by a hash prefix of task_id
//! index.json            counts and content hash (rebuildable)
//! ```

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::optim::OptimizerConfig;
use crate::scoring::{ProfileFingerprint, TrainingCurve};
use crate::task::TaskConfig;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveRecord {
    pub schema_version: u32,
    #[serde(flatten)]
    pub curve: TrainingCurve,
    pub profile: ProfileFingerprint,
}

impl CurveRecord {
    pub fn new(curve: TrainingCurve, profile: ProfileFingerprint) -> Self {
        CurveRecord {
            schema_version: SCHEMA_VERSION,
            curve,
            profile,
        }
    }

    pub fn key(&self) -> RecordKey {
        (
            self.curve.task_id.clone(),
            self.curve.optimizer_id.clone(),
            self.curve.seed,
        )
    }

    /// Canonical bytes for hashing: everything except the wall time.
    fn canonical(&self) -> Vec<u8> {
        let mut c = self.clone();
        c.curve.wall_time_s = 0.0;
        serde_json::to_vec(&c).expect("record serializes")
    }
}

pub type RecordKey = (String, String, u64);

/// A missing (task, optimizer, seed) triple.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Gap {
    pub task_id: String,
    pub optimizer_id: String,
    pub seed: u64,
}

impl fmt::Display for Gap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, seed {})", self.task_id, self.optimizer_id, self.seed)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StoreMeta {
    schema_version: u32,
    profile: ProfileFingerprint,
}

#[derive(Serialize)]
struct StoreIndex<'a> {
    records: usize,
    tasks: usize,
    optimizers: usize,
    per_task: BTreeMap<&'a str, usize>,
    per_optimizer: BTreeMap<&'a str, usize>,
    content_hash: String,
}

pub struct Store {
    dir: Option<PathBuf>,
    profile: ProfileFingerprint,
    records: BTreeMap<RecordKey, CurveRecord>,
    by_task: HashMap<String, Vec<RecordKey>>,
    tasks: BTreeMap<String, TaskConfig>,
    optimizers: BTreeMap<String, OptimizerConfig>,
    /// Shards whose last line was cut short; fixed before the next append.
    torn: BTreeSet<String>,
    writers: HashMap<String, File>,
    hash: OnceLock<String>,
}

fn shard_of(task_id: &str) -> String {
    hex::encode(&Sha256::digest(task_id.as_bytes())[..1])
}

fn read_lines(path: &Path) -> Result<(Vec<String>, bool)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut lines = Vec::new();
    let mut torn = false;
    let mut reader = BufReader::new(file);
    let mut buf = String::new();
    loop {
        buf.clear();
        let n = reader.read_line(&mut buf).map_err(|e| Error::io(path, e))?;
        if n == 0 {
            break;
        }
        if buf.ends_with('\n') {
            lines.push(buf.trim_end().to_string());
        } else {
            torn = true;
        }
    }
    Ok((lines, torn))
}

/// Truncate a file after its last newline.
fn cut_torn_tail(path: &Path) -> Result<()> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let keep = bytes.iter().rposition(|&b| b == b'\n').map_or(0, |i| i + 1);
    let f = OpenOptions::new()
        .write(true)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    f.set_len(keep as u64).map_err(|e| Error::io(path, e))
}

fn append_line(path: &Path, file: &mut File, line: &str) -> Result<()> {
    let mut buf = Vec::with_capacity(line.len() + 1);
    buf.extend_from_slice(line.as_bytes());
    buf.push(b'\n');
    file.write_all(&buf).map_err(|e| Error::io(path, e))
}

fn open_append(path: &Path) -> Result<File> {
    OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| Error::io(path, e))
}

impl Store {
    /// A store that lives only in memory.
    pub fn in_memory(profile: ProfileFingerprint) -> Self {
        Store {
            dir: None,
            profile,
            records: BTreeMap::new(),
            by_task: HashMap::new(),
            tasks: BTreeMap::new(),
            optimizers: BTreeMap::new(),
            torn: BTreeSet::new(),
            writers: HashMap::new(),
            hash: OnceLock::new(),
        }
    }

    /// Open an existing store.
    pub fn open(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let meta_path = dir.join("store.json");
        let text = fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
        let meta: StoreMeta =
            serde_json::from_str(&text).map_err(|e| Error::config(meta_path.display().to_string(), e.to_string()))?;
        if meta.schema_version != SCHEMA_VERSION {
            return Err(Error::config(
                meta_path.display().to_string(),
                format!("unsupported schema version {}", meta.schema_version),
            ));
        }
        let mut store = Store::in_memory(meta.profile);
        store.dir = Some(dir.to_path_buf());
        store.load()?;
        Ok(store)
    }

    /// Open the store at `dir`, creating it with `profile` if absent.
    pub fn open_or_create(dir: impl AsRef<Path>, profile: ProfileFingerprint) -> Result<Self> {
        let dir = dir.as_ref();
        if dir.join("store.json").exists() {
            let store = Store::open(dir)?;
            if store.profile != profile {
                return Err(Error::IncompatibleProfile {
                    store: store.profile.to_string(),
                    record: profile.to_string(),
                });
            }
            return Ok(store);
        }
        fs::create_dir_all(dir.join("shards")).map_err(|e| Error::io(dir, e))?;
        let meta = StoreMeta {
            schema_version: SCHEMA_VERSION,
            profile,
        };
        let path = dir.join("store.json");
        let tmp = dir.join("store.json.tmp");
        fs::write(&tmp, serde_json::to_string_pretty(&meta)?).map_err(|e| Error::io(&tmp, e))?;
        fs::rename(&tmp, &path).map_err(|e| Error::io(&path, e))?;
        let mut store = Store::in_memory(profile);
        store.dir = Some(dir.to_path_buf());
        Ok(store)
    }

    fn load(&mut self) -> Result<()> {
        let dir = self.dir.clone().expect("on-disk store");
        for (name, is_task) in [("tasks.jsonl", true), ("optimizers.jsonl", false)] {
            let path = dir.join(name);
            if !path.exists() {
                continue;
            }
            let (lines, torn) = read_lines(&path)?;
            if torn {
                log::warn!("{}: ignoring truncated trailing line", path.display());
                self.torn.insert(name.to_string());
            }
            for (i, line) in lines.iter().enumerate() {
                let at = || format!("{}:{}", path.display(), i + 1);
                if is_task {
                    let c = TaskConfig::from_json(line).map_err(|e| Error::config(at(), e.to_string()))?;
                    self.tasks.insert(c.task_id().to_string(), c);
                } else {
                    let c = OptimizerConfig::from_json(line).map_err(|e| Error::config(at(), e.to_string()))?;
                    self.optimizers.insert(c.optimizer_id().to_string(), c);
                }
            }
        }
        let shard_dir = dir.join("shards");
        if shard_dir.exists() {
            let mut entries: Vec<PathBuf> = fs::read_dir(&shard_dir)
                .map_err(|e| Error::io(&shard_dir, e))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
                .collect();
            entries.sort();
            for path in entries {
                let (lines, torn) = read_lines(&path)?;
                let stem = path.file_stem().unwrap().to_string_lossy().to_string();
                if torn {
                    log::warn!("{}: ignoring truncated trailing line", path.display());
                    self.torn.insert(format!("shards/{stem}.jsonl"));
                }
                for (i, line) in lines.iter().enumerate() {
                    let rec: CurveRecord = serde_json::from_str(line)
                        .map_err(|e| Error::config(format!("{}:{}", path.display(), i + 1), e.to_string()))?;
                    if rec.schema_version != SCHEMA_VERSION {
                        return Err(Error::config(
                            format!("{}:{}", path.display(), i + 1),
                            format!("unsupported schema version {}", rec.schema_version),
                        ));
                    }
                    self.insert(rec);
                }
            }
        }
        Ok(())
    }

    fn insert(&mut self, rec: CurveRecord) {
        let key = rec.key();
        self.by_task.entry(key.0.clone()).or_default().push(key.clone());
        self.records.insert(key, rec);
        self.hash = OnceLock::new();
    }

    fn writer(&mut self, rel: &str) -> Result<Option<(PathBuf, &mut File)>> {
        let Some(dir) = self.dir.clone() else {
            return Ok(None);
        };
        let path = dir.join(rel);
        if self.torn.remove(rel) {
            cut_torn_tail(&path)?;
        }
        if !self.writers.contains_key(rel) {
            let f = open_append(&path)?;
            self.writers.insert(rel.to_string(), f);
        }
        Ok(Some((path, self.writers.get_mut(rel).unwrap())))
    }

    pub fn dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    pub fn profile(&self) -> ProfileFingerprint {
        self.profile
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn contains(&self, task_id: &str, optimizer_id: &str, seed: u64) -> bool {
        self.records
            .contains_key(&(task_id.to_string(), optimizer_id.to_string(), seed))
    }

    pub fn get(&self, task_id: &str, optimizer_id: &str, seed: u64) -> Option<&CurveRecord> {
        self.records.get(&(task_id.to_string(), optimizer_id.to_string(), seed))
    }

    pub fn records(&self) -> impl Iterator<Item = &CurveRecord> {
        self.records.values()
    }

    /// One more than the largest stored seed; zero for an empty store.
    pub fn seed_count(&self) -> usize {
        self.records.keys().map(|k| k.2 as usize + 1).max().unwrap_or(0)
    }

    /// Every curve recorded for a task, in key order.
    pub fn curves_for_task(&self, task_id: &str) -> Vec<&TrainingCurve> {
        let mut keys: Vec<&RecordKey> = self
            .by_task
            .get(task_id)
            .map(|v| v.iter().collect())
            .unwrap_or_default();
        keys.sort();
        keys.iter().map(|k| &self.records[*k].curve).collect()
    }

    /// Register a task config (idempotent).
    pub fn add_task(&mut self, config: &TaskConfig) -> Result<()> {
        if self.tasks.contains_key(config.task_id()) {
            return Ok(());
        }
        if let Some((path, f)) = self.writer("tasks.jsonl")? {
            append_line(&path, f, &config.to_json())?;
        }
        self.tasks.insert(config.task_id().to_string(), config.clone());
        Ok(())
    }

    /// Register an optimizer config (idempotent).
    pub fn add_optimizer(&mut self, config: &OptimizerConfig) -> Result<()> {
        if self.optimizers.contains_key(config.optimizer_id()) {
            return Ok(());
        }
        if let Some((path, f)) = self.writer("optimizers.jsonl")? {
            append_line(&path, f, &config.to_json())?;
        }
        self.optimizers
            .insert(config.optimizer_id().to_string(), config.clone());
        Ok(())
    }

    pub fn tasks(&self) -> &BTreeMap<String, TaskConfig> {
        &self.tasks
    }

    pub fn optimizers(&self) -> &BTreeMap<String, OptimizerConfig> {
        &self.optimizers
    }

    pub fn append(&mut self, record: CurveRecord) -> Result<()> {
        if record.profile != self.profile {
            return Err(Error::IncompatibleProfile {
                store: self.profile.to_string(),
                record: record.profile.to_string(),
            });
        }
        if record.schema_version != SCHEMA_VERSION {
            return Err(Error::InvalidInput(format!(
                "record schema version {} not supported",
                record.schema_version
            )));
        }
        let key = record.key();
        if self.records.contains_key(&key) {
            return Err(Error::Conflict(format!(
                "record ({}, {}, seed {}) already stored",
                key.0, key.1, key.2
            )));
        }
        let rel = format!("shards/{}.jsonl", shard_of(&key.0));
        let line = serde_json::to_string(&record)?;
        if let Some((path, f)) = self.writer(&rel)? {
            append_line(&path, f, &line)?;
        }
        self.insert(record);
        Ok(())
    }

    /// Flush appended data to disk and rewrite the index file.
    pub fn sync(&mut self) -> Result<()> {
        let Some(dir) = self.dir.clone() else {
            return Ok(());
        };
        for (rel, f) in &self.writers {
            f.sync_data().map_err(|e| Error::io(dir.join(rel), e))?;
        }
        let mut per_task = BTreeMap::new();
        let mut per_optimizer = BTreeMap::new();
        for (t, o, _) in self.records.keys() {
            *per_task.entry(t.as_str()).or_insert(0) += 1;
            *per_optimizer.entry(o.as_str()).or_insert(0) += 1;
        }
        let index = StoreIndex {
            records: self.records.len(),
            tasks: self.tasks.len(),
            optimizers: self.optimizers.len(),
            per_task,
            per_optimizer,
            content_hash: self.content_hash(),
        };
        let path = dir.join("index.json");
        let tmp = dir.join("index.json.tmp");
        fs::write(&tmp, serde_json::to_string_pretty(&index)?).map_err(|e| Error::io(&tmp, e))?;
        fs::rename(&tmp, &path).map_err(|e| Error::io(&path, e))
    }

    /// SHA-256 over all records in key order, ignoring wall times.
    pub fn content_hash(&self) -> String {
        self.hash
            .get_or_init(|| {
                let mut h = Sha256::new();
                for rec in self.records.values() {
                    h.update(rec.canonical());
                    h.update(b"\n");
                }
                hex::encode(h.finalize())
            })
            .clone()
    }

    /// Missing triples over the cross product.
    pub fn gaps(&self, tasks: &[String], optimizers: &[String], seeds: usize) -> Vec<Gap> {
        let mut gaps = Vec::new();
        for t in tasks {
            for o in optimizers {
                for seed in 0..seeds as u64 {
                    if !self.contains(t, o, seed) {
                        gaps.push(Gap {
                            task_id: t.clone(),
                            optimizer_id: o.clone(),
                            seed,
                        });
                    }
                }
            }
        }
        gaps
    }

    /// Records for the cross product grouped by (task, optimizer), plus gaps.
    pub fn load_matrix_inputs(
        &self,
        tasks: &[String],
        optimizers: &[String],
        seeds: usize,
    ) -> (BTreeMap<(String, String), Vec<&CurveRecord>>, Vec<Gap>) {
        let mut groups: BTreeMap<(String, String), Vec<&CurveRecord>> = BTreeMap::new();
        for t in tasks {
            for o in optimizers {
                for seed in 0..seeds as u64 {
                    if let Some(r) = self.get(t, o, seed) {
                        groups.entry((t.clone(), o.clone())).or_default().push(r);
                    }
                }
            }
        }
        (groups, self.gaps(tasks, optimizers, seeds))
    }
}

/// Write the validation cost grid as CSV: a header of optimizer ids, then one
/// row per task. Returns `(data rows, columns)`.
pub fn export_feature_matrix(matrix: &crate::scoring::CostMatrix, out: &Path) -> Result<(usize, usize)> {
    let mut s = String::from("task_id");
    for o in &matrix.optimizers {
        s.push(',');
        s.push_str(o);
    }
    s.push('\n');
    for (t, id) in matrix.tasks.iter().enumerate() {
        s.push_str(id);
        for o in 0..matrix.n_optimizers() {
            s.push(',');
            s.push_str(&matrix.valid(t, o).to_string());
        }
        s.push('\n');
    }
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(out, s).map_err(|e| Error::io(out, e))?;
    Ok((matrix.n_tasks(), matrix.n_optimizers() + 1))
}
