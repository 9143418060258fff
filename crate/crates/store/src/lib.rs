//! Relational persistence for indexed axes, episodes and cases.
//!
//! Keys are stored in their canonical text form together with their length;
//! queries pre-filter in SQL on axis and length and decide partial
//! unification in Rust.

mod cases;
mod model;

use std::cell::RefCell;
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;
use std::sync::Arc;

use chrono::{DateTime, SecondsFormat, Utc};
use rusqlite::{params, Connection, OptionalExtension, Transaction};
use semindex_core::dconcepts::{parse_dconcepts, DConceptError};
use semindex_core::hierarchy::NodeId;
use semindex_core::indexer::{ChangeSet, IndexError, IndexedHierarchy};
use semindex_core::keys::{is_instance, partially_unifiable};
use semindex_core::multiaxial::{expression_matches, MultiaxialExpression};
use semindex_core::{ConceptName, Key};
use thiserror::Error;

pub use model::*;

pub const SCHEMA_VERSION: i64 = 1;
/// Database file created inside a store directory.
pub const DB_FILE: &str = "semindex.db";

#[derive(Debug, Error)]
pub enum StoreError {
    #[error(transparent)]
    Sqlite(#[from] rusqlite::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("cannot use store location {path}: {source}")]
    Location { path: String, source: std::io::Error },
    #[error("incompatible schema version {found:?} (expected {SCHEMA_VERSION})")]
    SchemaVersion { found: Option<String> },
    #[error("unknown axis `{0}`")]
    UnknownAxis(String),
    #[error("axis `{0}` is already registered")]
    AxisExists(String),
    #[error("the hierarchy has no axis name")]
    MissingAxisName,
    #[error("{key} is neither a node key nor a concept key of axis `{axis}`")]
    InvalidKey { axis: String, key: Key },
    #[error("stored path does not lead to {key} on axis `{axis}`")]
    InvalidPath { axis: String, key: Key },
    #[error("{key} is not a {what} key of axis `{axis}`")]
    UnknownKey { axis: String, key: Key, what: &'static str },
    #[error("an episode needs at least one instance")]
    EmptyEpisode,
    #[error("episode {0} already exists")]
    DuplicateEpisode(EpisodeKey),
    #[error("unknown episode {0}")]
    UnknownEpisode(EpisodeKey),
    #[error("a case needs at least one problem episode")]
    EmptyProblem,
    #[error("change set is for index version {found}, axis `{axis}` is at {expected}")]
    VersionMismatch { axis: String, expected: u64, found: u64 },
    #[error("unknown case {0}")]
    UnknownCase(i64),
    #[error("unknown d-concept set `{0}`")]
    UnknownDConcepts(String),
    #[error(transparent)]
    DConcepts(#[from] DConceptError),
    #[error(transparent)]
    Index(#[from] IndexError),
    #[error("corrupt row: {0}")]
    Corrupt(String),
}

pub type Result<T, E = StoreError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy)]
pub struct StoreConfig {
    /// Record the concept path of every instance so it survives reindexing.
    pub store_paths: bool,
}

impl Default for StoreConfig {
    fn default() -> Self {
        StoreConfig { store_paths: true }
    }
}

/// A registered axis with lookup tables.
#[derive(Debug)]
pub struct AxisState {
    pub index: IndexedHierarchy,
    pub version: u64,
    node_by_key: HashMap<Key, NodeId>,
    concept_by_key: HashMap<Key, ConceptName>,
}

impl AxisState {
    fn new(index: IndexedHierarchy, version: u64) -> Self {
        let node_by_key = index.node_keys().iter().map(|(n, k)| (k.clone(), *n)).collect();
        let concept_by_key = index.concept_keys().iter().map(|(c, k)| (k.clone(), c.clone())).collect();
        AxisState { index, version, node_by_key, concept_by_key }
    }

    pub fn node_with_key(&self, key: &Key) -> Option<NodeId> {
        self.node_by_key.get(key).copied()
    }

    pub fn concept_with_key(&self, key: &Key) -> Option<&ConceptName> {
        self.concept_by_key.get(key)
    }

    /// The name-based anchor of a valid stored key.
    pub fn path_of(&self, key: &Key) -> Option<InstancePath> {
        if let Some(n) = self.node_with_key(key) {
            return Some(InstancePath::Node(self.index.hierarchy().concept_path(n)));
        }
        self.concept_with_key(key).map(|c| InstancePath::Concept(c.clone()))
    }

    /// The key an anchor denotes in this index.
    pub fn resolve(&self, path: &InstancePath) -> Option<Key> {
        match path {
            InstancePath::Node(names) => {
                let n = self.index.hierarchy().resolve_path(names)?;
                self.index.node_key(n).cloned()
            }
            InstancePath::Concept(c) => self.index.concept_key(c).cloned(),
        }
    }
}

pub(crate) fn format_ts(ts: &DateTime<Utc>) -> String {
    ts.to_rfc3339_opts(SecondsFormat::Nanos, true)
}

pub(crate) fn parse_ts(s: &str) -> Result<DateTime<Utc>> {
    DateTime::parse_from_rfc3339(s)
        .map(|t| t.with_timezone(&Utc))
        .map_err(|e| StoreError::Corrupt(format!("timestamp {s}: {e}")))
}

pub(crate) fn parse_key(s: &str) -> Result<Key> {
    s.parse().map_err(|e| StoreError::Corrupt(format!("key {s}: {e}")))
}

const SCHEMA: &str = "
CREATE TABLE IF NOT EXISTS meta (
    key TEXT PRIMARY KEY,
    value TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS axes (
    axis TEXT PRIMARY KEY,
    version INTEGER NOT NULL,
    title TEXT,
    rendered_index TEXT NOT NULL,
    state_json TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS nodes (
    axis TEXT NOT NULL,
    node_key TEXT NOT NULL,
    concept TEXT NOT NULL,
    parent_key TEXT,
    depth INTEGER NOT NULL,
    PRIMARY KEY (axis, node_key)
);
CREATE TABLE IF NOT EXISTS episodes (
    id TEXT NOT NULL,
    ts TEXT NOT NULL,
    subject TEXT NOT NULL,
    t_label TEXT,
    c_label TEXT,
    l_label TEXT,
    PRIMARY KEY (id, ts)
);
CREATE TABLE IF NOT EXISTS instances (
    rowid INTEGER PRIMARY KEY,
    episode_id TEXT NOT NULL,
    ts TEXT NOT NULL,
    axis TEXT NOT NULL,
    node_key TEXT NOT NULL,
    key_len INTEGER NOT NULL,
    polarity TEXT NOT NULL,
    value TEXT,
    path_json TEXT,
    axis_version INTEGER NOT NULL,
    orphaned INTEGER NOT NULL DEFAULT 0,
    FOREIGN KEY (episode_id, ts) REFERENCES episodes (id, ts)
);
CREATE INDEX IF NOT EXISTS instances_by_axis ON instances (axis, key_len);
CREATE INDEX IF NOT EXISTS instances_by_episode ON instances (episode_id, ts);
CREATE TABLE IF NOT EXISTS cases (
    id INTEGER PRIMARY KEY AUTOINCREMENT,
    problem_episode_ids_json TEXT NOT NULL,
    solution_json TEXT NOT NULL,
    assessment_text TEXT,
    outcome_score REAL
);
CREATE TABLE IF NOT EXISTS dconcepts (
    name TEXT PRIMARY KEY,
    source TEXT NOT NULL
);
";

pub struct Store {
    conn: Connection,
    config: StoreConfig,
    cache: RefCell<HashMap<String, Arc<AxisState>>>,
}

/// Opens (creating if needed) the store in directory `location`. The
/// special location `:memory:` opens a private in-memory store.
pub fn open_store(location: impl AsRef<Path>) -> Result<Store> {
    Store::open(location, StoreConfig::default())
}

impl Store {
    pub fn open(location: impl AsRef<Path>, config: StoreConfig) -> Result<Store> {
        let location = location.as_ref();
        let conn = if location.as_os_str() == ":memory:" {
            Connection::open_in_memory()?
        } else {
            std::fs::create_dir_all(location)
                .map_err(|source| StoreError::Location { path: location.display().to_string(), source })?;
            Connection::open(location.join(DB_FILE))?
        };
        Self::init(conn, config)
    }

    pub fn in_memory() -> Result<Store> {
        Self::init(Connection::open_in_memory()?, StoreConfig::default())
    }

    fn init(conn: Connection, config: StoreConfig) -> Result<Store> {
        conn.pragma_update(None, "foreign_keys", true)?;
        let has_meta: bool = conn.query_row(
            "SELECT count(*) FROM sqlite_master WHERE type = 'table' AND name = 'meta'",
            [],
            |r| r.get::<_, i64>(0).map(|n| n > 0),
        )?;
        if has_meta {
            let found: Option<String> =
                conn.query_row("SELECT value FROM meta WHERE key = 'schema_version'", [], |r| r.get(0)).optional()?;
            if found.as_deref() != Some(SCHEMA_VERSION.to_string().as_str()) {
                return Err(StoreError::SchemaVersion { found });
            }
        }
        conn.execute_batch(SCHEMA)?;
        conn.execute(
            "INSERT OR IGNORE INTO meta (key, value) VALUES ('schema_version', ?1)",
            params![SCHEMA_VERSION.to_string()],
        )?;
        Ok(Store { conn, config, cache: RefCell::new(HashMap::new()) })
    }

    pub fn config(&self) -> StoreConfig {
        self.config
    }

    pub(crate) fn conn(&self) -> &Connection {
        &self.conn
    }

    // ---- axes

    pub fn register_axis(&mut self, index: &IndexedHierarchy) -> Result<AxisInfo> {
        let axis = index.axis().ok_or(StoreError::MissingAxisName)?.to_string();
        let tx = self.conn.transaction()?;
        let exists: bool = tx.query_row("SELECT count(*) FROM axes WHERE axis = ?1", [&axis], |r| r.get::<_, i64>(0))? > 0;
        if exists {
            return Err(StoreError::AxisExists(axis));
        }
        write_axis(&tx, &axis, index, 1)?;
        tx.commit()?;
        self.cache.borrow_mut().remove(&axis);
        Ok(AxisInfo { axis, version: 1, title: index.hierarchy().title.clone(), index_version: index.version() })
    }

    pub fn axes(&self) -> Result<Vec<AxisInfo>> {
        let mut stmt = self.conn.prepare("SELECT axis FROM axes ORDER BY axis")?;
        let names: Vec<String> = stmt.query_map([], |r| r.get(0))?.collect::<Result<_, _>>()?;
        names
            .into_iter()
            .map(|a| {
                let st = self.axis(&a)?;
                Ok(AxisInfo {
                    axis: a,
                    version: st.version,
                    title: st.index.hierarchy().title.clone(),
                    index_version: st.index.version(),
                })
            })
            .collect()
    }

    pub fn has_axis(&self, axis: &str) -> Result<bool> {
        Ok(self.conn.query_row("SELECT count(*) FROM axes WHERE axis = ?1", [axis], |r| r.get::<_, i64>(0))? > 0)
    }

    pub fn axis(&self, axis: &str) -> Result<Arc<AxisState>> {
        if let Some(st) = self.cache.borrow().get(axis) {
            return Ok(st.clone());
        }
        let row: Option<(i64, String)> = self
            .conn
            .query_row("SELECT version, state_json FROM axes WHERE axis = ?1", [axis], |r| Ok((r.get(0)?, r.get(1)?)))
            .optional()?;
        let (version, json) = row.ok_or_else(|| StoreError::UnknownAxis(axis.to_string()))?;
        let index: IndexedHierarchy = serde_json::from_str(&json)?;
        let st = Arc::new(AxisState::new(index, version as u64));
        self.cache.borrow_mut().insert(axis.to_string(), st.clone());
        Ok(st)
    }

    pub fn rendered_index(&self, axis: &str) -> Result<String> {
        self.conn
            .query_row("SELECT rendered_index FROM axes WHERE axis = ?1", [axis], |r| r.get(0))
            .optional()?
            .ok_or_else(|| StoreError::UnknownAxis(axis.to_string()))
    }

    /// Replaces the catalog entry of `axis` with the result of a maintenance
    /// operation. Stored records keep their keys until remapped.
    pub fn update_axis(&mut self, axis: &str, next: &IndexedHierarchy, change: &ChangeSet) -> Result<u64> {
        let tx = self.conn.transaction()?;
        let version = update_axis_in(&tx, &self.cache, axis, next, change)?;
        tx.commit()?;
        self.cache.borrow_mut().remove(axis);
        Ok(version)
    }

    /// Rewrites the records of `axis` written under an older catalog version
    /// so they denote the same nodes in the current index. `change` must be
    /// the change set that produced the current index.
    pub fn remap_instances(&mut self, axis: &str, change: &ChangeSet) -> Result<RemapReport> {
        let state = self.axis(axis)?;
        if state.index.version() != change.to_version {
            return Err(StoreError::VersionMismatch {
                axis: axis.to_string(),
                expected: state.index.version(),
                found: change.to_version,
            });
        }
        let tx = self.conn.transaction()?;
        let report = remap_in(&tx, &state, axis, change)?;
        tx.commit()?;
        Ok(report)
    }

    /// [`Store::update_axis`] and [`Store::remap_instances`] in one transaction.
    pub fn apply_maintenance(&mut self, axis: &str, next: &IndexedHierarchy, change: &ChangeSet) -> Result<RemapReport> {
        let tx = self.conn.transaction()?;
        let version = update_axis_in(&tx, &self.cache, axis, next, change)?;
        let state = AxisState::new(next.clone(), version);
        let report = remap_in(&tx, &state, axis, change)?;
        tx.commit()?;
        self.cache.borrow_mut().remove(axis);
        Ok(report)
    }

    /// Deterministic text dump of the catalog.
    pub fn catalog_snapshot(&self) -> Result<String> {
        let mut out = String::new();
        let mut stmt = self.conn.prepare("SELECT axis, version, title, rendered_index FROM axes ORDER BY axis")?;
        let mut rows = stmt.query([])?;
        while let Some(r) = rows.next()? {
            let (a, v, t, idx): (String, i64, Option<String>, String) = (r.get(0)?, r.get(1)?, r.get(2)?, r.get(3)?);
            out.push_str(&format!("axis {a} version {v} title {}\n{idx}", t.unwrap_or_default()));
        }
        let mut stmt = self.conn.prepare("SELECT name, source FROM dconcepts ORDER BY name")?;
        let mut rows = stmt.query([])?;
        while let Some(r) = rows.next()? {
            let (n, s): (String, String) = (r.get(0)?, r.get(1)?);
            out.push_str(&format!("dconcepts {n}\n{s}"));
        }
        Ok(out)
    }

    // ---- d-concepts

    /// Stores a d-concept definition text under `name` after checking it
    /// parses and only uses registered axes.
    pub fn put_dconcepts(&mut self, name: &str, source: &str) -> Result<()> {
        let h = parse_dconcepts(source)?;
        for a in h.axes() {
            if !self.has_axis(&a)? {
                return Err(StoreError::UnknownAxis(a));
            }
        }
        self.conn.execute(
            "INSERT INTO dconcepts (name, source) VALUES (?1, ?2) ON CONFLICT (name) DO UPDATE SET source = ?2",
            params![name, source],
        )?;
        Ok(())
    }

    pub fn get_dconcepts(&self, name: &str) -> Result<String> {
        self.conn
            .query_row("SELECT source FROM dconcepts WHERE name = ?1", [name], |r| r.get(0))
            .optional()?
            .ok_or_else(|| StoreError::UnknownDConcepts(name.to_string()))
    }

    // ---- episodes

    /// Checks an instance against the catalog and fills in its path.
    pub fn prepare_instance(&self, r: &InstanceRecord) -> Result<InstanceRecord> {
        let st = self.axis(&r.axis)?;
        let Some(anchor) = st.path_of(&r.node_key) else {
            return Err(StoreError::InvalidKey { axis: r.axis.clone(), key: r.node_key.clone() });
        };
        let mut out = r.clone();
        out.orphaned = false;
        match &r.path {
            Some(p) if st.resolve(p).as_ref() != Some(&r.node_key) => {
                return Err(StoreError::InvalidPath { axis: r.axis.clone(), key: r.node_key.clone() })
            }
            Some(_) => {}
            None if self.config.store_paths => out.path = Some(anchor),
            None => {}
        }
        Ok(out)
    }

    pub fn put_episode(&mut self, e: &Episode) -> Result<EpisodeKey> {
        if e.instances.is_empty() {
            return Err(StoreError::EmptyEpisode);
        }
        let records: Vec<(InstanceRecord, u64)> = e
            .instances
            .iter()
            .map(|r| Ok((self.prepare_instance(r)?, self.axis(&r.axis)?.version)))
            .collect::<Result<_>>()?;
        let key = e.key();
        let ts = format_ts(&e.timestamp);
        let tx = self.conn.transaction()?;
        let inserted = tx.execute(
            "INSERT OR IGNORE INTO episodes (id, ts, subject, t_label, c_label, l_label) VALUES (?1, ?2, ?3, ?4, ?5, ?6)",
            params![e.id, ts, e.subject, e.meta.time, e.meta.content, e.meta.localization],
        )?;
        if inserted == 0 {
            return Err(StoreError::DuplicateEpisode(key));
        }
        for (r, version) in records {
            let path = r.path.as_ref().map(serde_json::to_string).transpose()?;
            tx.execute(
                "INSERT INTO instances (episode_id, ts, axis, node_key, key_len, polarity, value, path_json, axis_version)
                 VALUES (?1, ?2, ?3, ?4, ?5, ?6, ?7, ?8, ?9)",
                params![
                    e.id,
                    ts,
                    r.axis,
                    r.node_key.to_string(),
                    r.node_key.len() as i64,
                    r.polarity.as_str(),
                    r.value,
                    path,
                    version as i64
                ],
            )?;
        }
        tx.commit()?;
        Ok(key)
    }

    pub fn get_episode(&self, key: &EpisodeKey) -> Result<Option<Episode>> {
        let row = self
            .conn
            .query_row(
                "SELECT subject, t_label, c_label, l_label FROM episodes WHERE id = ?1 AND ts = ?2",
                params![key.id, format_ts(&key.ts)],
                |r| Ok((r.get::<_, String>(0)?, r.get(1)?, r.get(2)?, r.get(3)?)),
            )
            .optional()?;
        let Some((subject, time, content, localization)) = row else { return Ok(None) };
        let mut stmt = self.conn.prepare_cached(
            "SELECT axis, node_key, polarity, value, path_json, orphaned FROM instances
             WHERE episode_id = ?1 AND ts = ?2 ORDER BY rowid",
        )?;
        let rows = stmt.query_map(params![key.id, format_ts(&key.ts)], raw_instance)?;
        let instances = rows.map(|r| decode_instance(r?)).collect::<Result<Vec<_>>>()?;
        Ok(Some(Episode {
            id: key.id.clone(),
            timestamp: key.ts,
            subject,
            instances,
            meta: EpisodeMeta { time, content, localization },
        }))
    }

    /// Every episode with this id, oldest first.
    pub fn episodes_with_id(&self, id: &str) -> Result<Vec<Episode>> {
        let mut stmt = self.conn.prepare("SELECT ts FROM episodes WHERE id = ?1 ORDER BY ts")?;
        let stamps: Vec<String> = stmt.query_map([id], |r| r.get(0))?.collect::<Result<_, _>>()?;
        stamps
            .into_iter()
            .map(|ts| {
                let key = EpisodeKey { id: id.to_string(), ts: parse_ts(&ts)? };
                self.get_episode(&key)?.ok_or(StoreError::UnknownEpisode(key))
            })
            .collect()
    }

    pub fn episode_keys(&self) -> Result<Vec<EpisodeKey>> {
        let mut stmt = self.conn.prepare("SELECT id, ts FROM episodes ORDER BY id, ts")?;
        let rows = stmt.query_map([], |r| Ok((r.get::<_, String>(0)?, r.get::<_, String>(1)?)))?;
        rows.map(|r| {
            let (id, ts) = r?;
            Ok(EpisodeKey { id, ts: parse_ts(&ts)? })
        })
        .collect()
    }

    /// All stored records, orphaned ones included, in insertion order.
    pub fn all_records(&self) -> Result<Vec<(EpisodeKey, InstanceRecord)>> {
        self.records_where("1 = 1", params![])
    }

    pub fn orphans(&self, axis: &str) -> Result<Vec<(EpisodeKey, InstanceRecord)>> {
        self.records_where("axis = ?1 AND orphaned = 1", params![axis])
    }

    fn records_where(&self, cond: &str, args: &[&dyn rusqlite::ToSql]) -> Result<Vec<(EpisodeKey, InstanceRecord)>> {
        let sql = format!(
            "SELECT episode_id, ts, axis, node_key, polarity, value, path_json, orphaned FROM instances WHERE {cond} ORDER BY rowid"
        );
        let mut stmt = self.conn.prepare_cached(&sql)?;
        let rows = stmt.query_map(args, |r| Ok((r.get::<_, String>(0)?, r.get::<_, String>(1)?, raw_instance_at(r, 2)?)))?;
        rows.map(|row| {
            let (id, ts, raw) = row?;
            Ok((EpisodeKey { id, ts: parse_ts(&ts)? }, decode_instance(raw)?))
        })
        .collect()
    }

    // ---- queries

    /// Non-orphaned records on `axis` whose key `k` partially unifies into.
    pub fn query_by_key(&self, axis: &str, k: &Key) -> Result<Vec<(EpisodeKey, InstanceRecord)>> {
        if !self.has_axis(axis)? {
            return Err(StoreError::UnknownAxis(axis.to_string()));
        }
        let candidates =
            self.records_where("axis = ?1 AND key_len >= ?2 AND orphaned = 0", params![axis, k.len() as i64])?;
        Ok(candidates.into_iter().filter(|(_, r)| partially_unifiable(k, &r.node_key)).collect())
    }

    /// Walks the stored parent map upwards from `node_key` looking for a key
    /// that is an instance of `concept_key`.
    pub fn ancestor_check(&self, axis: &str, node_key: &Key, concept_key: &Key) -> Result<bool> {
        let st = self.axis(axis)?;
        if st.concept_with_key(concept_key).is_none() {
            return Err(StoreError::UnknownKey { axis: axis.to_string(), key: concept_key.clone(), what: "concept" });
        }
        let mut stmt = self.conn.prepare_cached("SELECT parent_key FROM nodes WHERE axis = ?1 AND node_key = ?2")?;
        let mut current = Some(node_key.clone());
        let mut first = true;
        while let Some(k) = current {
            let parent: Option<Option<String>> =
                stmt.query_row(params![axis, k.to_string()], |r| r.get(0)).optional()?;
            let Some(parent) = parent else {
                if first {
                    return Err(StoreError::UnknownKey { axis: axis.to_string(), key: k, what: "node" });
                }
                return Err(StoreError::Corrupt(format!("dangling parent {k} on axis {axis}")));
            };
            first = false;
            if is_instance(&k, concept_key) {
                return Ok(true);
            }
            current = parent.map(|p| parse_key(&p)).transpose()?;
        }
        Ok(false)
    }

    /// Episodes whose affirmed bindings satisfy at least one descriptor.
    pub fn query_multiaxial(&self, expr: &MultiaxialExpression) -> Result<Vec<EpisodeKey>> {
        let axes: BTreeSet<&str> =
            expr.descriptors.iter().flat_map(|d| d.bindings().iter().map(|b| b.axis.as_str())).collect();
        for a in &axes {
            if !self.has_axis(a)? {
                return Err(StoreError::UnknownAxis(a.to_string()));
            }
        }
        let mut situations: BTreeMap<EpisodeKey, Vec<semindex_core::AxisBinding>> = BTreeMap::new();
        for a in axes {
            for (key, r) in self.records_where("axis = ?1 AND orphaned = 0 AND polarity = 'affirmed'", params![a])? {
                situations.entry(key).or_default().push(semindex_core::AxisBinding::new(&r.axis, r.node_key));
            }
        }
        Ok(situations
            .into_iter()
            .filter(|(_, b)| expression_matches(expr, &semindex_core::Situation::new(b.iter().cloned())))
            .map(|(k, _)| k)
            .collect())
    }
}

type RawInstance = (String, String, String, Option<String>, Option<String>, bool);

fn raw_instance(r: &rusqlite::Row<'_>) -> rusqlite::Result<RawInstance> {
    raw_instance_at(r, 0)
}

fn raw_instance_at(r: &rusqlite::Row<'_>, o: usize) -> rusqlite::Result<RawInstance> {
    Ok((r.get(o)?, r.get(o + 1)?, r.get(o + 2)?, r.get(o + 3)?, r.get(o + 4)?, r.get::<_, i64>(o + 5)? != 0))
}

fn decode_instance((axis, key, polarity, value, path, orphaned): RawInstance) -> Result<InstanceRecord> {
    Ok(InstanceRecord {
        axis,
        node_key: parse_key(&key)?,
        polarity: Polarity::parse(&polarity).ok_or_else(|| StoreError::Corrupt(format!("polarity {polarity}")))?,
        value,
        path: path.map(|p| serde_json::from_str(&p)).transpose()?,
        orphaned,
    })
}

fn write_axis(tx: &Transaction<'_>, axis: &str, index: &IndexedHierarchy, version: u64) -> Result<()> {
    tx.execute(
        "INSERT INTO axes (axis, version, title, rendered_index, state_json) VALUES (?1, ?2, ?3, ?4, ?5)
         ON CONFLICT (axis) DO UPDATE SET version = ?2, title = ?3, rendered_index = ?4, state_json = ?5",
        params![
            axis,
            version as i64,
            index.hierarchy().title,
            semindex_core::indexer::render_indexed(index),
            serde_json::to_string(index)?
        ],
    )?;
    tx.execute("DELETE FROM nodes WHERE axis = ?1", [axis])?;
    let h = index.hierarchy();
    let mut stmt =
        tx.prepare("INSERT INTO nodes (axis, node_key, concept, parent_key, depth) VALUES (?1, ?2, ?3, ?4, ?5)")?;
    for n in h.preorder() {
        let key = index.node_key(n).ok_or_else(|| StoreError::Corrupt(format!("node {n} has no key")))?;
        let parent = h.node(n).and_then(|x| x.parent).and_then(|p| index.node_key(p)).map(Key::to_string);
        let depth = h.root_path(n).len() as i64 - 1;
        stmt.execute(params![axis, key.to_string(), h.concept_of(n).as_str(), parent, depth])?;
    }
    Ok(())
}

fn update_axis_in(
    tx: &Transaction<'_>,
    cache: &RefCell<HashMap<String, Arc<AxisState>>>,
    axis: &str,
    next: &IndexedHierarchy,
    change: &ChangeSet,
) -> Result<u64> {
    let row: Option<(i64, String)> = tx
        .query_row("SELECT version, state_json FROM axes WHERE axis = ?1", [axis], |r| Ok((r.get(0)?, r.get(1)?)))
        .optional()?;
    let (version, json) = row.ok_or_else(|| StoreError::UnknownAxis(axis.to_string()))?;
    let current: IndexedHierarchy = serde_json::from_str(&json)?;
    if current.version() != change.from_version || next.version() != change.to_version {
        return Err(StoreError::VersionMismatch {
            axis: axis.to_string(),
            expected: current.version(),
            found: change.from_version,
        });
    }
    let version = version as u64 + 1;
    write_axis(tx, axis, next, version)?;
    cache.borrow_mut().remove(axis);
    Ok(version)
}

fn remap_in(tx: &Transaction<'_>, state: &AxisState, axis: &str, change: &ChangeSet) -> Result<RemapReport> {
    let mut report = RemapReport::default();
    let rows: Vec<(i64, String, Option<String>)> = {
        let mut stmt = tx.prepare(
            "SELECT rowid, node_key, path_json FROM instances WHERE axis = ?1 AND orphaned = 0 AND axis_version < ?2",
        )?;
        let rows = stmt.query_map(params![axis, state.version as i64], |r| Ok((r.get(0)?, r.get(1)?, r.get(2)?)))?;
        rows.collect::<Result<_, _>>()?
    };
    let mut update =
        tx.prepare("UPDATE instances SET node_key = ?2, key_len = ?3, axis_version = ?4 WHERE rowid = ?1")?;
    let mut orphan = tx.prepare("UPDATE instances SET orphaned = 1, axis_version = ?2 WHERE rowid = ?1")?;
    for (rowid, key, path) in rows {
        let old = parse_key(&key)?;
        let path: Option<InstancePath> = path.map(|p| serde_json::from_str(&p)).transpose()?;
        let new = match &path {
            Some(p) => state.resolve(p),
            // without a path a key survives only if nothing it denoted moved
            None if change.retired_keys.contains(&old) => None,
            None => state.path_of(&old).map(|_| old.clone()),
        };
        match new {
            Some(k) if k == old => {
                update.execute(params![rowid, key, old.len() as i64, state.version as i64])?;
                report.unchanged += 1;
            }
            Some(k) => {
                update.execute(params![rowid, k.to_string(), k.len() as i64, state.version as i64])?;
                report.rewritten += 1;
            }
            None => {
                orphan.execute(params![rowid, state.version as i64])?;
                report.orphaned += 1;
            }
        }
    }
    Ok(report)
}
