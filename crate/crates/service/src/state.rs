use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, RwLock};

use cfkit_core::backends::Backends;
use cfkit_core::corpus::parse_conllu_str;
use cfkit_core::config::LoadError;
use cfkit_core::{ClassifierConfig, Config, Dataset};
use thiserror::Error;

use crate::error::ApiError;
use crate::session::AnalysisSession;
use crate::store::{valid_id, Store, StoreError};

#[derive(Debug, Error)]
pub enum OpenError {
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Config(#[from] LoadError),
}

/// Current state of one session plus the lock serializing its mutations.
pub struct SessionEntry {
    pub write: tokio::sync::Mutex<()>,
    state: RwLock<Arc<AnalysisSession>>,
    deleted: AtomicBool,
}

impl SessionEntry {
    fn new(s: AnalysisSession) -> Self {
        SessionEntry { write: tokio::sync::Mutex::new(()), state: RwLock::new(Arc::new(s)), deleted: AtomicBool::new(false) }
    }

    pub fn snapshot(&self) -> Arc<AnalysisSession> {
        self.state.read().unwrap_or_else(|e| e.into_inner()).clone()
    }

    fn replace(&self, s: AnalysisSession) {
        *self.state.write().unwrap_or_else(|e| e.into_inner()) = Arc::new(s);
    }

    pub fn is_deleted(&self) -> bool {
        self.deleted.load(Ordering::SeqCst)
    }
}

pub struct Inner {
    pub store: Store,
    pub config: Config,
    pub classifier: ClassifierConfig,
    pub backends: Backends,
    sessions: RwLock<HashMap<String, Arc<SessionEntry>>>,
    datasets: RwLock<HashMap<PathBuf, Arc<Dataset>>>,
}

#[derive(Clone)]
pub struct AppState(pub Arc<Inner>);

impl std::ops::Deref for AppState {
    type Target = Inner;
    fn deref(&self) -> &Inner {
        &self.0
    }
}

impl AppState {
    /// Opens the data directory and loads every persisted session.
    pub fn open(data_dir: impl Into<PathBuf>, config: Config, backends: Backends) -> Result<Self, OpenError> {
        let store = Store::open(data_dir)?;
        let classifier = config.classifier()?;
        let sessions = store
            .load_all()?
            .into_iter()
            .map(|s| (s.id.clone(), Arc::new(SessionEntry::new(s))))
            .collect();
        tracing::info!(dir = %store.root().display(), "session store opened");
        Ok(AppState(Arc::new(Inner {
            store,
            config,
            classifier,
            backends,
            sessions: RwLock::new(sessions),
            datasets: RwLock::new(HashMap::new()),
        })))
    }

    pub fn entry(&self, id: &str) -> Result<Arc<SessionEntry>, ApiError> {
        let sessions = self.sessions.read().unwrap_or_else(|e| e.into_inner());
        match sessions.get(id) {
            Some(e) if valid_id(id) && !e.is_deleted() => Ok(e.clone()),
            _ => Err(ApiError::not_found("session", id)),
        }
    }

    /// Snapshots of all sessions, ordered by id.
    pub fn list(&self) -> Vec<Arc<AnalysisSession>> {
        let sessions = self.sessions.read().unwrap_or_else(|e| e.into_inner());
        let mut out: Vec<_> = sessions.values().filter(|e| !e.is_deleted()).map(|e| e.snapshot()).collect();
        out.sort_by(|a, b| a.id.cmp(&b.id));
        out
    }

    /// Loads and caches a dataset by path.
    pub fn dataset(&self, path: &Path) -> Result<Arc<Dataset>, StoreError> {
        if let Some(ds) = self.datasets.read().unwrap_or_else(|e| e.into_inner()).get(path) {
            return Ok(ds.clone());
        }
        let text = std::fs::read_to_string(path).map_err(|e| StoreError::Dataset { path: path.into(), message: e.to_string() })?;
        let ds = Arc::new(parse_conllu_str(&text).map_err(|e| StoreError::Dataset { path: path.into(), message: e.to_string() })?);
        self.datasets.write().unwrap_or_else(|e| e.into_inner()).insert(path.to_path_buf(), ds.clone());
        Ok(ds)
    }

    /// Persists a new session, then publishes it.
    pub fn insert(&self, s: AnalysisSession) -> Result<(), StoreError> {
        self.store.save(&s)?;
        let id = s.id.clone();
        self.sessions.write().unwrap_or_else(|e| e.into_inner()).insert(id, Arc::new(SessionEntry::new(s)));
        Ok(())
    }

    /// Persists an updated session, then publishes it. Call with the entry's write lock held.
    pub fn commit(&self, entry: &SessionEntry, s: AnalysisSession) -> Result<(), ApiError> {
        if entry.is_deleted() {
            return Err(ApiError::not_found("session", &s.id));
        }
        self.store.save(&s)?;
        entry.replace(s);
        Ok(())
    }

    /// Call with the entry's write lock held.
    pub fn remove(&self, entry: &SessionEntry, id: &str) -> Result<(), StoreError> {
        entry.deleted.store(true, Ordering::SeqCst);
        self.store.remove(id)?;
        self.sessions.write().unwrap_or_else(|e| e.into_inner()).remove(id);
        Ok(())
    }
}
