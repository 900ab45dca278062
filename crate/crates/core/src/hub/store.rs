use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Write as _};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use chrono::{DateTime, Utc};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::aggregate::AliasTable;
use crate::flow::FlowEdge;

use super::system::SystemWideInfo;

#[derive(
    Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    #[default]
    Internal,
    External,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VersionSource {
    ManualUpload,
    Webhook,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ServiceRecord {
    pub id: String,
    pub name: String,
    pub origin: Origin,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub repo_url: Option<String>,
    /// Repository path of the spec file, for services created by pushes.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spec_path: Option<String>,
    pub current_version: Option<u32>,
    pub processes_personal_data: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpecVersion {
    pub service_id: String,
    pub version_number: u32,
    pub content_hash: String,
    pub received_at: DateTime<Utc>,
    pub source: VersionSource,
}

/// Everything persisted about one service except the spec texts, which
/// live in the blob area under their content hash.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ServiceMeta {
    pub record: ServiceRecord,
    pub versions: Vec<SpecVersion>,
}

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("storage I/O failed at {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("stored file {path} is corrupt: {message}")]
    Corrupt { path: PathBuf, message: String },
    #[error("blob {0} is missing")]
    MissingBlob(String),
}

pub trait Store: Send + Sync {
    fn load_services(&self) -> Result<Vec<ServiceMeta>, StoreError>;
    fn save_service(&self, meta: &ServiceMeta) -> Result<(), StoreError>;
    /// Blobs are immutable; storing an existing hash again is a no-op.
    fn put_blob(&self, hash: &str, text: &str) -> Result<(), StoreError>;
    fn get_blob(&self, hash: &str) -> Result<String, StoreError>;
    fn load_links(&self) -> Result<Vec<FlowEdge>, StoreError>;
    fn save_links(&self, edges: &[FlowEdge]) -> Result<(), StoreError>;
    fn load_system_info(&self) -> Result<Option<SystemWideInfo>, StoreError>;
    fn save_system_info(&self, info: &SystemWideInfo) -> Result<(), StoreError>;
    fn load_aliases(&self) -> Result<AliasTable, StoreError>;
    fn save_aliases(&self, aliases: &AliasTable) -> Result<(), StoreError>;
}

#[derive(Default)]
struct Memory {
    services: BTreeMap<String, ServiceMeta>,
    blobs: BTreeMap<String, String>,
    links: Vec<FlowEdge>,
    system: Option<SystemWideInfo>,
    aliases: AliasTable,
}

#[derive(Default)]
pub struct MemoryStore {
    inner: Mutex<Memory>,
}

impl MemoryStore {
    pub fn new() -> Self {
        Self::default()
    }

    fn with<T>(&self, f: impl FnOnce(&mut Memory) -> T) -> T {
        f(&mut self.inner.lock().unwrap_or_else(|e| e.into_inner()))
    }
}

impl Store for MemoryStore {
    fn load_services(&self) -> Result<Vec<ServiceMeta>, StoreError> {
        Ok(self.with(|m| m.services.values().cloned().collect()))
    }

    fn save_service(&self, meta: &ServiceMeta) -> Result<(), StoreError> {
        self.with(|m| m.services.insert(meta.record.id.clone(), meta.clone()));
        Ok(())
    }

    fn put_blob(&self, hash: &str, text: &str) -> Result<(), StoreError> {
        self.with(|m| {
            m.blobs
                .entry(hash.to_owned())
                .or_insert_with(|| text.to_owned());
        });
        Ok(())
    }

    fn get_blob(&self, hash: &str) -> Result<String, StoreError> {
        self.with(|m| m.blobs.get(hash).cloned())
            .ok_or_else(|| StoreError::MissingBlob(hash.to_owned()))
    }

    fn load_links(&self) -> Result<Vec<FlowEdge>, StoreError> {
        Ok(self.with(|m| m.links.clone()))
    }

    fn save_links(&self, edges: &[FlowEdge]) -> Result<(), StoreError> {
        self.with(|m| m.links = edges.to_vec());
        Ok(())
    }

    fn load_system_info(&self) -> Result<Option<SystemWideInfo>, StoreError> {
        Ok(self.with(|m| m.system.clone()))
    }

    fn save_system_info(&self, info: &SystemWideInfo) -> Result<(), StoreError> {
        self.with(|m| m.system = Some(info.clone()));
        Ok(())
    }

    fn load_aliases(&self) -> Result<AliasTable, StoreError> {
        Ok(self.with(|m| m.aliases.clone()))
    }

    fn save_aliases(&self, aliases: &AliasTable) -> Result<(), StoreError> {
        self.with(|m| m.aliases = aliases.clone());
        Ok(())
    }
}

/// Plain-file store:
///
/// ```text
/// <root>/services/<id>.json
/// <root>/blobs/<sha256>.spec
/// <root>/links.json
/// <root>/system-info.json
/// <root>/aliases.json
/// ```
///
/// Files are replaced by rename, so a crash never leaves half a file.
pub struct DirStore {
    root: PathBuf,
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.to_owned(),
        source,
    }
}

impl DirStore {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let root = root.into();
        for sub in ["services", "blobs"] {
            let dir = root.join(sub);
            fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        }
        Ok(Self { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn write_atomic(&self, path: &Path, bytes: &[u8]) -> Result<(), StoreError> {
        let tmp = path.with_extension("tmp");
        let mut f = fs::File::create(&tmp).map_err(io_err(&tmp))?;
        f.write_all(bytes).map_err(io_err(&tmp))?;
        f.sync_all().map_err(io_err(&tmp))?;
        fs::rename(&tmp, path).map_err(io_err(path))
    }

    fn write_json<T: Serialize + ?Sized>(&self, path: &Path, value: &T) -> Result<(), StoreError> {
        let bytes = serde_json::to_vec_pretty(value).expect("store records serialize");
        self.write_atomic(path, &bytes)
    }

    fn read_json<T: DeserializeOwned>(&self, path: &Path) -> Result<Option<T>, StoreError> {
        match fs::read(path) {
            Ok(bytes) => {
                serde_json::from_slice(&bytes)
                    .map(Some)
                    .map_err(|e| StoreError::Corrupt {
                        path: path.to_owned(),
                        message: e.to_string(),
                    })
            }
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(io_err(path)(e)),
        }
    }

    fn blob_path(&self, hash: &str) -> PathBuf {
        self.root.join("blobs").join(format!("{hash}.spec"))
    }
}

impl Store for DirStore {
    fn load_services(&self) -> Result<Vec<ServiceMeta>, StoreError> {
        let dir = self.root.join("services");
        let mut paths: Vec<PathBuf> = fs::read_dir(&dir)
            .map_err(io_err(&dir))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        paths.sort();
        let mut out = Vec::with_capacity(paths.len());
        for p in paths {
            if let Some(meta) = self.read_json(&p)? {
                out.push(meta);
            }
        }
        Ok(out)
    }

    fn save_service(&self, meta: &ServiceMeta) -> Result<(), StoreError> {
        let path = self
            .root
            .join("services")
            .join(format!("{}.json", meta.record.id));
        self.write_json(&path, meta)
    }

    fn put_blob(&self, hash: &str, text: &str) -> Result<(), StoreError> {
        let path = self.blob_path(hash);
        if path.exists() {
            return Ok(());
        }
        self.write_atomic(&path, text.as_bytes())
    }

    fn get_blob(&self, hash: &str) -> Result<String, StoreError> {
        let path = self.blob_path(hash);
        match fs::read_to_string(&path) {
            Ok(s) => Ok(s),
            Err(e) if e.kind() == io::ErrorKind::NotFound => {
                Err(StoreError::MissingBlob(hash.to_owned()))
            }
            Err(e) => Err(io_err(&path)(e)),
        }
    }

    fn load_links(&self) -> Result<Vec<FlowEdge>, StoreError> {
        Ok(self
            .read_json(&self.root.join("links.json"))?
            .unwrap_or_default())
    }

    fn save_links(&self, edges: &[FlowEdge]) -> Result<(), StoreError> {
        self.write_json(&self.root.join("links.json"), edges)
    }

    fn load_system_info(&self) -> Result<Option<SystemWideInfo>, StoreError> {
        self.read_json(&self.root.join("system-info.json"))
    }

    fn save_system_info(&self, info: &SystemWideInfo) -> Result<(), StoreError> {
        self.write_json(&self.root.join("system-info.json"), info)
    }

    fn load_aliases(&self) -> Result<AliasTable, StoreError> {
        Ok(self
            .read_json(&self.root.join("aliases.json"))?
            .unwrap_or_default())
    }

    fn save_aliases(&self, aliases: &AliasTable) -> Result<(), StoreError> {
        self.write_json(&self.root.join("aliases.json"), aliases)
    }
}
