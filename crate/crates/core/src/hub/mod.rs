//! The registry: services, their append-only spec history, links between
//! them, system-wide information and the aggregated views built on top.

mod diff;
mod report;
mod store;
mod system;

use std::collections::BTreeMap;
use std::sync::{Arc, RwLock, RwLockReadGuard, RwLockWriteGuard};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::aggregate::{
    aggregate, purpose_index, recipient_index, AggregatedDatum, AliasTable, IndexEntry,
};
use crate::diagnostics::Diagnostic;
use crate::flow::{FlowEdge, FlowError, FlowGraph};
use crate::openapi::{parse_document, OpenApiDocument, SourceFormat};
use crate::resolver::{analyze, validate_service, EffectiveProperties};

pub use diff::{diff_documents, PropertyChange, SpecDiff};
pub use report::{
    build_report, FlowView, IndicatorSummary, ProvisionMandatory, Reach, RowEntry,
    ServiceLevelSection, ServiceSummary, Specified, SystemSection, TransparencyReport,
};
pub use store::{
    DirStore, MemoryStore, Origin, ServiceMeta, ServiceRecord, SpecVersion, Store, StoreError,
    VersionSource,
};
pub use system::{Contact, FieldError, LegalBasis, LegalBasisKind, SystemWideInfo};

/// Root extension naming who operates a service: `internal` or `external`.
pub const ORIGIN_KEY: &str = "x-tira-origin";

#[derive(Debug, Error)]
pub enum HubError {
    #[error("invalid service name: {0}")]
    InvalidName(String),
    #[error("service `{0}` is already registered")]
    Conflict(String),
    #[error("no service `{0}`")]
    UnknownService(String),
    #[error("service `{service}` has no version {version}")]
    UnknownVersion { service: String, version: u32 },
    #[error("version range {from}..{to} is empty")]
    InvalidRange { from: u32, to: u32 },
    #[error("OpenAPI document cannot be parsed")]
    InvalidSpec(Vec<Diagnostic>),
    #[error("system-wide information is invalid")]
    InvalidSystemInfo(Vec<FieldError>),
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error(transparent)]
    Store(#[from] StoreError),
}

pub type Clock = Arc<dyn Fn() -> DateTime<Utc> + Send + Sync>;

/// Lowercase ASCII id with runs of other characters folded into `-`.
pub fn slugify(name: &str) -> String {
    let mut out = String::new();
    for c in name.trim().chars() {
        if c.is_ascii_alphanumeric() {
            out.push(c.to_ascii_lowercase());
        } else if !out.ends_with('-') {
            out.push('-');
        }
    }
    out.trim_matches('-').to_owned()
}

pub fn content_hash(doc: &OpenApiDocument) -> String {
    hex::encode(Sha256::digest(doc.to_canonical_yaml().as_bytes()))
}

/// Origin declared inside the document, if any.
pub fn origin_hint(doc: &OpenApiDocument) -> Option<Origin> {
    match doc.root_extensions.get(ORIGIN_KEY)?.as_str()? {
        "external" => Some(Origin::External),
        "internal" => Some(Origin::Internal),
        _ => None,
    }
}

fn parse_spec(text: &str) -> Result<OpenApiDocument, HubError> {
    parse_document(text, SourceFormat::Auto).map_err(HubError::InvalidSpec)
}

#[derive(Clone, Debug, Deserialize)]
pub struct NewService {
    pub name: String,
    #[serde(default)]
    pub origin: Option<Origin>,
    pub spec_text: String,
    #[serde(default)]
    pub repo_url: Option<String>,
    #[serde(default)]
    pub spec_path: Option<String>,
    #[serde(skip, default = "manual")]
    pub source: VersionSource,
}

fn manual() -> VersionSource {
    VersionSource::ManualUpload
}

impl NewService {
    pub fn new(name: impl Into<String>, spec_text: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            origin: None,
            spec_text: spec_text.into(),
            repo_url: None,
            spec_path: None,
            source: VersionSource::ManualUpload,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum VersionOutcome {
    Appended {
        version: SpecVersion,
        diff: SpecDiff,
    },
    Unchanged {
        version: u32,
    },
}

/// Everything the service detail view shows.
#[derive(Clone, Debug, Serialize)]
pub struct ServiceDetail {
    pub record: ServiceRecord,
    pub versions: Vec<SpecVersion>,
    pub indicators: Vec<EffectiveProperties>,
    pub diagnostics: Vec<Diagnostic>,
}

struct Head {
    doc: OpenApiDocument,
    effective: Vec<EffectiveProperties>,
}

impl Head {
    fn new(doc: OpenApiDocument) -> Self {
        let effective = analyze(&doc);
        Self { doc, effective }
    }
}

struct Entry {
    meta: ServiceMeta,
    head: Head,
}

#[derive(Default)]
struct State {
    services: BTreeMap<String, Entry>,
    links: Vec<FlowEdge>,
    system: Option<SystemWideInfo>,
    aliases: AliasTable,
}

impl State {
    fn entry(&self, id: &str) -> Result<&Entry, HubError> {
        self.services
            .get(id)
            .ok_or_else(|| HubError::UnknownService(id.to_owned()))
    }

    fn graph(&self) -> FlowGraph {
        FlowGraph::new(self.services.keys().cloned(), self.links.iter().cloned())
            .expect("stored links only reference registered services")
    }

    fn heads(&self) -> Vec<(ServiceRecord, Vec<EffectiveProperties>)> {
        self.services
            .values()
            .map(|e| (e.meta.record.clone(), e.head.effective.clone()))
            .collect()
    }

    fn data(&self) -> Vec<AggregatedDatum> {
        let inputs: Vec<(String, Vec<EffectiveProperties>)> = self
            .services
            .values()
            .map(|e| (e.meta.record.id.clone(), e.head.effective.clone()))
            .collect();
        aggregate(&inputs, &self.aliases)
    }
}

/// Mutations are serialized by one write lock, so every service sees its
/// changes totally ordered; readers work on a consistent snapshot.
pub struct Hub {
    store: Box<dyn Store>,
    state: RwLock<State>,
    clock: Clock,
}

impl Hub {
    /// Loads all persisted state and re-parses each service's head version.
    pub fn open(store: impl Store + 'static) -> Result<Self, HubError> {
        let mut state = State {
            links: store.load_links()?,
            system: store.load_system_info()?,
            aliases: store.load_aliases()?,
            ..State::default()
        };
        for meta in store.load_services()? {
            let Some(last) = meta.versions.last() else {
                continue;
            };
            let doc = parse_spec(&store.get_blob(&last.content_hash)?)?;
            state.services.insert(
                meta.record.id.clone(),
                Entry {
                    meta,
                    head: Head::new(doc),
                },
            );
        }
        Ok(Self {
            store: Box::new(store),
            state: RwLock::new(state),
            clock: Arc::new(Utc::now),
        })
    }

    pub fn in_memory() -> Self {
        Self::open(MemoryStore::new()).expect("memory store cannot fail")
    }

    pub fn with_clock(mut self, clock: Clock) -> Self {
        self.clock = clock;
        self
    }

    fn read(&self) -> RwLockReadGuard<'_, State> {
        self.state.read().unwrap_or_else(|e| e.into_inner())
    }

    fn write(&self) -> RwLockWriteGuard<'_, State> {
        self.state.write().unwrap_or_else(|e| e.into_inner())
    }

    pub fn register_service(
        &self,
        req: NewService,
    ) -> Result<(ServiceRecord, SpecVersion), HubError> {
        let id = slugify(&req.name);
        if id.is_empty() {
            return Err(HubError::InvalidName(req.name));
        }
        let doc = parse_spec(&req.spec_text)?;
        let mut state = self.write();
        if state.services.contains_key(&id) {
            return Err(HubError::Conflict(id));
        }
        let hash = content_hash(&doc);
        let head = Head::new(doc);
        let version = SpecVersion {
            service_id: id.clone(),
            version_number: 1,
            content_hash: hash.clone(),
            received_at: (self.clock)(),
            source: req.source,
        };
        let record = ServiceRecord {
            id: id.clone(),
            name: req.name.trim().to_owned(),
            origin: req
                .origin
                .or_else(|| origin_hint(&head.doc))
                .unwrap_or_default(),
            repo_url: req.repo_url,
            spec_path: req.spec_path,
            current_version: Some(1),
            processes_personal_data: !head.effective.is_empty(),
        };
        let meta = ServiceMeta {
            record: record.clone(),
            versions: vec![version.clone()],
        };
        self.store.put_blob(&hash, &req.spec_text)?;
        self.store.save_service(&meta)?;
        state.services.insert(id, Entry { meta, head });
        tracing::info!(service = %record.id, "registered service");
        Ok((record, version))
    }

    /// Appends a version unless the canonical content equals the head.
    pub fn add_spec_version(
        &self,
        id: &str,
        spec_text: &str,
        source: VersionSource,
    ) -> Result<VersionOutcome, HubError> {
        let doc = parse_spec(spec_text)?;
        let hash = content_hash(&doc);
        let mut state = self.write();
        let entry = state
            .services
            .get_mut(id)
            .ok_or_else(|| HubError::UnknownService(id.to_owned()))?;
        let last = entry.meta.versions.last().expect("services have a version");
        if last.content_hash == hash {
            return Ok(VersionOutcome::Unchanged {
                version: last.version_number,
            });
        }
        let version = SpecVersion {
            service_id: id.to_owned(),
            version_number: last.version_number + 1,
            content_hash: hash.clone(),
            received_at: (self.clock)(),
            source,
        };
        let head = Head::new(doc);
        let diff = diff_documents(&entry.head.doc, &head.doc);
        let mut meta = entry.meta.clone();
        meta.versions.push(version.clone());
        meta.record.current_version = Some(version.version_number);
        meta.record.processes_personal_data = !head.effective.is_empty();
        self.store.put_blob(&hash, spec_text)?;
        self.store.save_service(&meta)?;
        entry.meta = meta;
        entry.head = head;
        Ok(VersionOutcome::Appended { version, diff })
    }

    pub fn services(&self) -> Vec<ServiceRecord> {
        self.read()
            .services
            .values()
            .map(|e| e.meta.record.clone())
            .collect()
    }

    pub fn service(&self, id: &str) -> Result<ServiceDetail, HubError> {
        let state = self.read();
        let e = state.entry(id)?;
        Ok(ServiceDetail {
            record: e.meta.record.clone(),
            versions: e.meta.versions.clone(),
            indicators: e.head.effective.clone(),
            diagnostics: validate_service(&e.head.doc),
        })
    }

    /// The service created for a spec file of a repository, if any.
    pub fn find_by_repo(&self, repo_url: &str, spec_path: &str) -> Option<String> {
        self.read()
            .services
            .values()
            .find(|e| {
                e.meta.record.repo_url.as_deref() == Some(repo_url)
                    && e.meta.record.spec_path.as_deref() == Some(spec_path)
            })
            .map(|e| e.meta.record.id.clone())
    }

    pub fn contains(&self, id: &str) -> bool {
        self.read().services.contains_key(id)
    }

    /// Stored text of version `n`, as it was uploaded.
    pub fn spec_text(&self, id: &str, n: u32) -> Result<String, HubError> {
        let hash = {
            let state = self.read();
            let e = state.entry(id)?;
            e.meta
                .versions
                .iter()
                .find(|v| v.version_number == n)
                .map(|v| v.content_hash.clone())
                .ok_or_else(|| HubError::UnknownVersion {
                    service: id.to_owned(),
                    version: n,
                })?
        };
        Ok(self.store.get_blob(&hash)?)
    }

    pub fn diff_versions(&self, id: &str, from: u32, to: u32) -> Result<SpecDiff, HubError> {
        if from > to {
            return Err(HubError::InvalidRange { from, to });
        }
        let a = parse_spec(&self.spec_text(id, from)?)?;
        let b = parse_spec(&self.spec_text(id, to)?)?;
        Ok(diff_documents(&a, &b))
    }

    /// Replaces the whole link set.
    pub fn set_links(&self, edges: Vec<FlowEdge>) -> Result<FlowView, HubError> {
        let mut state = self.write();
        let graph = FlowGraph::new(state.services.keys().cloned(), edges)?;
        self.store.save_links(&graph.edges)?;
        state.links = graph.edges.clone();
        Ok(FlowView::new(graph))
    }

    pub fn flow(&self) -> FlowView {
        FlowView::new(self.read().graph())
    }

    pub fn set_system_info(&self, info: SystemWideInfo) -> Result<SystemWideInfo, HubError> {
        info.validate().map_err(HubError::InvalidSystemInfo)?;
        let mut state = self.write();
        self.store.save_system_info(&info)?;
        state.system = Some(info.clone());
        Ok(info)
    }

    pub fn system_info(&self) -> Option<SystemWideInfo> {
        self.read().system.clone()
    }

    pub fn set_aliases(&self, aliases: AliasTable) -> Result<AliasTable, HubError> {
        let mut state = self.write();
        self.store.save_aliases(&aliases)?;
        state.aliases = aliases.clone();
        Ok(aliases)
    }

    pub fn aliases(&self) -> AliasTable {
        self.read().aliases.clone()
    }

    pub fn data(&self) -> Vec<AggregatedDatum> {
        self.read().data()
    }

    /// Case-insensitive lookup that also honours datum aliases.
    pub fn datum(&self, name: &str) -> Option<AggregatedDatum> {
        let state = self.read();
        let wanted = state.aliases.datum(name).to_lowercase();
        state
            .data()
            .into_iter()
            .find(|d| d.datum_name.to_lowercase() == wanted)
    }

    pub fn purposes(&self) -> BTreeMap<String, IndexEntry> {
        let state = self.read();
        purpose_index(&state.data(), &state.aliases)
    }

    pub fn recipients(&self) -> BTreeMap<String, IndexEntry> {
        let state = self.read();
        recipient_index(&state.data(), &state.aliases)
    }

    pub fn report(&self) -> TransparencyReport {
        let state = self.read();
        build_report(
            (self.clock)(),
            state.system.as_ref(),
            &state.heads(),
            state.graph(),
            &state.aliases,
        )
    }

    pub fn report_json(&self) -> Value {
        serde_json::to_value(self.report()).expect("reports serialize")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MARKED: &str = "openapi: 3.0.3\ninfo: {title: A, version: '1'}\npaths: {}\ncomponents:\n  schemas:\n    Weight:\n      x-tira: true\n      type: object\n      properties:\n        weight: {type: number}\n";
    const PLAIN: &str = "openapi: 3.0.3\ninfo: {title: B, version: '1'}\npaths: {}\n";

    #[test]
    fn slugs() {
        assert_eq!(slugify("Main Application"), "main-application");
        assert_eq!(slugify("  device_API!! "), "device-api");
        assert_eq!(slugify("***"), "");
    }

    #[test]
    fn register_and_conflict() {
        let hub = Hub::in_memory();
        let (rec, v) = hub
            .register_service(NewService::new("Main App", MARKED))
            .unwrap();
        assert_eq!(rec.id, "main-app");
        assert!(rec.processes_personal_data);
        assert_eq!(v.version_number, 1);
        let err = hub
            .register_service(NewService::new("main app", PLAIN))
            .unwrap_err();
        assert!(matches!(err, HubError::Conflict(id) if id == "main-app"));
    }

    #[test]
    fn unparsable_spec_is_rejected_with_diagnostics() {
        let hub = Hub::in_memory();
        let err = hub
            .register_service(NewService::new("x", "openapi: ["))
            .unwrap_err();
        let HubError::InvalidSpec(d) = err else {
            panic!()
        };
        assert!(!d.is_empty());
        assert!(hub.services().is_empty());
    }

    #[test]
    fn no_personal_data_service_is_listed_separately() {
        let hub = Hub::in_memory();
        hub.register_service(NewService::new("plain", PLAIN))
            .unwrap();
        let r = hub.report();
        assert_eq!(r.no_personal_data, ["plain"]);
        assert!(!r.services[0].processes_personal_data);
    }

    #[test]
    fn unchanged_content_appends_nothing() {
        let hub = Hub::in_memory();
        hub.register_service(NewService::new("a", MARKED)).unwrap();
        let reformatted = MARKED.replace("{type: number}", "\n          type: number");
        let out = hub
            .add_spec_version("a", &reformatted, VersionSource::ManualUpload)
            .unwrap();
        assert_eq!(out, VersionOutcome::Unchanged { version: 1 });
        assert_eq!(hub.service("a").unwrap().versions.len(), 1);
    }

    #[test]
    fn new_version_carries_diff_and_updates_flag() {
        let hub = Hub::in_memory();
        hub.register_service(NewService::new("a", MARKED)).unwrap();
        let out = hub
            .add_spec_version("a", PLAIN, VersionSource::Webhook)
            .unwrap();
        let VersionOutcome::Appended { version, diff } = out else {
            panic!()
        };
        assert_eq!(version.version_number, 2);
        assert_eq!(diff.indicators_removed.len(), 1);
        assert!(!hub.services()[0].processes_personal_data);
        assert_eq!(hub.spec_text("a", 1).unwrap(), MARKED);
        assert!(hub.diff_versions("a", 1, 1).unwrap().is_empty());
        assert!(matches!(
            hub.diff_versions("a", 1, 3),
            Err(HubError::UnknownVersion { version: 3, .. })
        ));
    }

    #[test]
    fn links_require_registered_endpoints() {
        let hub = Hub::in_memory();
        hub.register_service(NewService::new("a", PLAIN)).unwrap();
        let edge = FlowEdge {
            sender: "a".into(),
            receiver: "ghost".into(),
            datum_names: Default::default(),
        };
        assert!(matches!(hub.set_links(vec![edge]), Err(HubError::Flow(_))));
        assert!(hub.flow().graph.edges.is_empty());
    }

    #[test]
    fn origin_comes_from_document_when_not_given() {
        let hub = Hub::in_memory();
        let ext = PLAIN.replace("paths: {}", "x-tira-origin: external\npaths: {}");
        let (rec, _) = hub
            .register_service(NewService::new("social", ext))
            .unwrap();
        assert_eq!(rec.origin, Origin::External);
    }
}
