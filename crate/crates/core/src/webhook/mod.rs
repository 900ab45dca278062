//! Push-event ingestion: spec files changed by a push on the default branch
//! are registered as new services or appended as new versions.

mod adapters;
mod discover;
mod fetch;

use std::collections::{BTreeMap, HashMap};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hub::{slugify, Hub, HubError, NewService, VersionOutcome, VersionSource};

pub use adapters::{adapt_payload, AdapterError, GitHost};
pub use discover::{discover_spec_files, SpecMatcher, DEFAULT_SPEC_GLOBS};
pub use fetch::{ContentFetcher, FetchError, HttpTemplateFetcher, LocalDirFetcher};

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PushEvent {
    pub repo_url: String,
    #[serde(default)]
    pub repo_name: String,
    #[serde(rename = "ref")]
    pub git_ref: String,
    #[serde(default)]
    pub head_commit: String,
    #[serde(default)]
    pub changed_files: Vec<String>,
    /// Spec texts carried in the event itself, keyed by repository path.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inline_specs: Option<BTreeMap<String, String>>,
    /// Reported by most hosts; overrides the configured branch list.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default_branch: Option<String>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EventError {
    #[error("repo_url must not be empty")]
    MissingRepoUrl,
    #[error("inline spec `{0}` is not among changed_files")]
    InlineNotChanged(String),
}

impl PushEvent {
    pub fn validate(&self) -> Result<(), EventError> {
        if self.repo_url.trim().is_empty() {
            return Err(EventError::MissingRepoUrl);
        }
        if let Some(inline) = &self.inline_specs {
            if let Some(p) = inline.keys().find(|p| !self.changed_files.contains(p)) {
                return Err(EventError::InlineNotChanged(p.clone()));
            }
        }
        Ok(())
    }

    /// Branch name without the `refs/heads/` prefix.
    pub fn branch(&self) -> &str {
        self.git_ref
            .strip_prefix("refs/heads/")
            .unwrap_or(&self.git_ref)
    }

    /// `repo_name`, or the last segment of `repo_url` when it is empty.
    pub fn effective_repo_name(&self) -> String {
        if !self.repo_name.trim().is_empty() {
            return self.repo_name.trim().to_owned();
        }
        let tail = self
            .repo_url
            .trim_end_matches('/')
            .rsplit(['/', ':'])
            .next()
            .unwrap_or_default();
        tail.strip_suffix(".git").unwrap_or(tail).to_owned()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    Created,
    Updated,
    Unchanged,
    Ignored,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegistrationOutcome {
    pub action: Action,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub service_id: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub version: Option<u32>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl RegistrationOutcome {
    fn ignored(path: Option<&str>, note: impl Into<String>) -> Self {
        Self {
            action: Action::Ignored,
            path: path.map(str::to_owned),
            service_id: None,
            version: None,
            notes: vec![note.into()],
        }
    }
}

#[derive(Clone, Debug)]
pub struct WebhookConfig {
    pub matcher: SpecMatcher,
    /// Accepted branches when the event does not name its default branch.
    pub branches: Vec<String>,
    /// Accept pushes to every ref.
    pub any_ref: bool,
}

impl Default for WebhookConfig {
    fn default() -> Self {
        Self {
            matcher: SpecMatcher::default(),
            branches: vec!["main".into(), "master".into()],
            any_ref: false,
        }
    }
}

/// Applies push events to a hub. Deliveries for one repository are
/// processed one at a time, in arrival order; repositories run in parallel.
pub struct Ingestor {
    hub: Arc<Hub>,
    fetcher: Option<Box<dyn ContentFetcher>>,
    config: WebhookConfig,
    repo_locks: Mutex<HashMap<String, Arc<Mutex<()>>>>,
}

impl Ingestor {
    pub fn new(hub: Arc<Hub>) -> Self {
        Self {
            hub,
            fetcher: None,
            config: WebhookConfig::default(),
            repo_locks: Mutex::new(HashMap::new()),
        }
    }

    pub fn with_fetcher(mut self, fetcher: impl ContentFetcher + 'static) -> Self {
        self.fetcher = Some(Box::new(fetcher));
        self
    }

    pub fn with_config(mut self, config: WebhookConfig) -> Self {
        self.config = config;
        self
    }

    pub fn hub(&self) -> &Arc<Hub> {
        &self.hub
    }

    fn repo_lock(&self, repo_url: &str) -> Arc<Mutex<()>> {
        self.repo_locks
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .entry(repo_url.to_owned())
            .or_default()
            .clone()
    }

    fn ref_accepted(&self, event: &PushEvent) -> bool {
        if self.config.any_ref {
            return true;
        }
        let branch = event.branch();
        match &event.default_branch {
            Some(d) => d == branch,
            None => self.config.branches.iter().any(|b| b == branch),
        }
    }

    /// One outcome per discovered spec file, or a single `ignored` outcome
    /// when the push is filtered out as a whole. Failures on individual
    /// files are reported as `ignored` so the delivery can be retried.
    pub fn handle_push(&self, event: &PushEvent) -> Result<Vec<RegistrationOutcome>, EventError> {
        event.validate()?;
        if !self.ref_accepted(event) {
            return Ok(vec![RegistrationOutcome::ignored(
                None,
                format!("ref `{}` is not a tracked branch", event.git_ref),
            )]);
        }
        let mut specs = self.config.matcher.discover(&event.changed_files);
        // Shallow files first: a root-level spec claims the bare repo name.
        specs.sort_by_key(|p| p.matches('/').count());
        if specs.is_empty() {
            return Ok(vec![RegistrationOutcome::ignored(
                None,
                format!(
                    "none of the {} changed files is an OpenAPI document",
                    event.changed_files.len()
                ),
            )]);
        }
        let lock = self.repo_lock(&event.repo_url);
        let _guard = lock.lock().unwrap_or_else(|e| e.into_inner());
        Ok(specs.iter().map(|p| self.ingest_file(event, p)).collect())
    }

    fn content(&self, event: &PushEvent, path: &str) -> Result<String, String> {
        if let Some(text) = event.inline_specs.as_ref().and_then(|m| m.get(path)) {
            return Ok(text.clone());
        }
        match &self.fetcher {
            Some(f) => f.fetch(event, path).map_err(|e| e.to_string()),
            None => Err("content is not inline and no fetcher is configured".into()),
        }
    }

    fn ingest_file(&self, event: &PushEvent, path: &str) -> RegistrationOutcome {
        let text = match self.content(event, path) {
            Ok(t) => t,
            Err(e) => return RegistrationOutcome::ignored(Some(path), e),
        };
        let outcome = match self.hub.find_by_repo(&event.repo_url, path) {
            Some(id) => self
                .hub
                .add_spec_version(&id, &text, VersionSource::Webhook)
                .map(|o| match o {
                    VersionOutcome::Appended { version, .. } => {
                        (Action::Updated, id, version.version_number)
                    }
                    VersionOutcome::Unchanged { version } => (Action::Unchanged, id, version),
                }),
            None => self.create(event, path, text),
        };
        match outcome {
            Ok((action, id, version)) => RegistrationOutcome {
                action,
                path: Some(path.to_owned()),
                service_id: Some(id),
                version: Some(version),
                notes: Vec::new(),
            },
            Err(HubError::InvalidSpec(diags)) => {
                let mut o =
                    RegistrationOutcome::ignored(Some(path), "OpenAPI document cannot be parsed");
                o.notes.extend(diags.iter().map(ToString::to_string));
                o
            }
            Err(e) => RegistrationOutcome::ignored(Some(path), e.to_string()),
        }
    }

    fn create(
        &self,
        event: &PushEvent,
        path: &str,
        text: String,
    ) -> Result<(Action, String, u32), HubError> {
        let repo = event.effective_repo_name();
        let stem = path.rsplit_once('.').map_or(path, |(s, _)| s);
        let candidates = [repo.clone(), format!("{repo}-{}", slugify(stem))];
        let mut last = None;
        for name in candidates {
            let req = NewService {
                repo_url: Some(event.repo_url.clone()),
                spec_path: Some(path.to_owned()),
                source: VersionSource::Webhook,
                ..NewService::new(name, text.clone())
            };
            match self.hub.register_service(req) {
                Ok((rec, v)) => return Ok((Action::Created, rec.id, v.version_number)),
                Err(e @ (HubError::Conflict(_) | HubError::InvalidName(_))) => last = Some(e),
                Err(e) => return Err(e),
            }
        }
        Err(last.expect("at least one candidate was tried"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SPEC: &str = "openapi: 3.0.3\ninfo: {title: s, version: '1'}\npaths: {}\n";

    fn push(files: &[(&str, &str)]) -> PushEvent {
        PushEvent {
            repo_url: "https://git.example.org/acme/broker".into(),
            repo_name: "broker".into(),
            git_ref: "refs/heads/main".into(),
            head_commit: "c1".into(),
            changed_files: files
                .iter()
                .map(|(p, _)| p.to_string())
                .chain(["src/lib.rs".into()])
                .collect(),
            inline_specs: Some(
                files
                    .iter()
                    .map(|(p, t)| (p.to_string(), t.to_string()))
                    .collect(),
            ),
            default_branch: None,
        }
    }

    #[test]
    fn create_then_unchanged_then_updated() {
        let ing = Ingestor::new(Arc::new(Hub::in_memory()));
        let ev = push(&[("openapi.yaml", SPEC)]);
        let first = ing.handle_push(&ev).unwrap();
        assert_eq!(first[0].action, Action::Created);
        assert_eq!(first[0].service_id.as_deref(), Some("broker"));
        assert_eq!(ing.handle_push(&ev).unwrap()[0].action, Action::Unchanged);
        let ev2 = push(&[("openapi.yaml", &SPEC.replace("'1'", "'2'"))]);
        let out = ing.handle_push(&ev2).unwrap();
        assert_eq!((out[0].action, out[0].version), (Action::Updated, Some(2)));
    }

    #[test]
    fn second_spec_file_gets_path_suffix() {
        let ing = Ingestor::new(Arc::new(Hub::in_memory()));
        let out = ing
            .handle_push(&push(&[
                ("openapi.yaml", SPEC),
                ("docs/api/admin.yaml", SPEC),
            ]))
            .unwrap();
        let ids: Vec<_> = out.iter().map(|o| o.service_id.clone().unwrap()).collect();
        assert_eq!(ids, ["broker", "broker-docs-api-admin"]);
    }

    #[test]
    fn foreign_branch_and_source_only_pushes_are_ignored() {
        let ing = Ingestor::new(Arc::new(Hub::in_memory()));
        let mut ev = push(&[("openapi.yaml", SPEC)]);
        ev.git_ref = "refs/heads/feature".into();
        assert_eq!(ing.handle_push(&ev).unwrap()[0].action, Action::Ignored);
        ev.default_branch = Some("feature".into());
        assert_eq!(ing.handle_push(&ev).unwrap()[0].action, Action::Created);

        let src = push(&[]);
        let out = ing.handle_push(&src).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].action, Action::Ignored);
    }

    #[test]
    fn missing_content_is_ignored_with_note() {
        let ing = Ingestor::new(Arc::new(Hub::in_memory()));
        let mut ev = push(&[]);
        ev.changed_files.push("openapi.yaml".into());
        let out = ing.handle_push(&ev).unwrap();
        assert_eq!(out[0].action, Action::Ignored);
        assert!(out[0].notes[0].contains("no fetcher"));
        assert!(ing.hub().services().is_empty());
    }

    #[test]
    fn validation() {
        let mut ev = push(&[("openapi.yaml", SPEC)]);
        ev.changed_files.retain(|f| f != "openapi.yaml");
        assert_eq!(
            ev.validate(),
            Err(EventError::InlineNotChanged("openapi.yaml".into()))
        );
        ev.repo_url.clear();
        assert_eq!(ev.validate(), Err(EventError::MissingRepoUrl));
    }

    #[test]
    fn repo_name_falls_back_to_url() {
        let ev = PushEvent {
            repo_url: "git@git.example.org:acme/device-api.git".into(),
            ..PushEvent::default()
        };
        assert_eq!(ev.effective_repo_name(), "device-api");
    }
}
