//! Loads a directory of service specs into a fresh in-memory hub.
//!
//! Every subdirectory is treated like a repository checkout and pushed
//! through the same ingestion path the webhook uses, so a local report and
//! one served by a hub fed by pushes agree. Spec files directly inside the
//! corpus directory are registered under their file stem.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use tira_core::aggregate::AliasTable;
use tira_core::flow::FlowEdge;
use tira_core::hub::{Hub, HubError, NewService, SystemWideInfo};
use tira_core::webhook::{Action, Ingestor, PushEvent, SpecMatcher};

#[derive(Debug)]
pub enum CorpusError {
    /// Unreadable input: exit status 2.
    Io(String),
    /// Rejected content: exit status 1.
    Invalid(Vec<String>),
}

fn read(path: &Path) -> Result<String, CorpusError> {
    fs::read_to_string(path).map_err(|e| CorpusError::Io(format!("{}: {e}", path.display())))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CorpusError> {
    serde_json::from_str(&read(path)?)
        .map_err(|e| CorpusError::Invalid(vec![format!("{}: {e}", path.display())]))
}

fn files_below(root: &Path) -> Result<Vec<String>, CorpusError> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        let entries =
            fs::read_dir(&dir).map_err(|e| CorpusError::Io(format!("{}: {e}", dir.display())))?;
        for entry in entries.flatten() {
            let path = entry.path();
            if path.is_dir() {
                stack.push(path);
            } else if let Ok(rel) = path.strip_prefix(root) {
                out.push(rel.to_string_lossy().replace('\\', "/"));
            }
        }
    }
    out.sort();
    Ok(out)
}

fn sorted_entries(dir: &Path) -> Result<Vec<PathBuf>, CorpusError> {
    let mut entries: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| CorpusError::Io(format!("{}: {e}", dir.display())))?
        .flatten()
        .map(|e| e.path())
        .collect();
    entries.sort();
    Ok(entries)
}

fn is_spec_file(path: &Path) -> bool {
    matches!(
        path.extension().and_then(|e| e.to_str()),
        Some("yaml" | "yml" | "json")
    )
}

pub struct Inputs<'a> {
    pub dir: &'a Path,
    pub links: Option<&'a Path>,
    pub system_info: Option<&'a Path>,
    pub aliases: Option<&'a Path>,
}

pub fn load(inputs: &Inputs<'_>) -> Result<Arc<Hub>, CorpusError> {
    if !inputs.dir.is_dir() {
        return Err(CorpusError::Io(format!(
            "{}: not a directory",
            inputs.dir.display()
        )));
    }
    let hub = Arc::new(Hub::in_memory());
    let ingestor = Ingestor::new(hub.clone());
    let matcher = SpecMatcher::default();
    let mut problems = Vec::new();

    for path in sorted_entries(inputs.dir)? {
        let name = path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        if path.is_dir() {
            let files = files_below(&path)?;
            let specs = matcher.discover(&files);
            let mut inline = std::collections::BTreeMap::new();
            for rel in &specs {
                inline.insert(rel.clone(), read(&path.join(rel))?);
            }
            let event = PushEvent {
                repo_url: format!("file://{}", path.display()),
                repo_name: name,
                git_ref: "local".into(),
                changed_files: files,
                inline_specs: Some(inline),
                default_branch: Some("local".into()),
                ..PushEvent::default()
            };
            let outcomes = ingestor
                .handle_push(&event)
                .map_err(|e| CorpusError::Invalid(vec![e.to_string()]))?;
            for o in outcomes {
                if o.action == Action::Ignored {
                    if let Some(p) = &o.path {
                        problems.push(format!(
                            "{}: {}",
                            path.join(p).display(),
                            o.notes.join("; ")
                        ));
                    }
                }
            }
        } else if is_spec_file(&path) && !is_auxiliary(&path, inputs) {
            let stem = path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default();
            match hub.register_service(NewService::new(stem, read(&path)?)) {
                Ok(_) => {}
                Err(HubError::InvalidSpec(d)) => problems.push(format!(
                    "{}: {}",
                    path.display(),
                    d.iter()
                        .map(ToString::to_string)
                        .collect::<Vec<_>>()
                        .join("; ")
                )),
                Err(e) => problems.push(format!("{}: {e}", path.display())),
            }
        }
    }
    if !problems.is_empty() {
        return Err(CorpusError::Invalid(problems));
    }

    if let Some(p) = inputs.links {
        let edges: Vec<FlowEdge> = read_json(p)?;
        hub.set_links(edges)
            .map_err(|e| CorpusError::Invalid(vec![format!("{}: {e}", p.display())]))?;
    }
    if let Some(p) = inputs.system_info {
        let info: SystemWideInfo = read_json(p)?;
        hub.set_system_info(info).map_err(|e| match e {
            HubError::InvalidSystemInfo(fields) => CorpusError::Invalid(
                fields
                    .iter()
                    .map(|f| format!("{}: {}: {}", p.display(), f.field, f.message))
                    .collect(),
            ),
            other => CorpusError::Invalid(vec![other.to_string()]),
        })?;
    }
    if let Some(p) = inputs.aliases {
        let table: AliasTable = read_json(p)?;
        hub.set_aliases(table)
            .map_err(|e| CorpusError::Invalid(vec![e.to_string()]))?;
    }
    Ok(hub)
}

/// Manifests passed by flag may live inside the corpus directory.
fn is_auxiliary(path: &Path, inputs: &Inputs<'_>) -> bool {
    let same = |other: Option<&Path>| {
        other.is_some_and(|o| fs::canonicalize(o).ok() == fs::canonicalize(path).ok())
    };
    same(inputs.links) || same(inputs.system_info) || same(inputs.aliases)
}
