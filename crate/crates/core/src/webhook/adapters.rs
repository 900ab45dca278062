//! Translation of Git-host push payloads into [`PushEvent`]s.
//!
//! Only the fields needed for ingestion are read. Removed files are not
//! reported as changed: deleting a spec does not unregister a service.

use std::collections::BTreeSet;

use serde_json::Value;
use thiserror::Error;

use super::PushEvent;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GitHost {
    GitHub,
    GitLab,
    Gitea,
}

impl GitHost {
    /// Identifies the host from a request header name such as
    /// `X-GitHub-Event`.
    pub fn from_event_header(name: &str) -> Option<Self> {
        match name.to_ascii_lowercase().as_str() {
            "x-github-event" => Some(GitHost::GitHub),
            "x-gitlab-event" => Some(GitHost::GitLab),
            "x-gitea-event" => Some(GitHost::Gitea),
            _ => None,
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("push payload lacks `{0}`")]
pub struct AdapterError(pub &'static str);

fn text<'a>(v: &'a Value, pointer: &'static str) -> Option<&'a str> {
    v.pointer(pointer)
        .and_then(Value::as_str)
        .filter(|s| !s.is_empty())
}

fn changed_files(payload: &Value) -> Vec<String> {
    let mut files = BTreeSet::new();
    for commit in payload["commits"].as_array().into_iter().flatten() {
        for key in ["added", "modified"] {
            for f in commit[key].as_array().into_iter().flatten() {
                if let Some(s) = f.as_str() {
                    files.insert(s.to_owned());
                }
            }
        }
    }
    files.into_iter().collect()
}

pub fn adapt_payload(host: GitHost, payload: &Value) -> Result<PushEvent, AdapterError> {
    let git_ref = text(payload, "/ref").ok_or(AdapterError("ref"))?.to_owned();
    let (repo_url, repo_name, default_branch, head) = match host {
        GitHost::GitHub | GitHost::Gitea => (
            text(payload, "/repository/html_url")
                .or_else(|| text(payload, "/repository/clone_url"))
                .ok_or(AdapterError("repository.html_url"))?,
            text(payload, "/repository/name"),
            text(payload, "/repository/default_branch"),
            text(payload, "/after"),
        ),
        GitHost::GitLab => (
            text(payload, "/project/web_url")
                .or_else(|| text(payload, "/repository/homepage"))
                .ok_or(AdapterError("project.web_url"))?,
            text(payload, "/project/path").or_else(|| text(payload, "/project/name")),
            text(payload, "/project/default_branch"),
            text(payload, "/checkout_sha").or_else(|| text(payload, "/after")),
        ),
    };
    Ok(PushEvent {
        repo_url: repo_url.to_owned(),
        repo_name: repo_name.unwrap_or_default().to_owned(),
        git_ref,
        head_commit: head.unwrap_or_default().to_owned(),
        changed_files: changed_files(payload),
        inline_specs: None,
        default_branch: default_branch.map(str::to_owned),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn github_shape() {
        let p = json!({
            "ref": "refs/heads/main",
            "after": "abc",
            "repository": {"name": "broker", "html_url": "https://github.com/acme/broker", "default_branch": "main"},
            "commits": [
                {"added": ["openapi.yaml"], "modified": ["src/a.rs"], "removed": ["old.yaml"]},
                {"added": [], "modified": ["openapi.yaml"], "removed": []}
            ]
        });
        let ev = adapt_payload(GitHost::GitHub, &p).unwrap();
        assert_eq!(ev.repo_url, "https://github.com/acme/broker");
        assert_eq!(ev.repo_name, "broker");
        assert_eq!(ev.head_commit, "abc");
        assert_eq!(ev.default_branch.as_deref(), Some("main"));
        assert_eq!(ev.changed_files, ["openapi.yaml", "src/a.rs"]);
    }

    #[test]
    fn gitlab_shape() {
        let p = json!({
            "ref": "refs/heads/master",
            "checkout_sha": "def",
            "project": {"path": "device-api", "name": "Device API", "web_url": "https://gitlab.example/iot/device-api", "default_branch": "master"},
            "commits": [{"added": ["docs/api/devices.yaml"], "modified": [], "removed": []}]
        });
        let ev = adapt_payload(GitHost::GitLab, &p).unwrap();
        assert_eq!(ev.repo_name, "device-api");
        assert_eq!(ev.head_commit, "def");
        assert_eq!(ev.changed_files, ["docs/api/devices.yaml"]);
    }

    #[test]
    fn missing_repository_is_an_error() {
        let p = json!({"ref": "refs/heads/main"});
        assert_eq!(
            adapt_payload(GitHost::Gitea, &p),
            Err(AdapterError("repository.html_url"))
        );
        assert_eq!(
            GitHost::from_event_header("X-Gitlab-Event"),
            Some(GitHost::GitLab)
        );
    }
}
