use std::path::{Component, Path, PathBuf};

use thiserror::Error;

use super::PushEvent;

#[derive(Debug, Error)]
pub enum FetchError {
    #[error("path `{0}` leaves the repository")]
    OutsideRepository(String),
    #[error("cannot read {path}: {message}")]
    Read { path: String, message: String },
    #[error("GET {url} failed: {message}")]
    Http { url: String, message: String },
}

/// Obtains the content of a file at the pushed commit.
pub trait ContentFetcher: Send + Sync {
    fn fetch(&self, event: &PushEvent, path: &str) -> Result<String, FetchError>;
}

fn checked_relative(path: &str) -> Result<&Path, FetchError> {
    let p = Path::new(path);
    if p.components()
        .all(|c| matches!(c, Component::Normal(_) | Component::CurDir))
    {
        Ok(p)
    } else {
        Err(FetchError::OutsideRepository(path.to_owned()))
    }
}

/// Reads `<root>/<repo_name>/<path>`: checkouts laid out side by side.
#[derive(Clone, Debug)]
pub struct LocalDirFetcher {
    pub root: PathBuf,
}

impl LocalDirFetcher {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }
}

impl ContentFetcher for LocalDirFetcher {
    fn fetch(&self, event: &PushEvent, path: &str) -> Result<String, FetchError> {
        let repo = checked_relative(&event.repo_name)?;
        let full = self.root.join(repo).join(checked_relative(path)?);
        std::fs::read_to_string(&full).map_err(|e| FetchError::Read {
            path: full.display().to_string(),
            message: e.to_string(),
        })
    }
}

/// Fetches raw file content over HTTP. The template may use `{repo_url}`,
/// `{repo_name}`, `{commit}`, `{ref}` and `{path}`, e.g.
/// `https://git.example.org/{repo_name}/raw/{commit}/{path}`.
#[derive(Clone, Debug)]
pub struct HttpTemplateFetcher {
    pub template: String,
}

impl HttpTemplateFetcher {
    pub fn new(template: impl Into<String>) -> Self {
        Self {
            template: template.into(),
        }
    }

    pub fn url_for(&self, event: &PushEvent, path: &str) -> String {
        self.template
            .replace("{repo_url}", event.repo_url.trim_end_matches('/'))
            .replace("{repo_name}", &event.repo_name)
            .replace("{commit}", &event.head_commit)
            .replace("{ref}", event.branch())
            .replace("{path}", path)
    }
}

impl ContentFetcher for HttpTemplateFetcher {
    fn fetch(&self, event: &PushEvent, path: &str) -> Result<String, FetchError> {
        checked_relative(path)?;
        let url = self.url_for(event, path);
        let http = |e: ureq::Error| FetchError::Http {
            url: url.clone(),
            message: e.to_string(),
        };
        ureq::get(&url)
            .call()
            .map_err(http)?
            .body_mut()
            .read_to_string()
            .map_err(http)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn event() -> PushEvent {
        PushEvent {
            repo_url: "https://git.example.org/acme/broker/".into(),
            repo_name: "broker".into(),
            git_ref: "refs/heads/main".into(),
            head_commit: "abc123".into(),
            ..PushEvent::default()
        }
    }

    #[test]
    fn template_substitution() {
        let f = HttpTemplateFetcher::new("{repo_url}/raw/{commit}/{path}?ref={ref}");
        assert_eq!(
            f.url_for(&event(), "docs/api/x.yaml"),
            "https://git.example.org/acme/broker/raw/abc123/docs/api/x.yaml?ref=main"
        );
    }

    #[test]
    fn local_fetch_stays_inside_root() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::create_dir_all(dir.path().join("broker")).unwrap();
        std::fs::write(dir.path().join("broker/openapi.yaml"), "x").unwrap();
        let f = LocalDirFetcher::new(dir.path());
        assert_eq!(f.fetch(&event(), "openapi.yaml").unwrap(), "x");
        assert!(matches!(
            f.fetch(&event(), "../secret"),
            Err(FetchError::OutsideRepository(_))
        ));
        assert!(matches!(
            f.fetch(&event(), "missing.yaml"),
            Err(FetchError::Read { .. })
        ));
    }
}
