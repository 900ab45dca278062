use globset::{GlobBuilder, GlobSet, GlobSetBuilder};

pub const DEFAULT_SPEC_GLOBS: [&str; 5] = [
    "openapi.yaml",
    "openapi.yml",
    "openapi.json",
    "**/openapi.*",
    "docs/api/*.yaml",
];

/// Compiled spec-file patterns. `*` does not cross `/`; `**` does.
#[derive(Clone, Debug)]
pub struct SpecMatcher {
    set: GlobSet,
}

impl SpecMatcher {
    pub fn new<S: AsRef<str>>(patterns: &[S]) -> Result<Self, globset::Error> {
        let mut b = GlobSetBuilder::new();
        for p in patterns {
            b.add(
                GlobBuilder::new(p.as_ref())
                    .literal_separator(true)
                    .build()?,
            );
        }
        Ok(Self { set: b.build()? })
    }

    pub fn is_match(&self, path: &str) -> bool {
        self.set.is_match(path.trim_start_matches("./"))
    }

    /// Matching paths, sorted and without duplicates.
    pub fn discover<S: AsRef<str>>(&self, paths: &[S]) -> Vec<String> {
        let mut out: Vec<String> = paths
            .iter()
            .map(|p| p.as_ref().trim_start_matches("./").to_owned())
            .filter(|p| self.is_match(p))
            .collect();
        out.sort();
        out.dedup();
        out
    }
}

impl Default for SpecMatcher {
    fn default() -> Self {
        Self::new(&DEFAULT_SPEC_GLOBS).expect("default patterns compile")
    }
}

/// Spec files among `paths` under the default patterns.
pub fn discover_spec_files<S: AsRef<str>>(paths: &[S]) -> Vec<String> {
    SpecMatcher::default().discover(paths)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn picks_spec_among_sources() {
        assert_eq!(
            discover_spec_files(&["src/main.rs", "openapi.yaml"]),
            ["openapi.yaml"]
        );
        assert!(discover_spec_files::<&str>(&[]).is_empty());
    }

    #[test]
    fn nested_and_docs_patterns() {
        let found = discover_spec_files(&[
            "services/a/openapi.yml",
            "docs/api/users.yaml",
            "docs/api/v2/users.yaml",
            "docs/readme.md",
            "openapi.yaml.bak/x",
        ]);
        assert_eq!(found, ["docs/api/users.yaml", "services/a/openapi.yml"]);
    }

    #[test]
    fn custom_patterns_replace_defaults() {
        let m = SpecMatcher::new(&["api/*.json"]).unwrap();
        assert_eq!(m.discover(&["api/x.json", "openapi.yaml"]), ["api/x.json"]);
    }
}
