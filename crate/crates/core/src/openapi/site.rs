//! Stable addresses for annotation sites.
//!
//! A [`SitePath`] names one node of an OpenAPI document, starting at the
//! document root. Its text form joins segments with `/`; names that may
//! contain `/` or `~` are escaped the JSON-pointer way (`~1`, `~0`).
//!
//! ```text
//! root/path:~1weights/op:post/requestBody/content:application~1json/schema:Weight/property:weight
//! ```
//!
//! A `schema:<Name>` segment always denotes the component schema `<Name>`.
//! When it follows a slot that holds a `$ref` (a media type, parameter,
//! property or array items), it records that the address passed through
//! the reference.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum HttpMethod {
    Get,
    Put,
    Post,
    Delete,
    Options,
    Head,
    Patch,
    Trace,
}

impl HttpMethod {
    pub const ALL: [HttpMethod; 8] = [
        HttpMethod::Get,
        HttpMethod::Put,
        HttpMethod::Post,
        HttpMethod::Delete,
        HttpMethod::Options,
        HttpMethod::Head,
        HttpMethod::Patch,
        HttpMethod::Trace,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            HttpMethod::Get => "get",
            HttpMethod::Put => "put",
            HttpMethod::Post => "post",
            HttpMethod::Delete => "delete",
            HttpMethod::Options => "options",
            HttpMethod::Head => "head",
            HttpMethod::Patch => "patch",
            HttpMethod::Trace => "trace",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.as_str() == s)
    }
}

impl fmt::Display for HttpMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ParamLocation {
    Path,
    Query,
    Header,
    Cookie,
}

impl ParamLocation {
    pub fn as_str(self) -> &'static str {
        match self {
            ParamLocation::Path => "path",
            ParamLocation::Query => "query",
            ParamLocation::Header => "header",
            ParamLocation::Cookie => "cookie",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "path" => Some(ParamLocation::Path),
            "query" => Some(ParamLocation::Query),
            "header" => Some(ParamLocation::Header),
            "cookie" => Some(ParamLocation::Cookie),
            _ => None,
        }
    }
}

impl fmt::Display for ParamLocation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Segment {
    Root,
    Path(String),
    Operation(HttpMethod),
    Parameter {
        location: ParamLocation,
        name: String,
    },
    RequestBody,
    Response(String),
    Content(String),
    /// `None` is the inline schema held by the parent slot.
    Schema(Option<String>),
    Property(String),
    Items,
}

impl Segment {
    fn write(&self, out: &mut String) {
        match self {
            Segment::Root => out.push_str("root"),
            Segment::Path(route) => {
                out.push_str("path:");
                escape_into(route, out);
            }
            Segment::Operation(m) => {
                out.push_str("op:");
                out.push_str(m.as_str());
            }
            Segment::Parameter { location, name } => {
                out.push_str("param:");
                out.push_str(location.as_str());
                out.push(':');
                escape_into(name, out);
            }
            Segment::RequestBody => out.push_str("requestBody"),
            Segment::Response(status) => {
                out.push_str("response:");
                escape_into(status, out);
            }
            Segment::Content(media) => {
                out.push_str("content:");
                escape_into(media, out);
            }
            Segment::Schema(None) => out.push_str("schema"),
            Segment::Schema(Some(name)) => {
                out.push_str("schema:");
                escape_into(name, out);
            }
            Segment::Property(name) => {
                out.push_str("property:");
                escape_into(name, out);
            }
            Segment::Items => out.push_str("items"),
        }
    }

    fn parse(raw: &str) -> Result<Self, SitePathError> {
        let bad = || SitePathError::BadSegment(raw.to_owned());
        let (tag, rest) = match raw.split_once(':') {
            Some((t, r)) => (t, Some(r)),
            None => (raw, None),
        };
        Ok(match (tag, rest) {
            ("root", None) => Segment::Root,
            ("requestBody", None) => Segment::RequestBody,
            ("items", None) => Segment::Items,
            ("schema", None) => Segment::Schema(None),
            ("schema", Some(n)) => Segment::Schema(Some(unescape(n).ok_or_else(bad)?)),
            ("path", Some(r)) => Segment::Path(unescape(r).ok_or_else(bad)?),
            ("op", Some(m)) => Segment::Operation(HttpMethod::parse(m).ok_or_else(bad)?),
            ("param", Some(r)) => {
                let (loc, name) = r.split_once(':').ok_or_else(bad)?;
                Segment::Parameter {
                    location: ParamLocation::parse(loc).ok_or_else(bad)?,
                    name: unescape(name).ok_or_else(bad)?,
                }
            }
            ("response", Some(s)) => Segment::Response(unescape(s).ok_or_else(bad)?),
            ("content", Some(m)) => Segment::Content(unescape(m).ok_or_else(bad)?),
            ("property", Some(n)) => Segment::Property(unescape(n).ok_or_else(bad)?),
            _ => return Err(bad()),
        })
    }
}

fn escape_into(s: &str, out: &mut String) {
    for c in s.chars() {
        match c {
            '~' => out.push_str("~0"),
            '/' => out.push_str("~1"),
            c => out.push(c),
        }
    }
}

fn unescape(s: &str) -> Option<String> {
    let mut out = String::with_capacity(s.len());
    let mut chars = s.chars();
    while let Some(c) = chars.next() {
        if c == '~' {
            match chars.next() {
                Some('0') => out.push('~'),
                Some('1') => out.push('/'),
                _ => return None,
            }
        } else {
            out.push(c);
        }
    }
    Some(out)
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SitePathError {
    #[error("site path is empty")]
    Empty,
    #[error("site path must start with `root`")]
    MissingRoot,
    #[error("`root` may only appear as the first segment")]
    MisplacedRoot,
    #[error("malformed site path segment `{0}`")]
    BadSegment(String),
}

/// Address of an annotation site. Always starts with [`Segment::Root`].
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SitePath {
    segments: Vec<Segment>,
}

impl SitePath {
    pub fn root() -> Self {
        Self {
            segments: vec![Segment::Root],
        }
    }

    pub fn from_segments(segments: Vec<Segment>) -> Result<Self, SitePathError> {
        match segments.first() {
            None => return Err(SitePathError::Empty),
            Some(Segment::Root) => {}
            Some(_) => return Err(SitePathError::MissingRoot),
        }
        if segments[1..].contains(&Segment::Root) {
            return Err(SitePathError::MisplacedRoot);
        }
        Ok(Self { segments })
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    /// Number of segments, root included.
    pub fn depth(&self) -> usize {
        self.segments.len()
    }

    pub fn is_root(&self) -> bool {
        self.segments.len() == 1
    }

    pub fn last(&self) -> &Segment {
        self.segments.last().expect("site path is never empty")
    }

    pub fn child(&self, segment: Segment) -> Self {
        debug_assert!(segment != Segment::Root);
        let mut segments = self.segments.clone();
        segments.push(segment);
        Self { segments }
    }

    pub fn parent(&self) -> Option<Self> {
        if self.is_root() {
            return None;
        }
        Some(Self {
            segments: self.segments[..self.segments.len() - 1].to_vec(),
        })
    }

    /// All prefixes from the root down to (and including) `self`.
    pub fn ancestors_and_self(&self) -> impl Iterator<Item = SitePath> + '_ {
        (1..=self.segments.len()).map(move |n| SitePath {
            segments: self.segments[..n].to_vec(),
        })
    }

    pub fn is_prefix_of(&self, other: &SitePath) -> bool {
        other.segments.starts_with(&self.segments)
    }

    /// Human-facing datum name for the node at this address.
    ///
    /// Uses the nearest named component schema followed by the property
    /// chain (`Weight.weight`, `Log.entries[]`). Parameters are named by
    /// their parameter name and inline body schemas by their operation.
    pub fn display_name(&self) -> String {
        let anchor = self
            .segments
            .iter()
            .rposition(|s| matches!(s, Segment::Schema(Some(_)) | Segment::Parameter { .. }));
        let mut name = String::new();
        let tail_start = match anchor {
            Some(i) => {
                match &self.segments[i] {
                    Segment::Schema(Some(n)) => name.push_str(n),
                    Segment::Parameter { name: n, .. } => name.push_str(n),
                    _ => unreachable!(),
                }
                i + 1
            }
            None => {
                let mut route = None;
                let mut method = None;
                let mut slot = None;
                let mut start = self.segments.len();
                for (i, s) in self.segments.iter().enumerate() {
                    match s {
                        Segment::Path(r) => route = Some(r.as_str()),
                        Segment::Operation(m) => method = Some(m.as_str()),
                        Segment::RequestBody => slot = Some("request".to_owned()),
                        Segment::Response(code) => slot = Some(format!("response {code}")),
                        Segment::Schema(None) => {
                            start = i + 1;
                            break;
                        }
                        _ => {}
                    }
                }
                let parts: Vec<String> = [
                    method.map(str::to_uppercase),
                    route.map(str::to_owned),
                    slot,
                ]
                .into_iter()
                .flatten()
                .collect();
                if parts.is_empty() {
                    name.push_str("service");
                } else {
                    name.push_str(&parts.join(" "));
                }
                start
            }
        };
        for seg in &self.segments[tail_start.min(self.segments.len())..] {
            match seg {
                Segment::Property(p) => {
                    name.push('.');
                    name.push_str(p);
                }
                Segment::Items => name.push_str("[]"),
                _ => {}
            }
        }
        name
    }
}

impl fmt::Display for SitePath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut out = String::new();
        for (i, seg) in self.segments.iter().enumerate() {
            if i > 0 {
                out.push('/');
            }
            seg.write(&mut out);
        }
        f.write_str(&out)
    }
}

impl FromStr for SitePath {
    type Err = SitePathError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.is_empty() {
            return Err(SitePathError::Empty);
        }
        let segments = s
            .split('/')
            .map(Segment::parse)
            .collect::<Result<Vec<_>, _>>()?;
        Self::from_segments(segments)
    }
}

impl Serialize for SitePath {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for SitePath {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_form_escapes_slashes() {
        let p = SitePath::root()
            .child(Segment::Path("/weights/{id}".into()))
            .child(Segment::Operation(HttpMethod::Post))
            .child(Segment::RequestBody)
            .child(Segment::Content("application/json".into()))
            .child(Segment::Schema(Some("Weight".into())))
            .child(Segment::Property("weight".into()));
        let text = p.to_string();
        assert_eq!(
            text,
            "root/path:~1weights~1{id}/op:post/requestBody/content:application~1json/schema:Weight/property:weight"
        );
        assert_eq!(text.parse::<SitePath>().unwrap(), p);
    }

    #[test]
    fn rejects_paths_without_root() {
        assert_eq!("".parse::<SitePath>(), Err(SitePathError::Empty));
        assert_eq!(
            "schema:Weight".parse::<SitePath>(),
            Err(SitePathError::MissingRoot)
        );
        assert_eq!(
            "root/root".parse::<SitePath>(),
            Err(SitePathError::MisplacedRoot)
        );
        assert!("root/op:fetch".parse::<SitePath>().is_err());
        assert!("root/path:~2".parse::<SitePath>().is_err());
    }

    #[test]
    fn display_names() {
        let weight: SitePath = "root/schema:Weight".parse().unwrap();
        assert_eq!(weight.display_name(), "Weight");
        let field: SitePath = "root/schema:Weight/property:weight".parse().unwrap();
        assert_eq!(field.display_name(), "Weight.weight");
        let nested: SitePath =
            "root/path:~1w/op:get/response:200/content:a/schema:Log/property:entries/items"
                .parse()
                .unwrap();
        assert_eq!(nested.display_name(), "Log.entries[]");
        let param: SitePath = "root/path:~1u/op:get/param:query:user_id".parse().unwrap();
        assert_eq!(param.display_name(), "user_id");
        let inline: SitePath = "root/path:~1w/op:post/requestBody/content:a/schema/property:x"
            .parse()
            .unwrap();
        assert_eq!(inline.display_name(), "POST /w request.x");
        assert_eq!(SitePath::root().display_name(), "service");
    }

    #[test]
    fn ancestors_are_prefixes() {
        let p: SitePath = "root/schema:A/property:b/items".parse().unwrap();
        let all: Vec<_> = p.ancestors_and_self().collect();
        assert_eq!(all.len(), 4);
        assert!(all.iter().all(|a| a.is_prefix_of(&p)));
        assert_eq!(all.last(), Some(&p));
    }
}
