//! OpenAPI 3 documents reduced to the parts that carry transparency
//! annotations: paths, operations, parameters, bodies, responses and
//! schemas. Everything else is carried opaquely in the raw tree and comes
//! back out of [`OpenApiDocument::to_canonical_yaml`].

mod parse;
mod site;
mod sites;

use indexmap::IndexMap;
use serde_json::Value;

use crate::diagnostics::Diagnostic;

pub use parse::{parse_document, SourceFormat};
pub use site::{HttpMethod, ParamLocation, Segment, SitePath, SitePathError};
pub use sites::{annotation_sites, resolve_site, AnnotationSite, SiteNode};

/// `x-*` keys of one node, verbatim and in document order.
pub type Extensions = IndexMap<String, Value>;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Info {
    pub title: String,
    pub description: Option<String>,
    pub version: Option<String>,
    pub extensions: Extensions,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OpenApiDocument {
    pub version: String,
    pub info: Info,
    pub paths: IndexMap<String, PathItem>,
    pub components: IndexMap<String, SchemaNode>,
    pub root_extensions: Extensions,
    raw: Value,
    diagnostics: Vec<Diagnostic>,
}

impl OpenApiDocument {
    /// The complete parsed tree, including keys the model does not interpret.
    pub fn raw(&self) -> &Value {
        &self.raw
    }

    /// Non-fatal findings from parsing (unresolved references and the like).
    pub fn diagnostics(&self) -> &[Diagnostic] {
        &self.diagnostics
    }

    /// Block-style YAML with keys in parsed order. Used as the input to
    /// content hashing, so its output must stay byte-stable.
    pub fn to_canonical_yaml(&self) -> String {
        serde_yaml::to_string(&self.raw).expect("json values always serialize to yaml")
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PathItem {
    pub route: String,
    pub parameters: Vec<Parameter>,
    pub operations: IndexMap<HttpMethod, Operation>,
    pub extensions: Extensions,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Operation {
    pub method: HttpMethod,
    pub operation_id: Option<String>,
    pub parameters: Vec<Parameter>,
    pub request_body: Option<RequestBody>,
    pub responses: IndexMap<String, Response>,
    pub extensions: Extensions,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Parameter {
    pub name: String,
    pub location: ParamLocation,
    pub schema: Option<SchemaNode>,
    pub extensions: Extensions,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RequestBody {
    pub content: IndexMap<String, MediaType>,
    pub extensions: Extensions,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Response {
    pub status: String,
    pub content: IndexMap<String, MediaType>,
    pub extensions: Extensions,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MediaType {
    pub media_type: String,
    pub schema: Option<SchemaNode>,
    pub extensions: Extensions,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SchemaKind {
    Object,
    Array,
    Primitive,
    /// Local reference to `#/components/schemas/<name>`; the target exists.
    Reference(String),
    /// Composition (`allOf`/`oneOf`/`anyOf`), unresolvable references and
    /// anything else the model does not look into.
    Opaque,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SchemaNode {
    pub kind: SchemaKind,
    pub primitive_type: Option<String>,
    pub format: Option<String>,
    pub properties: IndexMap<String, SchemaNode>,
    pub items: Option<Box<SchemaNode>>,
    pub required: Vec<String>,
    pub extensions: Extensions,
}

impl SchemaNode {
    pub fn reference_target(&self) -> Option<&str> {
        match &self.kind {
            SchemaKind::Reference(name) => Some(name),
            _ => None,
        }
    }
}
