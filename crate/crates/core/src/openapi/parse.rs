use indexmap::IndexMap;
use serde_json::{Map, Number, Value};

use super::{
    Extensions, HttpMethod, Info, MediaType, OpenApiDocument, Operation, ParamLocation, Parameter,
    PathItem, RequestBody, Response, SchemaKind, SchemaNode, Segment, SitePath,
};
use crate::diagnostics::Diagnostic;

const SCHEMA_REF_PREFIX: &str = "#/components/schemas/";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum SourceFormat {
    Yaml,
    Json,
    #[default]
    Auto,
}

impl SourceFormat {
    /// Picks a format from a file extension, falling back to `Auto`.
    pub fn from_path(path: &std::path::Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("json") => SourceFormat::Json,
            Some("yaml" | "yml") => SourceFormat::Yaml,
            _ => SourceFormat::Auto,
        }
    }
}

/// Parses an OpenAPI 3.x document.
///
/// Fatal problems (syntax, unsupported version, wrong root shape) are
/// returned as `Err`. Non-fatal ones (unresolved `$ref`, malformed
/// parameters) are attached to the document.
pub fn parse_document(
    text: &str,
    format: SourceFormat,
) -> Result<OpenApiDocument, Vec<Diagnostic>> {
    let trimmed = text.trim_start();
    if trimmed.is_empty() {
        return Err(vec![Diagnostic::error(
            "empty-document",
            "document is empty",
        )]);
    }
    let format = match format {
        SourceFormat::Auto if trimmed.starts_with('{') => SourceFormat::Json,
        SourceFormat::Auto => SourceFormat::Yaml,
        f => f,
    };
    let raw = match format {
        SourceFormat::Json => serde_json::from_str::<Value>(text).map_err(|e| {
            vec![
                Diagnostic::error("syntax-error", format!("invalid JSON: {e}"))
                    .with_position(e.line(), e.column()),
            ]
        })?,
        _ => {
            let yaml = serde_yaml::from_str::<serde_yaml::Value>(text).map_err(|e| {
                let mut d = Diagnostic::error("syntax-error", format!("invalid YAML: {e}"));
                if let Some(loc) = e.location() {
                    d = d.with_position(loc.line(), loc.column());
                }
                vec![d]
            })?;
            yaml_to_json(yaml).map_err(|msg| vec![Diagnostic::error("syntax-error", msg)])?
        }
    };
    from_tree(raw)
}

fn yaml_to_json(value: serde_yaml::Value) -> Result<Value, String> {
    use serde_yaml::Value as Y;
    Ok(match value {
        Y::Null => Value::Null,
        Y::Bool(b) => Value::Bool(b),
        Y::Number(n) => {
            if let Some(i) = n.as_i64() {
                Value::from(i)
            } else if let Some(u) = n.as_u64() {
                Value::from(u)
            } else {
                let f = n.as_f64().unwrap_or(f64::NAN);
                Value::Number(
                    Number::from_f64(f).ok_or_else(|| format!("non-finite number `{n}`"))?,
                )
            }
        }
        Y::String(s) => Value::String(s),
        Y::Sequence(items) => Value::Array(
            items
                .into_iter()
                .map(yaml_to_json)
                .collect::<Result<_, _>>()?,
        ),
        Y::Mapping(map) => {
            let mut out = Map::new();
            for (k, v) in map {
                let key = match k {
                    Y::String(s) => s,
                    Y::Number(n) => n.to_string(),
                    Y::Bool(b) => b.to_string(),
                    Y::Null => "null".to_owned(),
                    other => return Err(format!("unsupported mapping key `{other:?}`")),
                };
                if out.contains_key(&key) {
                    return Err(format!("duplicate mapping key `{key}`"));
                }
                out.insert(key, yaml_to_json(v)?);
            }
            Value::Object(out)
        }
        Y::Tagged(tagged) => yaml_to_json(tagged.value)?,
    })
}

fn extensions_of(map: &Map<String, Value>) -> Extensions {
    map.iter()
        .filter(|(k, _)| k.starts_with("x-"))
        .map(|(k, v)| (k.clone(), v.clone()))
        .collect()
}

fn str_field(map: &Map<String, Value>, key: &str) -> Option<String> {
    map.get(key).and_then(Value::as_str).map(str::to_owned)
}

fn from_tree(raw: Value) -> Result<OpenApiDocument, Vec<Diagnostic>> {
    let Some(root) = raw.as_object() else {
        return Err(vec![Diagnostic::error(
            "invalid-root",
            "document root must be a mapping",
        )]);
    };
    let version = match root.get("openapi") {
        Some(Value::String(s)) => s.clone(),
        Some(Value::Number(n)) => n.to_string(),
        Some(_) => {
            return Err(vec![Diagnostic::error(
                "unsupported-version",
                "`openapi` must be a version string",
            )])
        }
        None if root.contains_key("swagger") => {
            return Err(vec![Diagnostic::error(
                "unsupported-version",
                "Swagger 2.0 documents are not supported; convert to OpenAPI 3",
            )])
        }
        None => {
            return Err(vec![Diagnostic::error(
                "unsupported-version",
                "missing `openapi` version field",
            )])
        }
    };
    if !version.starts_with("3.") {
        return Err(vec![Diagnostic::error(
            "unsupported-version",
            format!("OpenAPI version `{version}` is not supported; expected 3.x"),
        )]);
    }

    let component_map = root
        .get("components")
        .and_then(Value::as_object)
        .and_then(|c| c.get("schemas"))
        .and_then(Value::as_object);
    let mut builder = Builder {
        component_names: component_map
            .map(|m| m.keys().cloned().collect())
            .unwrap_or_default(),
        diagnostics: Vec::new(),
    };

    let info = match root.get("info").and_then(Value::as_object) {
        Some(info) => Info {
            title: str_field(info, "title").unwrap_or_default(),
            description: str_field(info, "description"),
            version: match info.get("version") {
                Some(Value::String(s)) => Some(s.clone()),
                Some(Value::Number(n)) => Some(n.to_string()),
                _ => None,
            },
            extensions: extensions_of(info),
        },
        None => {
            builder.diagnostics.push(
                Diagnostic::warning("missing-info", "document has no `info` object")
                    .at(SitePath::root()),
            );
            Info::default()
        }
    };

    let mut paths = IndexMap::new();
    match root.get("paths") {
        Some(Value::Object(map)) => {
            for (route, item) in map {
                if route.starts_with("x-") {
                    continue;
                }
                let site = SitePath::root().child(Segment::Path(route.clone()));
                if !route.starts_with('/') {
                    builder.diagnostics.push(
                        Diagnostic::warning(
                            "invalid-route",
                            format!("route `{route}` does not start with `/`"),
                        )
                        .at(site.clone()),
                    );
                }
                paths.insert(route.clone(), builder.path_item(route, item, &site));
            }
        }
        Some(Value::Null) | None => {}
        Some(_) => builder.diagnostics.push(
            Diagnostic::error("invalid-paths", "`paths` must be a mapping").at(SitePath::root()),
        ),
    }

    let mut components = IndexMap::new();
    if let Some(map) = component_map {
        for (name, schema) in map {
            let site = SitePath::root().child(Segment::Schema(Some(name.clone())));
            components.insert(name.clone(), builder.schema(schema, &site));
        }
    }

    Ok(OpenApiDocument {
        version,
        info,
        paths,
        components,
        root_extensions: extensions_of(root),
        diagnostics: builder.diagnostics,
        raw,
    })
}

struct Builder {
    component_names: Vec<String>,
    diagnostics: Vec<Diagnostic>,
}

impl Builder {
    fn path_item(&mut self, route: &str, value: &Value, site: &SitePath) -> PathItem {
        let mut item = PathItem {
            route: route.to_owned(),
            parameters: Vec::new(),
            operations: IndexMap::new(),
            extensions: Extensions::new(),
        };
        let Some(map) = value.as_object() else {
            self.diagnostics.push(
                Diagnostic::error("invalid-path-item", "path item must be a mapping")
                    .at(site.clone()),
            );
            return item;
        };
        if map.contains_key("$ref") {
            self.diagnostics.push(
                Diagnostic::warning(
                    "unsupported-reference",
                    "path item references are not followed",
                )
                .at(site.clone()),
            );
        }
        item.extensions = extensions_of(map);
        item.parameters = self.parameters(map.get("parameters"), site);
        for (key, op) in map {
            if let Some(method) = HttpMethod::parse(key) {
                let op_site = site.child(Segment::Operation(method));
                item.operations
                    .insert(method, self.operation(method, op, &op_site));
            }
        }
        item
    }

    fn operation(&mut self, method: HttpMethod, value: &Value, site: &SitePath) -> Operation {
        let mut op = Operation {
            method,
            operation_id: None,
            parameters: Vec::new(),
            request_body: None,
            responses: IndexMap::new(),
            extensions: Extensions::new(),
        };
        let Some(map) = value.as_object() else {
            self.diagnostics.push(
                Diagnostic::error("invalid-operation", "operation must be a mapping")
                    .at(site.clone()),
            );
            return op;
        };
        op.operation_id = str_field(map, "operationId");
        op.extensions = extensions_of(map);
        op.parameters = self.parameters(map.get("parameters"), site);
        if let Some(body) = map.get("requestBody") {
            let body_site = site.child(Segment::RequestBody);
            let (content, extensions) = self.content_holder(body, &body_site);
            op.request_body = Some(RequestBody {
                content,
                extensions,
            });
        }
        if let Some(responses) = map.get("responses").and_then(Value::as_object) {
            for (status, resp) in responses {
                if status.starts_with("x-") {
                    continue;
                }
                let resp_site = site.child(Segment::Response(status.clone()));
                let (content, extensions) = self.content_holder(resp, &resp_site);
                op.responses.insert(
                    status.clone(),
                    Response {
                        status: status.clone(),
                        content,
                        extensions,
                    },
                );
            }
        }
        op
    }

    /// Request bodies and responses share the `content` layout.
    fn content_holder(
        &mut self,
        value: &Value,
        site: &SitePath,
    ) -> (IndexMap<String, MediaType>, Extensions) {
        let mut content = IndexMap::new();
        let Some(map) = value.as_object() else {
            self.diagnostics
                .push(Diagnostic::error("invalid-node", "expected a mapping").at(site.clone()));
            return (content, Extensions::new());
        };
        if map.contains_key("$ref") {
            self.diagnostics.push(
                Diagnostic::warning(
                    "unsupported-reference",
                    "only schema references are followed",
                )
                .at(site.clone()),
            );
        }
        if let Some(media_map) = map.get("content").and_then(Value::as_object) {
            for (media_type, media) in media_map {
                let media_site = site.child(Segment::Content(media_type.clone()));
                let media_obj = media.as_object();
                let schema = media_obj.and_then(|m| m.get("schema")).map(|s| {
                    let schema_site = match slot_ref(s) {
                        Some(_) => media_site.clone(),
                        None => media_site.child(Segment::Schema(None)),
                    };
                    self.schema(s, &schema_site)
                });
                content.insert(
                    media_type.clone(),
                    MediaType {
                        media_type: media_type.clone(),
                        schema,
                        extensions: media_obj.map(extensions_of).unwrap_or_default(),
                    },
                );
            }
        }
        (content, extensions_of(map))
    }

    fn parameters(&mut self, value: Option<&Value>, site: &SitePath) -> Vec<Parameter> {
        let mut out: Vec<Parameter> = Vec::new();
        let Some(list) = value.and_then(Value::as_array) else {
            return out;
        };
        for entry in list {
            let Some(map) = entry.as_object() else {
                self.diagnostics.push(
                    Diagnostic::error("invalid-parameter", "parameter must be a mapping")
                        .at(site.clone()),
                );
                continue;
            };
            if map.contains_key("$ref") {
                self.diagnostics.push(
                    Diagnostic::warning(
                        "unsupported-reference",
                        "parameter references are not followed",
                    )
                    .at(site.clone()),
                );
                continue;
            }
            let name = str_field(map, "name");
            let location = map
                .get("in")
                .and_then(Value::as_str)
                .and_then(ParamLocation::parse);
            let (Some(name), Some(location)) = (name, location) else {
                self.diagnostics.push(
                    Diagnostic::error(
                        "invalid-parameter",
                        "parameter needs a `name` and an `in` of path, query, header or cookie",
                    )
                    .at(site.clone()),
                );
                continue;
            };
            let param_site = site.child(Segment::Parameter {
                location,
                name: name.clone(),
            });
            if out.iter().any(|p| p.name == name && p.location == location) {
                self.diagnostics.push(
                    Diagnostic::error(
                        "duplicate-parameter",
                        format!("parameter `{name}` in {location} is declared twice"),
                    )
                    .at(param_site),
                );
                continue;
            }
            let schema = map.get("schema").map(|s| {
                let schema_site = match slot_ref(s) {
                    Some(_) => param_site.clone(),
                    None => param_site.child(Segment::Schema(None)),
                };
                self.schema(s, &schema_site)
            });
            out.push(Parameter {
                name,
                location,
                schema,
                extensions: extensions_of(map),
            });
        }
        out
    }

    fn schema(&mut self, value: &Value, site: &SitePath) -> SchemaNode {
        let mut node = SchemaNode {
            kind: SchemaKind::Opaque,
            primitive_type: None,
            format: None,
            properties: IndexMap::new(),
            items: None,
            required: Vec::new(),
            extensions: Extensions::new(),
        };
        let Some(map) = value.as_object() else {
            return node;
        };
        node.extensions = extensions_of(map);

        if let Some(reference) = map.get("$ref") {
            let target = reference.as_str().unwrap_or_default();
            match target.strip_prefix(SCHEMA_REF_PREFIX) {
                Some(name) if self.component_names.iter().any(|c| c == name) => {
                    node.kind = SchemaKind::Reference(name.to_owned());
                }
                Some(name) => self.diagnostics.push(
                    Diagnostic::error(
                        "unresolved-reference",
                        format!("`$ref` target schema `{name}` does not exist"),
                    )
                    .at(site.clone()),
                ),
                None if target.starts_with('#') => self.diagnostics.push(
                    Diagnostic::warning(
                        "unsupported-reference",
                        format!("`$ref` `{target}` does not point at a component schema"),
                    )
                    .at(site.clone()),
                ),
                None => self.diagnostics.push(
                    Diagnostic::warning(
                        "remote-reference",
                        format!("remote `$ref` `{target}` is not fetched"),
                    )
                    .at(site.clone()),
                ),
            }
            return node;
        }

        let declared_type = match map.get("type") {
            Some(Value::String(t)) => Some(t.clone()),
            Some(Value::Array(ts)) => ts
                .iter()
                .filter_map(Value::as_str)
                .find(|t| *t != "null")
                .map(str::to_owned),
            _ => None,
        };
        node.format = str_field(map, "format");
        let has_properties = map.get("properties").is_some_and(Value::is_object);
        let composed = ["allOf", "oneOf", "anyOf"]
            .iter()
            .any(|k| map.contains_key(*k));

        if declared_type.as_deref() == Some("object") || has_properties {
            node.kind = SchemaKind::Object;
            if let Some(props) = map.get("properties").and_then(Value::as_object) {
                for (name, prop) in props {
                    let prop_site = site.child(Segment::Property(name.clone()));
                    node.properties
                        .insert(name.clone(), self.schema(prop, &prop_site));
                }
            }
            node.required = map
                .get("required")
                .and_then(Value::as_array)
                .map(|r| {
                    r.iter()
                        .filter_map(Value::as_str)
                        .map(str::to_owned)
                        .collect()
                })
                .unwrap_or_default();
        } else if declared_type.as_deref() == Some("array") || map.contains_key("items") {
            node.kind = SchemaKind::Array;
            if let Some(items) = map.get("items") {
                let items_site = site.child(Segment::Items);
                node.items = Some(Box::new(self.schema(items, &items_site)));
            }
        } else if composed && declared_type.is_none() {
            node.kind = SchemaKind::Opaque;
        } else {
            node.kind = SchemaKind::Primitive;
            node.primitive_type = declared_type;
        }
        node
    }
}

fn slot_ref(value: &Value) -> Option<&Value> {
    value.as_object().and_then(|m| m.get("$ref"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diagnostics::Severity;

    #[test]
    fn malformed_json_reports_position() {
        let errs = parse_document("{", SourceFormat::Auto).unwrap_err();
        assert_eq!(errs.len(), 1);
        assert_eq!(errs[0].code, "syntax-error");
        assert!(errs[0].position.is_some());
    }

    #[test]
    fn malformed_yaml_reports_position() {
        let errs =
            parse_document("openapi: 3.0.0\ninfo: [unclosed\n", SourceFormat::Yaml).unwrap_err();
        assert_eq!(errs[0].code, "syntax-error");
        assert!(errs[0].position.is_some());
    }

    #[test]
    fn rejects_non_3x_versions() {
        let errs =
            parse_document("swagger: '2.0'\ninfo: {title: a}\n", SourceFormat::Auto).unwrap_err();
        assert_eq!(errs[0].code, "unsupported-version");
        let errs = parse_document("openapi: 2.0.0\n", SourceFormat::Auto).unwrap_err();
        assert_eq!(errs[0].code, "unsupported-version");
    }

    #[test]
    fn empty_text_is_rejected() {
        assert_eq!(
            parse_document("  \n", SourceFormat::Auto).unwrap_err()[0].code,
            "empty-document"
        );
    }

    #[test]
    fn minimal_document() {
        let doc = parse_document(
            r#"{"openapi": "3.0.0", "info": {"title": "t", "version": "1"}, "paths": {}}"#,
            SourceFormat::Auto,
        )
        .unwrap();
        assert_eq!(doc.version, "3.0.0");
        assert!(doc.paths.is_empty());
        assert!(doc.components.is_empty());
        assert!(doc.diagnostics().is_empty());
    }

    #[test]
    fn unresolved_and_remote_refs_are_flagged() {
        let doc = parse_document(
            "openapi: 3.0.3\ninfo: {title: t, version: '1'}\npaths: {}\ncomponents:\n  schemas:\n    A:\n      type: object\n      properties:\n        b: {$ref: '#/components/schemas/Missing'}\n        c: {$ref: 'https://example.com/s.yaml#/C'}\n        d: {$ref: '#/components/schemas/A'}\n",
            SourceFormat::Yaml,
        )
        .unwrap();
        let codes: Vec<_> = doc.diagnostics().iter().map(|d| d.code.as_str()).collect();
        assert_eq!(codes, ["unresolved-reference", "remote-reference"]);
        assert_eq!(doc.diagnostics()[0].severity, Severity::Error);
        let a = &doc.components["A"];
        assert_eq!(a.properties["b"].kind, SchemaKind::Opaque);
        assert_eq!(a.properties["d"].kind, SchemaKind::Reference("A".into()));
        assert_eq!(
            doc.diagnostics()[0].site.as_ref().unwrap().to_string(),
            "root/schema:A/property:b"
        );
    }

    #[test]
    fn numeric_status_keys_become_strings() {
        let doc = parse_document(
            "openapi: 3.1.0\ninfo: {title: t, version: 1}\npaths:\n  /a:\n    get:\n      responses:\n        200:\n          description: ok\n",
            SourceFormat::Auto,
        )
        .unwrap();
        let op = &doc.paths["/a"].operations[&HttpMethod::Get];
        assert!(op.responses.contains_key("200"));
        assert_eq!(doc.info.version.as_deref(), Some("1"));
    }

    #[test]
    fn duplicate_parameters_are_diagnosed() {
        let doc = parse_document(
            "openapi: 3.0.0\ninfo: {title: t, version: '1'}\npaths:\n  /a:\n    get:\n      parameters:\n        - {name: id, in: query}\n        - {name: id, in: query}\n        - {name: id, in: header}\n      responses: {}\n",
            SourceFormat::Auto,
        )
        .unwrap();
        let op = &doc.paths["/a"].operations[&HttpMethod::Get];
        assert_eq!(op.parameters.len(), 2);
        assert_eq!(doc.diagnostics()[0].code, "duplicate-parameter");
    }

    #[test]
    fn duplicate_routes_are_a_syntax_error() {
        let errs = parse_document(
            "openapi: 3.0.0\ninfo: {title: t, version: '1'}\npaths:\n  /a: {}\n  /a: {}\n",
            SourceFormat::Yaml,
        )
        .unwrap_err();
        assert_eq!(errs[0].code, "syntax-error");
    }
}
