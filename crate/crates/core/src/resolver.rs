//! Personal-data indicators and their effective transparency properties.
//!
//! A node becomes an indicator when it carries `x-tira` itself, or sits
//! below a marked schema without an `x-tira-ignore: true` in between.
//! Marked schemas report their non-ignored leaf properties as constituent
//! fields instead of producing one indicator per field.
//!
//! Indicators are found by walking the document the way a request travels:
//! from each path item down through operations, bodies and responses, and
//! through `$ref`s into component schemas. A component that is reached
//! from two operations therefore yields two indicators with different
//! addresses, each inheriting from its own chain of ancestors. Components
//! that are never referenced are walked from `root/schema:<Name>`.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::diagnostics::Diagnostic;
use crate::openapi::{
    annotation_sites, resolve_site, Extensions, OpenApiDocument, Parameter, SchemaKind, SchemaNode,
    Segment, SiteNode, SitePath,
};
use crate::vocabulary::{
    parse_property_block, ServiceRow, TransparencyProperty, VocabularyKind, TIRA_IGNORE_KEY,
    TIRA_KEY,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IndicatorScope {
    Service,
    Schema,
    Property,
    Parameter,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PdIndicator {
    pub name: String,
    pub site: SitePath,
    pub scope: IndicatorScope,
    /// False only for the whole-service indicator declared at the root.
    pub service_local: bool,
    pub direct_properties: Vec<TransparencyProperty>,
    /// Leaf fields of a marked schema (`weight`, `address.street`), or the
    /// covered schema names for a whole-service indicator.
    pub constituents: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EffectiveProperties {
    pub indicator: PdIndicator,
    pub by_kind: BTreeMap<VocabularyKind, Vec<TransparencyProperty>>,
    pub provenance: BTreeMap<VocabularyKind, SitePath>,
}

impl EffectiveProperties {
    pub fn get(&self, kind: VocabularyKind) -> &[TransparencyProperty] {
        self.by_kind.get(&kind).map(Vec::as_slice).unwrap_or(&[])
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Mark {
    Unmarked,
    Marked,
    Ignored,
}

/// Marking state of one node. A node carrying both `x-tira` and
/// `x-tira-ignore: true` counts as ignored (and is diagnosed elsewhere).
fn mark_of(ext: &Extensions) -> Mark {
    if ext.get(TIRA_IGNORE_KEY) == Some(&Value::Bool(true)) {
        Mark::Ignored
    } else if ext.contains_key(TIRA_KEY) {
        Mark::Marked
    } else {
        Mark::Unmarked
    }
}

fn direct_properties(ext: &Extensions, site: &SitePath) -> Vec<TransparencyProperty> {
    ext.get(TIRA_KEY)
        .map(|raw| parse_property_block(raw, site).properties)
        .unwrap_or_default()
}

/// All indicators of `doc`, in walk order.
pub fn extract_pd_indicators(doc: &OpenApiDocument) -> Vec<PdIndicator> {
    let mut walker = Walker {
        doc,
        out: Vec::new(),
    };
    let root = SitePath::root();

    if mark_of(&doc.root_extensions) == Mark::Marked {
        let covered = doc
            .components
            .iter()
            .filter(|(_, s)| mark_of(&s.extensions) != Mark::Ignored)
            .map(|(name, _)| name.clone())
            .collect();
        walker.out.push(PdIndicator {
            name: if doc.info.title.trim().is_empty() {
                root.display_name()
            } else {
                doc.info.title.clone()
            },
            site: root.clone(),
            scope: IndicatorScope::Service,
            service_local: false,
            direct_properties: direct_properties(&doc.root_extensions, &root),
            constituents: covered,
        });
    }

    for (route, item) in &doc.paths {
        let item_site = root.child(Segment::Path(route.clone()));
        walker.parameters(&item_site, &item.parameters);
        for (method, op) in &item.operations {
            let op_site = item_site.child(Segment::Operation(*method));
            walker.parameters(&op_site, &op.parameters);
            let bodies = op
                .request_body
                .iter()
                .map(|b| (op_site.child(Segment::RequestBody), &b.content))
                .chain(
                    op.responses
                        .iter()
                        .map(|(s, r)| (op_site.child(Segment::Response(s.clone())), &r.content)),
                );
            for (holder_site, content) in bodies {
                for (media_type, media) in content {
                    let media_site = holder_site.child(Segment::Content(media_type.clone()));
                    if let Some(schema) = &media.schema {
                        walker.slot(&media_site, schema);
                    }
                }
            }
        }
    }

    let referenced = referenced_components(doc);
    for (name, schema) in &doc.components {
        if !referenced.contains(name.as_str()) {
            walker.component(name, schema);
        }
    }
    // Components only reachable through reference cycles.
    for (name, schema) in &doc.components {
        if mark_of(&schema.extensions) == Mark::Marked
            && !walker
                .out
                .iter()
                .any(|i| i.site.last() == &Segment::Schema(Some(name.clone())))
        {
            walker.component(name, schema);
        }
    }
    walker.out
}

struct Walker<'a> {
    doc: &'a OpenApiDocument,
    out: Vec<PdIndicator>,
}

impl<'a> Walker<'a> {
    fn parameters(&mut self, parent: &SitePath, params: &'a [Parameter]) {
        for p in params {
            let site = parent.child(Segment::Parameter {
                location: p.location,
                name: p.name.clone(),
            });
            if mark_of(&p.extensions) == Mark::Marked {
                self.out.push(PdIndicator {
                    name: site.display_name(),
                    site: site.clone(),
                    scope: IndicatorScope::Parameter,
                    service_local: true,
                    direct_properties: direct_properties(&p.extensions, &site),
                    constituents: Vec::new(),
                });
            }
            if let Some(schema) = &p.schema {
                self.slot(&site, schema);
            }
        }
    }

    fn component(&mut self, name: &str, schema: &'a SchemaNode) {
        let site = SitePath::root().child(Segment::Schema(Some(name.to_owned())));
        let mut stack = vec![name.to_owned()];
        self.schema(&site, schema, &mut stack);
    }

    /// A schema slot of a media type or parameter: inline or `$ref`.
    fn slot(&mut self, parent: &SitePath, schema: &'a SchemaNode) {
        let mut stack = Vec::new();
        match schema.reference_target() {
            Some(target) => self.follow(parent, target, &mut stack),
            None => self.schema(&parent.child(Segment::Schema(None)), schema, &mut stack),
        }
    }

    fn follow(&mut self, parent: &SitePath, target: &str, stack: &mut Vec<String>) {
        if stack.iter().any(|s| s == target) {
            return;
        }
        let Some(component) = self.doc.components.get(target) else {
            return;
        };
        stack.push(target.to_owned());
        let site = parent.child(Segment::Schema(Some(target.to_owned())));
        self.schema(&site, component, stack);
        stack.pop();
    }

    fn schema(&mut self, site: &SitePath, node: &'a SchemaNode, stack: &mut Vec<String>) {
        if mark_of(&node.extensions) == Mark::Marked {
            let scope = match site.last() {
                Segment::Property(_) | Segment::Items => IndicatorScope::Property,
                _ => IndicatorScope::Schema,
            };
            self.out.push(PdIndicator {
                name: site.display_name(),
                site: site.clone(),
                scope,
                service_local: true,
                direct_properties: direct_properties(&node.extensions, site),
                constituents: leaf_fields(self.doc, node, stack),
            });
        }
        if let Some(target) = node.reference_target() {
            self.follow(site, target, stack);
            return;
        }
        for (name, prop) in &node.properties {
            self.schema(&site.child(Segment::Property(name.clone())), prop, stack);
        }
        if let Some(items) = &node.items {
            self.schema(&site.child(Segment::Items), items, stack);
        }
    }
}

fn referenced_components(doc: &OpenApiDocument) -> BTreeSet<&str> {
    fn collect<'a>(node: &'a SchemaNode, out: &mut BTreeSet<&'a str>) {
        if let Some(t) = node.reference_target() {
            out.insert(t);
        }
        for p in node.properties.values() {
            collect(p, out);
        }
        if let Some(items) = &node.items {
            collect(items, out);
        }
    }
    let mut out = BTreeSet::new();
    for item in doc.paths.values() {
        let params = item
            .parameters
            .iter()
            .chain(item.operations.values().flat_map(|o| o.parameters.iter()));
        for p in params {
            if let Some(s) = &p.schema {
                collect(s, &mut out);
            }
        }
        for op in item.operations.values() {
            let media = op
                .request_body
                .iter()
                .flat_map(|b| b.content.values())
                .chain(op.responses.values().flat_map(|r| r.content.values()));
            for m in media {
                if let Some(s) = &m.schema {
                    collect(s, &mut out);
                }
            }
        }
    }
    for (name, schema) in &doc.components {
        let mut inner = BTreeSet::new();
        collect(schema, &mut inner);
        // A self-reference does not make a component reachable.
        inner.remove(name.as_str());
        out.extend(inner);
    }
    out
}

/// Dotted names of the non-ignored leaf properties below `node`.
fn leaf_fields(doc: &OpenApiDocument, node: &SchemaNode, enclosing: &[String]) -> Vec<String> {
    fn walk(
        doc: &OpenApiDocument,
        node: &SchemaNode,
        prefix: &str,
        stack: &mut Vec<String>,
        out: &mut Vec<String>,
    ) {
        for (name, prop) in &node.properties {
            if mark_of(&prop.extensions) == Mark::Ignored {
                continue;
            }
            let path = format!("{prefix}{name}");
            descend(doc, prop, path, stack, out);
        }
    }
    fn descend(
        doc: &OpenApiDocument,
        node: &SchemaNode,
        path: String,
        stack: &mut Vec<String>,
        out: &mut Vec<String>,
    ) {
        match &node.kind {
            SchemaKind::Object if !node.properties.is_empty() => {
                walk(doc, node, &format!("{path}."), stack, out)
            }
            SchemaKind::Array => match node.items.as_deref() {
                Some(items) if mark_of(&items.extensions) != Mark::Ignored => {
                    descend(doc, items, format!("{path}[]"), stack, out)
                }
                Some(_) => {}
                None => out.push(path),
            },
            SchemaKind::Reference(target) if !stack.contains(target) => {
                match doc.components.get(target) {
                    Some(c) if mark_of(&c.extensions) == Mark::Ignored => {}
                    Some(c) => {
                        stack.push(target.clone());
                        descend(doc, c, path, stack, out);
                        stack.pop();
                    }
                    None => out.push(path),
                }
            }
            _ => out.push(path),
        }
    }
    let mut out = Vec::new();
    let mut stack = enclosing.to_vec();
    match &node.kind {
        SchemaKind::Array => {
            if let Some(items) = node.items.as_deref() {
                descend(doc, items, "[]".to_owned(), &mut stack, &mut out);
                if out == ["[]"] {
                    out.clear();
                }
            }
        }
        _ => walk(doc, node, "", &mut stack, &mut out),
    }
    out
}

/// Effective properties of `indicator`: for each kind, the declaration
/// nearest to the indicator on its ancestor chain. List kinds declared on
/// the same node accumulate; a nearer node replaces a farther one.
pub fn resolve_effective(doc: &OpenApiDocument, indicator: &PdIndicator) -> EffectiveProperties {
    let mut by_kind: BTreeMap<VocabularyKind, Vec<TransparencyProperty>> = BTreeMap::new();
    let mut provenance = BTreeMap::new();
    for prefix in indicator.site.ancestors_and_self() {
        let Some(node) = resolve_site(doc, &prefix) else {
            continue;
        };
        let props = direct_properties(node.extensions(), &prefix);
        let mut level: BTreeMap<VocabularyKind, Vec<TransparencyProperty>> = BTreeMap::new();
        for p in props {
            level.entry(p.kind()).or_default().push(p);
        }
        for (kind, values) in level {
            by_kind.insert(kind, values);
            provenance.insert(kind, prefix.clone());
        }
    }
    EffectiveProperties {
        indicator: indicator.clone(),
        by_kind,
        provenance,
    }
}

/// Indicators with their effective properties, in extraction order.
pub fn analyze(doc: &OpenApiDocument) -> Vec<EffectiveProperties> {
    extract_pd_indicators(doc)
        .iter()
        .map(|i| resolve_effective(doc, i))
        .collect()
}

/// Marker and vocabulary findings for every written annotation site.
pub fn annotation_diagnostics(doc: &OpenApiDocument) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    for site in annotation_sites(doc) {
        let ext = site.extensions;
        let tira = ext.get(TIRA_KEY);
        match ext.get(TIRA_IGNORE_KEY) {
            None | Some(Value::Bool(true)) => {}
            Some(other) => out.push(
                Diagnostic::warning(
                    "invalid-ignore",
                    format!("`x-tira-ignore` only accepts `true`, found `{other}`; the node is not exempted"),
                )
                .at(site.path.clone()),
            ),
        }
        if tira.is_some() && ext.get(TIRA_IGNORE_KEY) == Some(&Value::Bool(true)) {
            out.push(
                Diagnostic::error(
                    "conflicting-marks",
                    "node carries both `x-tira` and `x-tira-ignore: true`; treated as ignored",
                )
                .at(site.path.clone()),
            );
        }
        if let Some(raw) = tira {
            out.extend(parse_property_block(raw, &site.path).diagnostics);
            let marks_nothing = matches!(
                site.path.last(),
                Segment::Path(_)
                    | Segment::Operation(_)
                    | Segment::RequestBody
                    | Segment::Response(_)
                    | Segment::Content(_)
            );
            if marks_nothing && !raw.is_object() {
                out.push(
                    Diagnostic::warning(
                        "marker-without-effect",
                        "a bare `x-tira` marker only declares indicators on schemas, properties, parameters or the document root",
                    )
                    .at(site.path.clone()),
                );
            }
        }
    }
    out
}

/// Lints a whole service description.
///
/// Errors for invalid vocabulary and conflicting marks; a warning per
/// indicator that lacks a purpose or a retention time; an info for the
/// other unspecified service-level rows; a single info when the service
/// declares no personal data at all.
pub fn validate_service(doc: &OpenApiDocument) -> Vec<Diagnostic> {
    let mut out: Vec<Diagnostic> = doc.diagnostics().to_vec();
    out.extend(annotation_diagnostics(doc));
    let effective = analyze(doc);
    if effective.is_empty() {
        out.push(
            Diagnostic::info(
                "no-personal-data",
                "no personal-data indicators declared; the service does not process personal data",
            )
            .at(SitePath::root()),
        );
        return out;
    }
    for eff in &effective {
        let ind = &eff.indicator;
        for row in ServiceRow::ALL {
            let kind = row.kind();
            if eff.by_kind.contains_key(&kind) {
                continue;
            }
            let diag = match kind {
                VocabularyKind::Purpose => Diagnostic::warning(
                    "missing-purpose",
                    format!("indicator `{}` declares no purpose", ind.name),
                ),
                VocabularyKind::RetentionTime => Diagnostic::warning(
                    "missing-retention",
                    format!("indicator `{}` declares no retention time", ind.name),
                ),
                _ => Diagnostic::info(
                    "unspecified-property",
                    format!(
                        "indicator `{}` leaves `{}` unspecified",
                        ind.name,
                        kind.block_key()
                    ),
                ),
            };
            out.push(diag.at(ind.site.clone()));
        }
    }
    out
}

/// The node an indicator points at, for callers that want to show it.
pub fn indicator_node<'a>(doc: &'a OpenApiDocument, ind: &PdIndicator) -> Option<SiteNode<'a>> {
    resolve_site(doc, &ind.site)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diagnostics::Severity;
    use crate::openapi::{parse_document, SourceFormat};
    use crate::vocabulary::{Duration, PropertyValue, RetentionTime};

    fn doc(text: &str) -> OpenApiDocument {
        parse_document(text, SourceFormat::Yaml).unwrap()
    }

    const HEADER: &str = "openapi: 3.0.3\ninfo: {title: Test, version: '1'}\n";

    #[test]
    fn no_markings_no_indicators() {
        let d = doc(&format!(
            "{HEADER}paths:\n  /a:\n    get:\n      responses:\n        '200': {{description: ok}}\n"
        ));
        assert!(extract_pd_indicators(&d).is_empty());
        let diags = validate_service(&d);
        assert_eq!(diags.len(), 1);
        assert_eq!(diags[0].severity, Severity::Info);
        assert_eq!(diags[0].code, "no-personal-data");
    }

    #[test]
    fn pathitem_retention_is_inherited() {
        let d = doc(&format!(
            r#"{HEADER}paths:
  /weights:
    x-tira: {{retention_time: {{days: 30}}}}
    post:
      requestBody:
        content:
          application/json:
            schema: {{$ref: '#/components/schemas/Weight'}}
      responses: {{}}
components:
  schemas:
    Weight:
      x-tira: true
      type: object
      properties:
        weight: {{type: number}}
"#
        ));
        let inds = extract_pd_indicators(&d);
        assert_eq!(inds.len(), 1);
        let eff = resolve_effective(&d, &inds[0]);
        let path_site: SitePath = "root/path:~1weights".parse().unwrap();
        assert_eq!(eff.provenance[&VocabularyKind::RetentionTime], path_site);
        assert_eq!(
            eff.get(VocabularyKind::RetentionTime)[0].value,
            PropertyValue::RetentionTime(RetentionTime::period(Duration::days(30)))
        );
    }

    #[test]
    fn schema_overrides_root() {
        let d = doc(&format!(
            r#"{HEADER}x-tira: {{retention_time: {{days: 30}}}}
paths: {{}}
components:
  schemas:
    Weight:
      x-tira: {{retention_time: {{years: 10}}}}
      type: object
      properties:
        weight: {{type: number}}
"#
        ));
        let inds = extract_pd_indicators(&d);
        assert_eq!(inds.len(), 2);
        assert_eq!(inds[0].scope, IndicatorScope::Service);
        assert!(!inds[0].service_local);
        assert_eq!(inds[0].constituents, ["Weight"]);
        let eff = resolve_effective(&d, &inds[1]);
        assert_eq!(
            eff.get(VocabularyKind::RetentionTime)[0].value,
            PropertyValue::RetentionTime(RetentionTime::period(Duration::years(10)))
        );
    }

    #[test]
    fn same_level_lists_accumulate_across_levels_replace() {
        let d = doc(&format!(
            r#"{HEADER}x-tira:
  recipients: [{{name: A}}, {{name: B}}]
paths: {{}}
components:
  schemas:
    S:
      x-tira:
        recipients: [{{name: C}}]
      type: object
      properties:
        p:
          type: string
          x-tira: {{purposes: [{{id: x}}, {{id: y}}]}}
"#
        ));
        let inds = extract_pd_indicators(&d);
        let names: Vec<_> = inds.iter().map(|i| i.name.as_str()).collect();
        assert_eq!(names, ["Test", "S", "S.p"]);
        let root = resolve_effective(&d, &inds[0]);
        assert_eq!(root.get(VocabularyKind::Recipient).len(), 2);
        let s = resolve_effective(&d, &inds[1]);
        assert_eq!(s.get(VocabularyKind::Recipient).len(), 1);
        let p = resolve_effective(&d, &inds[2]);
        assert_eq!(p.get(VocabularyKind::Recipient).len(), 1);
        assert_eq!(p.get(VocabularyKind::Purpose).len(), 2);
        assert_eq!(
            p.provenance[&VocabularyKind::Recipient].to_string(),
            "root/schema:S"
        );
    }

    #[test]
    fn conflicting_marks_are_errors_and_ignored() {
        let d = doc(&format!(
            r#"{HEADER}paths: {{}}
components:
  schemas:
    S:
      type: object
      x-tira: true
      x-tira-ignore: true
      properties:
        a: {{type: string, x-tira-ignore: yes-please}}
"#
        ));
        assert!(extract_pd_indicators(&d).is_empty());
        let diags = annotation_diagnostics(&d);
        let codes: Vec<_> = diags.iter().map(|d| d.code.as_str()).collect();
        assert_eq!(codes, ["conflicting-marks", "invalid-ignore"]);
    }

    #[test]
    fn shared_component_yields_one_indicator_per_use() {
        let d = doc(&format!(
            r#"{HEADER}paths:
  /a:
    get:
      responses:
        '200':
          description: ok
          content:
            application/json:
              schema: {{$ref: '#/components/schemas/User'}}
    put:
      requestBody:
        content:
          application/json:
            schema: {{$ref: '#/components/schemas/User'}}
      responses: {{}}
components:
  schemas:
    User:
      x-tira: true
      type: object
      properties:
        name: {{type: string}}
        friends:
          type: array
          items: {{$ref: '#/components/schemas/User'}}
"#
        ));
        let inds = extract_pd_indicators(&d);
        let sites: Vec<String> = inds.iter().map(|i| i.site.to_string()).collect();
        assert_eq!(
            sites,
            [
                "root/path:~1a/op:get/response:200/content:application~1json/schema:User",
                "root/path:~1a/op:put/requestBody/content:application~1json/schema:User",
            ]
        );
        assert_eq!(inds[0].constituents, ["name", "friends[]"]);
    }

    #[test]
    fn marked_parameters_are_indicators() {
        let d = doc(&format!(
            r#"{HEADER}paths:
  /users/{{id}}:
    parameters:
      - {{name: id, in: path, required: true, schema: {{type: string}}, x-tira: true}}
    get:
      parameters:
        - {{name: session, in: cookie, x-tira: {{purposes: [login]}}}}
      responses: {{}}
"#
        ));
        let inds = extract_pd_indicators(&d);
        let names: Vec<_> = inds.iter().map(|i| (i.name.as_str(), i.scope)).collect();
        assert_eq!(
            names,
            [
                ("id", IndicatorScope::Parameter),
                ("session", IndicatorScope::Parameter)
            ]
        );
        assert_eq!(inds[1].direct_properties.len(), 1);
    }

    #[test]
    fn invalid_root_retention_names_the_site() {
        let d = doc(&format!(
            "{HEADER}x-tira: {{retention_time: {{years: -1}}}}\npaths: {{}}\n"
        ));
        let errors: Vec<_> = validate_service(&d)
            .into_iter()
            .filter(Diagnostic::is_error)
            .collect();
        assert_eq!(errors.len(), 1);
        assert_eq!(errors[0].site, Some(SitePath::root()));
    }
}
