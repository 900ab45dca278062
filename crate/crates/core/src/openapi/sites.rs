use super::{
    Extensions, MediaType, OpenApiDocument, Operation, Parameter, PathItem, RequestBody, Response,
    SchemaKind, SchemaNode, Segment, SitePath,
};

/// A node of the document addressed by a [`SitePath`].
#[derive(Clone, Copy, Debug)]
pub enum SiteNode<'a> {
    Root(&'a OpenApiDocument),
    PathItem(&'a PathItem),
    Operation(&'a Operation),
    Parameter(&'a Parameter),
    RequestBody(&'a RequestBody),
    Response(&'a Response),
    Media(&'a MediaType),
    Schema(&'a SchemaNode),
}

impl<'a> SiteNode<'a> {
    pub fn extensions(&self) -> &'a Extensions {
        match *self {
            SiteNode::Root(d) => &d.root_extensions,
            SiteNode::PathItem(p) => &p.extensions,
            SiteNode::Operation(o) => &o.extensions,
            SiteNode::Parameter(p) => &p.extensions,
            SiteNode::RequestBody(b) => &b.extensions,
            SiteNode::Response(r) => &r.extensions,
            SiteNode::Media(m) => &m.extensions,
            SiteNode::Schema(s) => &s.extensions,
        }
    }

    pub fn as_schema(&self) -> Option<&'a SchemaNode> {
        match *self {
            SiteNode::Schema(s) => Some(s),
            _ => None,
        }
    }
}

fn schema_slot<'a>(slot: Option<&'a SchemaNode>, seg: &Option<String>) -> Option<&'a SchemaNode> {
    let slot = slot?;
    match (seg, &slot.kind) {
        (None, SchemaKind::Reference(_)) => None,
        (None, _) => Some(slot),
        (Some(_), _) => None,
    }
}

/// Follows `path` from the document root. Returns `None` when any segment
/// does not name an existing node.
pub fn resolve_site<'a>(doc: &'a OpenApiDocument, path: &SitePath) -> Option<SiteNode<'a>> {
    let mut node = SiteNode::Root(doc);
    for seg in &path.segments()[1..] {
        node = match (node, seg) {
            (SiteNode::Root(d), Segment::Path(route)) => SiteNode::PathItem(d.paths.get(route)?),
            (SiteNode::Root(d), Segment::Schema(Some(name))) => {
                SiteNode::Schema(d.components.get(name)?)
            }
            (SiteNode::PathItem(p), Segment::Operation(m)) => {
                SiteNode::Operation(p.operations.get(m)?)
            }
            (SiteNode::PathItem(p), Segment::Parameter { location, name }) => SiteNode::Parameter(
                p.parameters
                    .iter()
                    .find(|x| x.location == *location && &x.name == name)?,
            ),
            (SiteNode::Operation(o), Segment::Parameter { location, name }) => SiteNode::Parameter(
                o.parameters
                    .iter()
                    .find(|x| x.location == *location && &x.name == name)?,
            ),
            (SiteNode::Operation(o), Segment::RequestBody) => {
                SiteNode::RequestBody(o.request_body.as_ref()?)
            }
            (SiteNode::Operation(o), Segment::Response(status)) => {
                SiteNode::Response(o.responses.get(status)?)
            }
            (SiteNode::RequestBody(b), Segment::Content(m)) => SiteNode::Media(b.content.get(m)?),
            (SiteNode::Response(r), Segment::Content(m)) => SiteNode::Media(r.content.get(m)?),
            (SiteNode::Media(m), Segment::Schema(name)) => {
                SiteNode::Schema(follow_slot(doc, m.schema.as_ref(), name)?)
            }
            (SiteNode::Parameter(p), Segment::Schema(name)) => {
                SiteNode::Schema(follow_slot(doc, p.schema.as_ref(), name)?)
            }
            (SiteNode::Schema(s), Segment::Schema(Some(name))) => {
                if s.reference_target() != Some(name.as_str()) {
                    return None;
                }
                SiteNode::Schema(doc.components.get(name)?)
            }
            (SiteNode::Schema(s), Segment::Property(p)) => SiteNode::Schema(s.properties.get(p)?),
            (SiteNode::Schema(s), Segment::Items) => SiteNode::Schema(s.items.as_deref()?),
            _ => return None,
        };
    }
    Some(node)
}

fn follow_slot<'a>(
    doc: &'a OpenApiDocument,
    slot: Option<&'a SchemaNode>,
    name: &Option<String>,
) -> Option<&'a SchemaNode> {
    match name {
        None => schema_slot(slot, name),
        Some(target) => {
            if slot?.reference_target() != Some(target.as_str()) {
                return None;
            }
            doc.components.get(target)
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AnnotationSite<'a> {
    pub path: SitePath,
    pub extensions: &'a Extensions,
}

/// Every place an `x-tira` annotation may be written, in document order.
///
/// This is the written tree: `$ref` slots are not followed, so each
/// component schema appears once, under `root/schema:<Name>`.
pub fn annotation_sites(doc: &OpenApiDocument) -> Vec<AnnotationSite<'_>> {
    let mut out = Vec::new();
    let root = SitePath::root();
    out.push(AnnotationSite {
        path: root.clone(),
        extensions: &doc.root_extensions,
    });
    for (route, item) in &doc.paths {
        let item_site = root.child(Segment::Path(route.clone()));
        out.push(AnnotationSite {
            path: item_site.clone(),
            extensions: &item.extensions,
        });
        push_parameters(&mut out, &item_site, &item.parameters);
        for (method, op) in &item.operations {
            let op_site = item_site.child(Segment::Operation(*method));
            out.push(AnnotationSite {
                path: op_site.clone(),
                extensions: &op.extensions,
            });
            push_parameters(&mut out, &op_site, &op.parameters);
            if let Some(body) = &op.request_body {
                let body_site = op_site.child(Segment::RequestBody);
                out.push(AnnotationSite {
                    path: body_site.clone(),
                    extensions: &body.extensions,
                });
                push_content(&mut out, &body_site, body.content.values());
            }
            for (status, resp) in &op.responses {
                let resp_site = op_site.child(Segment::Response(status.clone()));
                out.push(AnnotationSite {
                    path: resp_site.clone(),
                    extensions: &resp.extensions,
                });
                push_content(&mut out, &resp_site, resp.content.values());
            }
        }
    }
    for (name, schema) in &doc.components {
        push_schema(
            &mut out,
            root.child(Segment::Schema(Some(name.clone()))),
            schema,
        );
    }
    out
}

fn push_parameters<'a>(
    out: &mut Vec<AnnotationSite<'a>>,
    parent: &SitePath,
    params: &'a [Parameter],
) {
    for p in params {
        let site = parent.child(Segment::Parameter {
            location: p.location,
            name: p.name.clone(),
        });
        out.push(AnnotationSite {
            path: site.clone(),
            extensions: &p.extensions,
        });
        push_slot(out, &site, p.schema.as_ref());
    }
}

fn push_content<'a>(
    out: &mut Vec<AnnotationSite<'a>>,
    parent: &SitePath,
    media: impl Iterator<Item = &'a MediaType>,
) {
    for m in media {
        let site = parent.child(Segment::Content(m.media_type.clone()));
        out.push(AnnotationSite {
            path: site.clone(),
            extensions: &m.extensions,
        });
        push_slot(out, &site, m.schema.as_ref());
    }
}

fn push_slot<'a>(
    out: &mut Vec<AnnotationSite<'a>>,
    parent: &SitePath,
    slot: Option<&'a SchemaNode>,
) {
    if let Some(schema) = slot {
        if schema.reference_target().is_none() {
            push_schema(out, parent.child(Segment::Schema(None)), schema);
        }
    }
}

fn push_schema<'a>(out: &mut Vec<AnnotationSite<'a>>, site: SitePath, schema: &'a SchemaNode) {
    out.push(AnnotationSite {
        path: site.clone(),
        extensions: &schema.extensions,
    });
    for (name, prop) in &schema.properties {
        push_schema(out, site.child(Segment::Property(name.clone())), prop);
    }
    if let Some(items) = &schema.items {
        push_schema(out, site.child(Segment::Items), items);
    }
}
