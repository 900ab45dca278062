use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::openapi::{OpenApiDocument, SitePath};
use crate::resolver::{analyze, EffectiveProperties};
use crate::vocabulary::VocabularyKind;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PropertyChange {
    pub site: SitePath,
    pub kind: VocabularyKind,
    /// Element values in effect before and after; `null` when absent.
    pub before: Value,
    pub after: Value,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpecDiff {
    pub indicators_added: Vec<SitePath>,
    pub indicators_removed: Vec<SitePath>,
    pub properties_changed: Vec<PropertyChange>,
}

impl SpecDiff {
    pub fn is_empty(&self) -> bool {
        self.indicators_added.is_empty()
            && self.indicators_removed.is_empty()
            && self.properties_changed.is_empty()
    }
}

/// Values of one kind, independent of where they were declared. Moving a
/// property between levels without changing what applies is not a change.
fn kind_value(eff: &EffectiveProperties, kind: VocabularyKind) -> Value {
    let values: Vec<Value> = eff
        .get(kind)
        .iter()
        .map(|p| p.value.element_value())
        .collect();
    match values.len() {
        0 => Value::Null,
        _ if kind.is_list() => Value::Array(values),
        _ => values.into_iter().next().expect("one value"),
    }
}

fn by_site(doc: &OpenApiDocument) -> BTreeMap<SitePath, EffectiveProperties> {
    analyze(doc)
        .into_iter()
        .map(|e| (e.indicator.site.clone(), e))
        .collect()
}

/// Compares what two documents declare, not how they are written.
pub fn diff_documents(before: &OpenApiDocument, after: &OpenApiDocument) -> SpecDiff {
    let a = by_site(before);
    let b = by_site(after);
    let mut diff = SpecDiff::default();
    for site in a.keys().filter(|s| !b.contains_key(*s)) {
        diff.indicators_removed.push(site.clone());
    }
    for (site, new) in &b {
        let Some(old) = a.get(site) else {
            diff.indicators_added.push(site.clone());
            continue;
        };
        for kind in VocabularyKind::ALL {
            let (x, y) = (kind_value(old, kind), kind_value(new, kind));
            if x != y {
                diff.properties_changed.push(PropertyChange {
                    site: site.clone(),
                    kind,
                    before: x,
                    after: y,
                });
            }
        }
    }
    diff
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::openapi::{parse_document, SourceFormat};

    fn doc(s: &str) -> OpenApiDocument {
        parse_document(s, SourceFormat::Yaml).unwrap()
    }

    const BASE: &str = r#"
openapi: 3.0.3
info: {title: t, version: '1'}
paths: {}
components:
  schemas:
    Weight:
      x-tira:
        purposes: [{id: tracking, description: weight tracking}]
      type: object
      properties:
        weight: {type: number}
"#;

    #[test]
    fn identical_documents_have_empty_diff() {
        assert!(diff_documents(&doc(BASE), &doc(BASE)).is_empty());
    }

    #[test]
    fn edited_purpose_description_is_one_change() {
        let edited = BASE.replace("weight tracking", "body weight tracking");
        let d = diff_documents(&doc(BASE), &doc(&edited));
        assert!(d.indicators_added.is_empty() && d.indicators_removed.is_empty());
        assert_eq!(d.properties_changed.len(), 1);
        assert_eq!(d.properties_changed[0].kind, VocabularyKind::Purpose);
    }

    #[test]
    fn new_marking_is_an_added_indicator() {
        let more = format!(
            "{BASE}    Height:\n      x-tira: true\n      type: object\n      properties:\n        cm: {{type: number}}\n"
        );
        let d = diff_documents(&doc(BASE), &doc(&more));
        assert_eq!(d.indicators_added.len(), 1);
        assert_eq!(d.indicators_added[0].to_string(), "root/schema:Height");
        let back = diff_documents(&doc(&more), &doc(BASE));
        assert_eq!(back.indicators_removed, d.indicators_added);
    }
}
