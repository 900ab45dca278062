//! Cross-service aggregation of transparency properties.
//!
//! Each vocabulary kind has its own merge function. All of them are
//! commutative, associative and idempotent, so the result never depends
//! on the order in which services were registered. Retention times join
//! on the scale `volatile < unspecified < finite period < no_limit`.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::openapi::SitePath;
use crate::resolver::{EffectiveProperties, IndicatorScope};
use crate::vocabulary::{
    DataCategory, Duration, PropertyValue, Purpose, Recipient, RetentionTime, Source,
    ThirdCountryTransfer, TransparencyProperty, VocabularyKind,
};

/// Position of a retention time on the storage scale. Review flags are
/// joined independently and do not take part.
fn storage_cmp(a: &RetentionTime, b: &RetentionTime) -> Ordering {
    fn rank(r: &RetentionTime) -> u8 {
        if r.no_limit {
            3
        } else if r.period.is_some() {
            2
        } else if r.volatile {
            0
        } else {
            1
        }
    }
    rank(a)
        .cmp(&rank(b))
        .then_with(|| match (&a.period, &b.period) {
            (Some(x), Some(y)) => x.cmp_length(y),
            _ => Ordering::Equal,
        })
}

fn shorter(a: Option<Duration>, b: Option<Duration>) -> Option<Duration> {
    match (a, b) {
        (Some(x), Some(y)) => Some(if x.cmp_length(&y) == Ordering::Greater {
            y
        } else {
            x
        }),
        (x, None) => x,
        (None, y) => y,
    }
}

/// Least upper bound of two retention times.
///
/// The longer storage wins verbatim (no unit conversion leaks out);
/// `periodic_review` is or-ed and the stricter review frequency is kept.
pub fn merge_retention(a: &RetentionTime, b: &RetentionTime) -> RetentionTime {
    let longer = if storage_cmp(a, b) == Ordering::Less {
        b
    } else {
        a
    };
    RetentionTime {
        period: longer.period,
        volatile: longer.volatile,
        no_limit: longer.no_limit,
        periodic_review: a.periodic_review || b.periodic_review,
        review_frequency: shorter(a.review_frequency, b.review_frequency),
    }
}

/// One transparency property as declared for one indicator of one service.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Contribution {
    pub service: String,
    pub site: SitePath,
    pub property: TransparencyProperty,
}

impl Contribution {
    fn sort_key(&self) -> (String, String, String) {
        (
            self.service.clone(),
            self.site.to_string(),
            serde_json::to_string(&self.property).expect("properties serialize"),
        )
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProfilingExplanation {
    pub service: String,
    pub site: SitePath,
    pub explanation: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MergedProfiling {
    pub performed: bool,
    pub explanations: Vec<ProfilingExplanation>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MergedSpecialCategory {
    pub applies: bool,
    pub grounds: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum MergedValue {
    RetentionTime(RetentionTime),
    Recipient(Vec<Recipient>),
    ThirdCountryTransfer(ThirdCountryTransfer),
    SpecialCategory(MergedSpecialCategory),
    Profiling(MergedProfiling),
    Purpose(Vec<Purpose>),
    Source(Vec<Source>),
    DataCategory(Vec<DataCategory>),
}

impl MergedValue {
    pub fn kind(&self) -> VocabularyKind {
        match self {
            MergedValue::RetentionTime(_) => VocabularyKind::RetentionTime,
            MergedValue::Recipient(_) => VocabularyKind::Recipient,
            MergedValue::ThirdCountryTransfer(_) => VocabularyKind::ThirdCountryTransfer,
            MergedValue::SpecialCategory(_) => VocabularyKind::SpecialCategory,
            MergedValue::Profiling(_) => VocabularyKind::Profiling,
            MergedValue::Purpose(_) => VocabularyKind::Purpose,
            MergedValue::Source(_) => VocabularyKind::Source,
            MergedValue::DataCategory(_) => VocabularyKind::DataCategory,
        }
    }

    /// Display form of a merged retention: `unlimited`, `volatile`, the
    /// period, or `unspecified`.
    pub fn retention_label(r: &RetentionTime) -> String {
        if r.no_limit {
            "unlimited".into()
        } else if r.volatile {
            "volatile".into()
        } else if let Some(p) = &r.period {
            p.to_string()
        } else {
            "unspecified".into()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Merged {
    pub value: MergedValue,
    /// Field-level disagreements between contributors of the same entry.
    pub notes: Vec<String>,
}

/// Union keyed by `key`. Differing variants of one key keep the smallest
/// by serialized form and leave a note naming the contributors.
fn keyed_union<T, K>(
    kind_label: &str,
    contributions: &[&Contribution],
    extract: impl Fn(&PropertyValue) -> Option<&T>,
    key: impl Fn(&T) -> K,
    notes: &mut Vec<String>,
) -> Vec<T>
where
    T: Clone + Serialize,
    K: Ord + std::fmt::Display,
{
    let mut groups: BTreeMap<K, BTreeMap<String, (T, BTreeSet<String>)>> = BTreeMap::new();
    for c in contributions {
        let Some(v) = extract(&c.property.value) else {
            continue;
        };
        let canon = serde_json::to_string(v).expect("vocabulary serializes");
        groups
            .entry(key(v))
            .or_default()
            .entry(canon)
            .or_insert_with(|| (v.clone(), BTreeSet::new()))
            .1
            .insert(c.service.clone());
    }
    let mut out = Vec::with_capacity(groups.len());
    for (k, variants) in groups {
        if variants.len() > 1 {
            let who: BTreeSet<&String> = variants.values().flat_map(|(_, s)| s).collect();
            let who: Vec<&str> = who.into_iter().map(String::as_str).collect();
            notes.push(format!(
                "{kind_label} `{k}` is declared with {} differing definitions (services: {})",
                variants.len(),
                who.join(", ")
            ));
        }
        let (first, _) = variants.into_values().next().expect("group is non-empty");
        out.push(first);
    }
    out
}

/// Merges all contributions of one kind. Returns `None` when none of the
/// contributions is of that kind.
pub fn merge_kind(kind: VocabularyKind, contributions: &[Contribution]) -> Option<Merged> {
    let mut sorted: Vec<&Contribution> = contributions
        .iter()
        .filter(|c| c.property.kind() == kind)
        .collect();
    if sorted.is_empty() {
        return None;
    }
    sorted.sort_by_key(|c| c.sort_key());
    let mut notes = Vec::new();
    let value = match kind {
        VocabularyKind::RetentionTime => {
            let mut values = sorted.iter().filter_map(|c| match &c.property.value {
                PropertyValue::RetentionTime(r) => Some(r),
                _ => None,
            });
            let first = values.next()?.clone();
            MergedValue::RetentionTime(values.fold(first, |acc, r| merge_retention(&acc, r)))
        }
        VocabularyKind::Recipient => MergedValue::Recipient(keyed_union(
            "recipient",
            &sorted,
            |v| match v {
                PropertyValue::Recipient(r) => Some(r),
                _ => None,
            },
            |r| r.name.clone(),
            &mut notes,
        )),
        VocabularyKind::Purpose => MergedValue::Purpose(keyed_union(
            "purpose",
            &sorted,
            |v| match v {
                PropertyValue::Purpose(p) => Some(p),
                _ => None,
            },
            |p| p.id.clone(),
            &mut notes,
        )),
        VocabularyKind::DataCategory => MergedValue::DataCategory(keyed_union(
            "data category",
            &sorted,
            |v| match v {
                PropertyValue::DataCategory(d) => Some(d),
                _ => None,
            },
            |d| d.name.clone(),
            &mut notes,
        )),
        VocabularyKind::ThirdCountryTransfer => {
            let mut occurs = false;
            let mut countries = BTreeSet::new();
            let mut safeguards = BTreeSet::new();
            for c in &sorted {
                if let PropertyValue::ThirdCountryTransfer(t) = &c.property.value {
                    occurs |= t.occurs;
                    countries.extend(t.countries.iter().cloned());
                    safeguards.extend(t.safeguards_note.iter().cloned());
                }
            }
            MergedValue::ThirdCountryTransfer(ThirdCountryTransfer {
                occurs,
                countries: countries.into_iter().collect(),
                safeguards_note: (!safeguards.is_empty())
                    .then(|| safeguards.into_iter().collect::<Vec<_>>().join("; ")),
            })
        }
        VocabularyKind::SpecialCategory => {
            let mut applies = false;
            let mut grounds = BTreeSet::new();
            for c in &sorted {
                if let PropertyValue::SpecialCategory(s) = &c.property.value {
                    applies |= s.applies;
                    grounds.extend(s.ground.iter().cloned());
                }
            }
            MergedValue::SpecialCategory(MergedSpecialCategory {
                applies,
                grounds: grounds.into_iter().collect(),
            })
        }
        VocabularyKind::Profiling => {
            let mut performed = false;
            let mut explanations = Vec::new();
            for c in &sorted {
                if let PropertyValue::Profiling(p) = &c.property.value {
                    performed |= p.performed;
                    if let Some(text) = &p.explanation {
                        let e = ProfilingExplanation {
                            service: c.service.clone(),
                            site: c.property.declared_at.clone(),
                            explanation: text.clone(),
                        };
                        if !explanations.contains(&e) {
                            explanations.push(e);
                        }
                    }
                }
            }
            MergedValue::Profiling(MergedProfiling {
                performed,
                explanations,
            })
        }
        VocabularyKind::Source => {
            let mut sources: Vec<Source> = Vec::new();
            for c in &sorted {
                if let PropertyValue::Source(s) = &c.property.value {
                    if !sources.contains(s) {
                        sources.push(s.clone());
                    }
                }
            }
            sources.sort_by(|a, b| (a.origin, &a.description).cmp(&(b.origin, &b.description)));
            MergedValue::Source(sources)
        }
    };
    Some(Merged { value, notes })
}

/// Manual equivalences between differently spelled names. Lookups are
/// case-insensitive; values are the canonical spelling.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AliasTable {
    #[serde(default)]
    pub datums: BTreeMap<String, String>,
    #[serde(default)]
    pub purposes: BTreeMap<String, String>,
    #[serde(default)]
    pub recipients: BTreeMap<String, String>,
}

fn normalize(name: &str) -> String {
    name.trim().to_lowercase()
}

fn canonical(table: &BTreeMap<String, String>, name: &str) -> String {
    let key = normalize(name);
    table
        .iter()
        .find(|(alias, _)| normalize(alias) == key)
        .map(|(_, target)| target.clone())
        .unwrap_or_else(|| name.to_owned())
}

impl AliasTable {
    pub fn datum(&self, name: &str) -> String {
        canonical(&self.datums, name)
    }

    pub fn purpose(&self, id: &str) -> String {
        canonical(&self.purposes, id)
    }

    pub fn recipient(&self, name: &str) -> String {
        canonical(&self.recipients, name)
    }
}

/// Where a datum is declared: the copyable reference of the dashboards.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DatumReference {
    pub service: String,
    pub site: SitePath,
}

/// Map keys already name the kind, so only the merged content is written.
fn merged_content<S: serde::Serializer>(
    merged: &BTreeMap<VocabularyKind, MergedValue>,
    s: S,
) -> Result<S::Ok, S::Error> {
    use serde::ser::SerializeMap;
    let mut map = s.serialize_map(Some(merged.len()))?;
    for (kind, value) in merged {
        match value {
            MergedValue::RetentionTime(v) => map.serialize_entry(kind, v)?,
            MergedValue::Recipient(v) => map.serialize_entry(kind, v)?,
            MergedValue::ThirdCountryTransfer(v) => map.serialize_entry(kind, v)?,
            MergedValue::SpecialCategory(v) => map.serialize_entry(kind, v)?,
            MergedValue::Profiling(v) => map.serialize_entry(kind, v)?,
            MergedValue::Purpose(v) => map.serialize_entry(kind, v)?,
            MergedValue::Source(v) => map.serialize_entry(kind, v)?,
            MergedValue::DataCategory(v) => map.serialize_entry(kind, v)?,
        }
    }
    map.end()
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct AggregatedDatum {
    pub datum_name: String,
    pub processing_services: Vec<String>,
    #[serde(serialize_with = "merged_content")]
    pub merged: BTreeMap<VocabularyKind, MergedValue>,
    pub notes: Vec<String>,
    pub references: Vec<DatumReference>,
    pub contributions: Vec<Contribution>,
}

impl AggregatedDatum {
    pub fn retention(&self) -> Option<&RetentionTime> {
        match self.merged.get(&VocabularyKind::RetentionTime) {
            Some(MergedValue::RetentionTime(r)) => Some(r),
            _ => None,
        }
    }
}

/// Datum names an indicator contributes to. A whole-service indicator
/// stands for every covered schema that the service does not already
/// declare on its own.
fn datum_names(eff: &EffectiveProperties, service_names: &BTreeSet<String>) -> Vec<String> {
    let ind = &eff.indicator;
    if ind.scope != IndicatorScope::Service {
        return vec![ind.name.clone()];
    }
    let covered: Vec<String> = ind
        .constituents
        .iter()
        .filter(|c| !service_names.contains(&normalize(c)))
        .cloned()
        .collect();
    if covered.is_empty() && ind.constituents.is_empty() {
        vec![ind.name.clone()]
    } else {
        covered
    }
}

/// Groups indicators of all services by (aliased, case-insensitive) datum
/// name and merges their properties per kind. Output is sorted by name.
pub fn aggregate(
    services: &[(String, Vec<EffectiveProperties>)],
    aliases: &AliasTable,
) -> Vec<AggregatedDatum> {
    #[derive(Default)]
    struct Group {
        spellings: BTreeSet<String>,
        services: BTreeSet<String>,
        references: BTreeSet<DatumReference>,
        contributions: Vec<Contribution>,
    }
    let mut groups: BTreeMap<String, Group> = BTreeMap::new();
    for (service, effective) in services {
        let own_names: BTreeSet<String> = effective
            .iter()
            .filter(|e| e.indicator.scope != IndicatorScope::Service)
            .map(|e| normalize(&e.indicator.name))
            .collect();
        for eff in effective {
            for raw_name in datum_names(eff, &own_names) {
                let name = aliases.datum(&raw_name);
                let group = groups.entry(normalize(&name)).or_default();
                group.spellings.insert(name);
                group.services.insert(service.clone());
                group.references.insert(DatumReference {
                    service: service.clone(),
                    site: eff.indicator.site.clone(),
                });
                for props in eff.by_kind.values() {
                    for p in props {
                        let c = Contribution {
                            service: service.clone(),
                            site: eff.indicator.site.clone(),
                            property: p.clone(),
                        };
                        if !group.contributions.contains(&c) {
                            group.contributions.push(c);
                        }
                    }
                }
            }
        }
    }
    groups
        .into_values()
        .map(|mut g| {
            g.contributions.sort_by_key(Contribution::sort_key);
            let mut merged = BTreeMap::new();
            let mut notes = Vec::new();
            for kind in VocabularyKind::ALL {
                if let Some(m) = merge_kind(kind, &g.contributions) {
                    notes.extend(m.notes);
                    merged.insert(kind, m.value);
                }
            }
            AggregatedDatum {
                datum_name: g.spellings.into_iter().next().expect("group has a name"),
                processing_services: g.services.into_iter().collect(),
                merged,
                notes,
                references: g.references.into_iter().collect(),
                contributions: g.contributions,
            }
        })
        .collect()
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub services: BTreeSet<String>,
    pub datum_names: BTreeSet<String>,
    /// Every declaration backing this entry.
    pub declarations: Vec<DatumReference>,
}

fn build_index(
    data: &[AggregatedDatum],
    kind: VocabularyKind,
    key: impl Fn(&PropertyValue) -> Option<String>,
) -> BTreeMap<String, IndexEntry> {
    let mut index: BTreeMap<String, IndexEntry> = BTreeMap::new();
    for datum in data {
        for c in datum
            .contributions
            .iter()
            .filter(|c| c.property.kind() == kind)
        {
            let Some(k) = key(&c.property.value) else {
                continue;
            };
            let entry = index.entry(k).or_default();
            entry.services.insert(c.service.clone());
            entry.datum_names.insert(datum.datum_name.clone());
            let decl = DatumReference {
                service: c.service.clone(),
                site: c.property.declared_at.clone(),
            };
            if !entry.declarations.contains(&decl) {
                entry.declarations.push(decl);
            }
        }
    }
    for entry in index.values_mut() {
        entry.declarations.sort();
    }
    index
}

/// Purpose id → services and datums processed for it.
pub fn purpose_index(
    data: &[AggregatedDatum],
    aliases: &AliasTable,
) -> BTreeMap<String, IndexEntry> {
    build_index(data, VocabularyKind::Purpose, |v| match v {
        PropertyValue::Purpose(p) => Some(aliases.purpose(&p.id)),
        _ => None,
    })
}

/// Recipient name → services disclosing to it and the datums concerned.
pub fn recipient_index(
    data: &[AggregatedDatum],
    aliases: &AliasTable,
) -> BTreeMap<String, IndexEntry> {
    build_index(data, VocabularyKind::Recipient, |v| match v {
        PropertyValue::Recipient(r) => Some(aliases.recipient(&r.name)),
        _ => None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vocabulary::Profiling;

    fn contrib(service: &str, value: PropertyValue) -> Contribution {
        Contribution {
            service: service.into(),
            site: SitePath::root(),
            property: TransparencyProperty::new(value, SitePath::root()),
        }
    }

    #[test]
    fn no_limit_dominates_ten_years() {
        let ten = RetentionTime {
            period: Some(Duration::years(10)),
            periodic_review: true,
            review_frequency: Some(Duration::days(1)),
            ..RetentionTime::default()
        };
        let merged = merge_retention(&ten, &RetentionTime::no_limit());
        assert!(merged.no_limit);
        assert!(merged.period.is_none());
        assert_eq!(MergedValue::retention_label(&merged), "unlimited");
        assert!(merged.periodic_review);
    }

    #[test]
    fn volatile_loses_to_any_period() {
        let thirty = RetentionTime::period(Duration::days(30));
        assert_eq!(merge_retention(&RetentionTime::volatile(), &thirty), thirty);
    }

    #[test]
    fn longer_period_returned_verbatim() {
        let a = RetentionTime::period(Duration::months(13));
        let b = RetentionTime::period(Duration::years(1));
        assert_eq!(merge_retention(&a, &b), a);
        assert_eq!(merge_retention(&b, &a), a);
    }

    #[test]
    fn purposes_union_by_id() {
        let p = |id: &str| {
            PropertyValue::Purpose(Purpose {
                id: id.into(),
                description: String::new(),
                allowed_utilizers: vec![],
                excluded_utilizers: vec![],
            })
        };
        let cs = vec![
            contrib("a", p("fitness-tracking")),
            contrib("b", p("fitness-tracking")),
            contrib("b", p("marketing")),
        ];
        let merged = merge_kind(VocabularyKind::Purpose, &cs).unwrap();
        let MergedValue::Purpose(ps) = merged.value else {
            panic!()
        };
        let ids: Vec<_> = ps.iter().map(|p| p.id.as_str()).collect();
        assert_eq!(ids, ["fitness-tracking", "marketing"]);
        assert!(merged.notes.is_empty());
    }

    #[test]
    fn conflicting_recipient_details_leave_a_note() {
        let r = |cat: &str| {
            PropertyValue::Recipient(Recipient {
                name: "Ads".into(),
                category: Some(cat.into()),
                third_party: true,
                country: None,
            })
        };
        let cs = vec![contrib("a", r("advertising")), contrib("b", r("marketing"))];
        let merged = merge_kind(VocabularyKind::Recipient, &cs).unwrap();
        let MergedValue::Recipient(rs) = merged.value else {
            panic!()
        };
        assert_eq!(rs.len(), 1);
        assert_eq!(merged.notes.len(), 1);
        assert!(merged.notes[0].contains("services: a, b"));
    }

    #[test]
    fn profiling_or_keeps_explanations() {
        let cs = vec![
            contrib(
                "a",
                PropertyValue::Profiling(Profiling {
                    performed: false,
                    explanation: None,
                }),
            ),
            contrib(
                "b",
                PropertyValue::Profiling(Profiling {
                    performed: true,
                    explanation: Some("score computation".into()),
                }),
            ),
        ];
        let merged = merge_kind(VocabularyKind::Profiling, &cs).unwrap();
        let MergedValue::Profiling(p) = merged.value else {
            panic!()
        };
        assert!(p.performed);
        assert_eq!(p.explanations.len(), 1);
        assert_eq!(p.explanations[0].service, "b");
        assert_eq!(p.explanations[0].explanation, "score computation");
    }

    #[test]
    fn singleton_fold_is_identity() {
        let r = RetentionTime::period(Duration::days(7));
        let merged = merge_kind(
            VocabularyKind::RetentionTime,
            &[contrib("a", PropertyValue::RetentionTime(r.clone()))],
        )
        .unwrap();
        assert_eq!(merged.value, MergedValue::RetentionTime(r));
        assert!(merge_kind(VocabularyKind::Source, &[]).is_none());
    }

    #[test]
    fn aliases_are_case_insensitive() {
        let mut t = AliasTable::default();
        t.datums.insert("Steps".into(), "Stepcount".into());
        assert_eq!(t.datum("steps"), "Stepcount");
        assert_eq!(t.datum("Weight"), "Weight");
    }
}
