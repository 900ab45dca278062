use std::collections::BTreeMap;

use chrono::{DateTime, Utc};
use serde::{Serialize, Serializer};

use crate::aggregate::{
    aggregate, purpose_index, recipient_index, AggregatedDatum, AliasTable, IndexEntry, MergedValue,
};
use crate::flow::{flow_closure, FlowGraph};
use crate::openapi::SitePath;
use crate::resolver::EffectiveProperties;
use crate::vocabulary::{ServiceRow, VocabularyKind};

use super::store::{Origin, ServiceRecord};
use super::system::{Contact, LegalBasis, SystemWideInfo};

/// A report field that is always present. Missing information is spelled
/// out as the string `"unspecified"` instead of being dropped.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Specified<T> {
    Value(T),
    Unspecified,
}

impl<T> From<Option<T>> for Specified<T> {
    fn from(v: Option<T>) -> Self {
        v.map_or(Specified::Unspecified, Specified::Value)
    }
}

fn non_empty<T>(v: Vec<T>) -> Specified<Vec<T>> {
    if v.is_empty() {
        Specified::Unspecified
    } else {
        Specified::Value(v)
    }
}

impl<T: Serialize> Serialize for Specified<T> {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Specified::Value(v) => v.serialize(s),
            Specified::Unspecified => s.serialize_str("unspecified"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ProvisionMandatory {
    pub mandatory: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub consequences_note: Option<String>,
}

/// The controller-wide rows.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SystemSection {
    pub controller_contact: Specified<Contact>,
    pub dpo_contact: Specified<Contact>,
    pub third_country_safeguards: Specified<String>,
    pub legal_bases: Specified<Vec<LegalBasis>>,
    pub legitimate_interest: Specified<String>,
    pub right_rectification_deletion_portability: Specified<bool>,
    pub right_withdraw_consent: Specified<bool>,
    pub right_lodge_complaint: Specified<bool>,
    pub provision_mandatory: Specified<ProvisionMandatory>,
    pub data_subject_categories: Specified<Vec<String>>,
}

impl SystemSection {
    /// JSON keys of the section, one per system-wide row.
    pub const ROWS: [&'static str; 10] = [
        "controller_contact",
        "dpo_contact",
        "third_country_safeguards",
        "legal_bases",
        "legitimate_interest",
        "right_rectification_deletion_portability",
        "right_withdraw_consent",
        "right_lodge_complaint",
        "provision_mandatory",
        "data_subject_categories",
    ];

    pub fn from_info(info: Option<&SystemWideInfo>) -> Self {
        let d = SystemWideInfo::default();
        let i = info.unwrap_or(&d);
        let text = |s: &Option<String>| -> Specified<String> {
            s.as_ref().filter(|s| !s.trim().is_empty()).cloned().into()
        };
        SystemSection {
            controller_contact: i.controller_contact.clone().into(),
            dpo_contact: i.dpo_contact.clone().into(),
            third_country_safeguards: text(&i.third_country_safeguards),
            legal_bases: non_empty(i.legal_bases.clone()),
            legitimate_interest: text(&i.legitimate_interest_note),
            right_rectification_deletion_portability: i
                .right_rectification_deletion_portability
                .into(),
            right_withdraw_consent: i.right_withdraw_consent.into(),
            right_lodge_complaint: i.right_lodge_complaint.into(),
            provision_mandatory: i
                .provision_mandatory
                .map(|mandatory| ProvisionMandatory {
                    mandatory,
                    consequences_note: i.consequences_note.clone(),
                })
                .into(),
            data_subject_categories: non_empty(i.data_subject_categories.clone()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct RowEntry {
    pub datum_name: String,
    #[serde(flatten)]
    pub value: MergedValue,
}

/// The service-level rows rolled up over all aggregated datums.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ServiceLevelSection {
    pub recipients: Specified<Vec<RowEntry>>,
    pub third_country_transfer: Specified<Vec<RowEntry>>,
    pub purpose: Specified<Vec<RowEntry>>,
    pub data_categories: Specified<Vec<RowEntry>>,
    pub retention: Specified<Vec<RowEntry>>,
    pub source: Specified<Vec<RowEntry>>,
    pub profiling: Specified<Vec<RowEntry>>,
}

impl ServiceLevelSection {
    pub fn from_data(data: &[AggregatedDatum]) -> Self {
        let row = |r: ServiceRow| {
            let kind: VocabularyKind = r.kind();
            let entries: Vec<RowEntry> = data
                .iter()
                .filter_map(|d| {
                    d.merged.get(&kind).map(|v| RowEntry {
                        datum_name: d.datum_name.clone(),
                        value: v.clone(),
                    })
                })
                .collect();
            non_empty(entries)
        };
        ServiceLevelSection {
            recipients: row(ServiceRow::Recipients),
            third_country_transfer: row(ServiceRow::ThirdCountryTransfer),
            purpose: row(ServiceRow::Purpose),
            data_categories: row(ServiceRow::DataCategories),
            retention: row(ServiceRow::Retention),
            source: row(ServiceRow::Source),
            profiling: row(ServiceRow::Profiling),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct IndicatorSummary {
    pub name: String,
    pub site: SitePath,
}

/// Registry facts that are identical however the service was registered.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ServiceSummary {
    pub id: String,
    pub name: String,
    pub origin: Origin,
    pub current_version: Option<u32>,
    pub processes_personal_data: bool,
    pub indicators: Vec<IndicatorSummary>,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct Reach {
    pub sender: String,
    pub receiver: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct FlowView {
    #[serde(flatten)]
    pub graph: FlowGraph,
    pub closure: Vec<Reach>,
}

impl FlowView {
    pub fn new(graph: FlowGraph) -> Self {
        let closure = flow_closure(&graph)
            .into_iter()
            .map(|(sender, receiver)| Reach { sender, receiver })
            .collect();
        Self { graph, closure }
    }

    pub fn reaches(&self, sender: &str, receiver: &str) -> bool {
        self.closure
            .iter()
            .any(|r| r.sender == sender && r.receiver == receiver)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct TransparencyReport {
    pub generated_at: DateTime<Utc>,
    pub system: SystemSection,
    pub service_level: ServiceLevelSection,
    pub services: Vec<ServiceSummary>,
    /// Ids of registered services without any personal-data indicator.
    pub no_personal_data: Vec<String>,
    pub data: Vec<AggregatedDatum>,
    pub purposes: BTreeMap<String, IndexEntry>,
    pub recipients: BTreeMap<String, IndexEntry>,
    pub flow: FlowView,
}

/// Assembles a report from head versions. `services` need not be sorted.
pub fn build_report(
    generated_at: DateTime<Utc>,
    system: Option<&SystemWideInfo>,
    services: &[(ServiceRecord, Vec<EffectiveProperties>)],
    graph: FlowGraph,
    aliases: &AliasTable,
) -> TransparencyReport {
    let mut sorted: Vec<&(ServiceRecord, Vec<EffectiveProperties>)> = services.iter().collect();
    sorted.sort_by(|a, b| a.0.id.cmp(&b.0.id));
    let inputs: Vec<(String, Vec<EffectiveProperties>)> = sorted
        .iter()
        .map(|(r, e)| (r.id.clone(), e.clone()))
        .collect();
    let data = aggregate(&inputs, aliases);
    let summaries: Vec<ServiceSummary> = sorted
        .iter()
        .map(|(r, e)| ServiceSummary {
            id: r.id.clone(),
            name: r.name.clone(),
            origin: r.origin,
            current_version: r.current_version,
            processes_personal_data: r.processes_personal_data,
            indicators: e
                .iter()
                .map(|x| IndicatorSummary {
                    name: x.indicator.name.clone(),
                    site: x.indicator.site.clone(),
                })
                .collect(),
        })
        .collect();
    TransparencyReport {
        generated_at,
        system: SystemSection::from_info(system),
        service_level: ServiceLevelSection::from_data(&data),
        no_personal_data: summaries
            .iter()
            .filter(|s| !s.processes_personal_data)
            .map(|s| s.id.clone())
            .collect(),
        services: summaries,
        purposes: purpose_index(&data, aliases),
        recipients: recipient_index(&data, aliases),
        data,
        flow: FlowView::new(graph),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_registry_report_names_every_row() {
        let r = build_report(
            DateTime::<Utc>::UNIX_EPOCH,
            None,
            &[],
            FlowGraph::default(),
            &AliasTable::default(),
        );
        let v = serde_json::to_value(&r).unwrap();
        for key in SystemSection::ROWS {
            assert_eq!(v["system"][key], "unspecified", "{key}");
        }
        assert_eq!(v["service_level"].as_object().unwrap().len(), 7);
        assert_eq!(v["data"], serde_json::json!([]));
        assert_eq!(v["flow"]["closure"], serde_json::json!([]));
    }

    #[test]
    fn provided_system_values_replace_placeholders() {
        let info = SystemWideInfo {
            right_lodge_complaint: Some(true),
            provision_mandatory: Some(false),
            ..Default::default()
        };
        let v = serde_json::to_value(SystemSection::from_info(Some(&info))).unwrap();
        assert_eq!(v["right_lodge_complaint"], true);
        assert_eq!(v["provision_mandatory"]["mandatory"], false);
        assert_eq!(v["dpo_contact"], "unspecified");
    }
}
