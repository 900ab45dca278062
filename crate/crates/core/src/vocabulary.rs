//! The transparency vocabulary carried inside `x-tira` blocks.
//!
//! Parsing is hand-written so that every problem becomes a [`Diagnostic`]
//! addressed to the declaring site; serialization goes through serde and
//! produces exactly the grammar documented in `docs/x-tira-grammar.md`.

use std::cmp::Ordering;
use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::diagnostics::Diagnostic;
use crate::openapi::SitePath;

pub const TIRA_KEY: &str = "x-tira";
pub const TIRA_IGNORE_KEY: &str = "x-tira-ignore";

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VocabularyKind {
    RetentionTime,
    Recipient,
    ThirdCountryTransfer,
    SpecialCategory,
    Profiling,
    Purpose,
    Source,
    DataCategory,
}

impl VocabularyKind {
    pub const ALL: [VocabularyKind; 8] = [
        VocabularyKind::RetentionTime,
        VocabularyKind::Recipient,
        VocabularyKind::ThirdCountryTransfer,
        VocabularyKind::SpecialCategory,
        VocabularyKind::Profiling,
        VocabularyKind::Purpose,
        VocabularyKind::Source,
        VocabularyKind::DataCategory,
    ];

    /// Key of this element inside an `x-tira` block.
    pub fn block_key(self) -> &'static str {
        match self {
            VocabularyKind::RetentionTime => "retention_time",
            VocabularyKind::Recipient => "recipients",
            VocabularyKind::ThirdCountryTransfer => "third_country_transfer",
            VocabularyKind::SpecialCategory => "special_category",
            VocabularyKind::Profiling => "profiling",
            VocabularyKind::Purpose => "purposes",
            VocabularyKind::Source => "source",
            VocabularyKind::DataCategory => "data_categories",
        }
    }

    pub fn from_block_key(key: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.block_key() == key)
    }

    /// List-valued kinds accumulate when declared together on one node.
    pub fn is_list(self) -> bool {
        matches!(
            self,
            VocabularyKind::Recipient | VocabularyKind::Purpose | VocabularyKind::DataCategory
        )
    }

    pub fn as_str(self) -> &'static str {
        match self {
            VocabularyKind::RetentionTime => "retention_time",
            VocabularyKind::Recipient => "recipient",
            VocabularyKind::ThirdCountryTransfer => "third_country_transfer",
            VocabularyKind::SpecialCategory => "special_category",
            VocabularyKind::Profiling => "profiling",
            VocabularyKind::Purpose => "purpose",
            VocabularyKind::Source => "source",
            VocabularyKind::DataCategory => "data_category",
        }
    }
}

impl fmt::Display for VocabularyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// The service-level rows of the GDPR transparency catalogue. Each row is
/// covered by exactly one vocabulary kind.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ServiceRow {
    Recipients,
    ThirdCountryTransfer,
    Purpose,
    DataCategories,
    Retention,
    Source,
    Profiling,
}

impl ServiceRow {
    pub const ALL: [ServiceRow; 7] = [
        ServiceRow::Recipients,
        ServiceRow::ThirdCountryTransfer,
        ServiceRow::Purpose,
        ServiceRow::DataCategories,
        ServiceRow::Retention,
        ServiceRow::Source,
        ServiceRow::Profiling,
    ];

    pub fn kind(self) -> VocabularyKind {
        match self {
            ServiceRow::Recipients => VocabularyKind::Recipient,
            ServiceRow::ThirdCountryTransfer => VocabularyKind::ThirdCountryTransfer,
            ServiceRow::Purpose => VocabularyKind::Purpose,
            ServiceRow::DataCategories => VocabularyKind::DataCategory,
            ServiceRow::Retention => VocabularyKind::RetentionTime,
            ServiceRow::Source => VocabularyKind::Source,
            ServiceRow::Profiling => VocabularyKind::Profiling,
        }
    }
}

/// A span of calendar units. Units are never converted into each other.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Duration {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub days: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub months: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub years: Option<u32>,
}

impl Duration {
    pub fn days(n: u32) -> Self {
        Self {
            days: Some(n),
            ..Self::default()
        }
    }

    pub fn months(n: u32) -> Self {
        Self {
            months: Some(n),
            ..Self::default()
        }
    }

    pub fn years(n: u32) -> Self {
        Self {
            years: Some(n),
            ..Self::default()
        }
    }

    pub fn is_empty(&self) -> bool {
        self.days.is_none() && self.months.is_none() && self.years.is_none()
    }

    /// Approximate length in days (30-day months, 365-day years). Only used
    /// to order spans against each other.
    pub fn approx_days(&self) -> u64 {
        u64::from(self.days.unwrap_or(0))
            + 30 * u64::from(self.months.unwrap_or(0))
            + 365 * u64::from(self.years.unwrap_or(0))
    }

    /// Total order by approximate length; equal lengths are ordered by
    /// their components so that distinct spellings never compare equal.
    pub fn cmp_length(&self, other: &Self) -> Ordering {
        self.approx_days().cmp(&other.approx_days()).then_with(|| {
            (self.years, self.months, self.days).cmp(&(other.years, other.months, other.days))
        })
    }
}

impl fmt::Display for Duration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = [(self.years, "y"), (self.months, "m"), (self.days, "d")]
            .into_iter()
            .filter_map(|(n, unit)| n.map(|n| format!("{n}{unit}")))
            .collect();
        f.write_str(&parts.join(" "))
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RetentionTime {
    #[serde(flatten, default, skip_serializing_if = "Option::is_none")]
    pub period: Option<Duration>,
    #[serde(default, skip_serializing_if = "is_false")]
    pub volatile: bool,
    #[serde(default, skip_serializing_if = "is_false")]
    pub no_limit: bool,
    #[serde(default, skip_serializing_if = "is_false")]
    pub periodic_review: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub review_frequency: Option<Duration>,
}

impl RetentionTime {
    pub fn period(d: Duration) -> Self {
        Self {
            period: Some(d),
            ..Self::default()
        }
    }

    pub fn volatile() -> Self {
        Self {
            volatile: true,
            ..Self::default()
        }
    }

    pub fn no_limit() -> Self {
        Self {
            no_limit: true,
            ..Self::default()
        }
    }

    fn check(&self) -> Result<(), String> {
        let set = usize::from(self.period.is_some())
            + usize::from(self.volatile)
            + usize::from(self.no_limit);
        if set > 1 {
            return Err("at most one of a period, `volatile` and `no_limit` may be set".into());
        }
        if self.review_frequency.is_some() && !self.periodic_review {
            return Err("`review_frequency` requires `periodic_review: true`".into());
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Recipient {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<String>,
    #[serde(default, skip_serializing_if = "is_false")]
    pub third_party: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub country: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ThirdCountryTransfer {
    pub occurs: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub countries: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub safeguards_note: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SpecialCategory {
    pub applies: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ground: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Profiling {
    pub performed: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub explanation: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Purpose {
    pub id: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub description: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub allowed_utilizers: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub excluded_utilizers: Vec<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceOrigin {
    DataSubject,
    ThirdParty,
    PublicSource,
    Derived,
}

impl SourceOrigin {
    const ALL: [SourceOrigin; 4] = [
        SourceOrigin::DataSubject,
        SourceOrigin::ThirdParty,
        SourceOrigin::PublicSource,
        SourceOrigin::Derived,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SourceOrigin::DataSubject => "data_subject",
            SourceOrigin::ThirdParty => "third_party",
            SourceOrigin::PublicSource => "public_source",
            SourceOrigin::Derived => "derived",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Source {
    pub origin: SourceOrigin,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DataCategory {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum PropertyValue {
    RetentionTime(RetentionTime),
    Recipient(Recipient),
    ThirdCountryTransfer(ThirdCountryTransfer),
    SpecialCategory(SpecialCategory),
    Profiling(Profiling),
    Purpose(Purpose),
    Source(Source),
    DataCategory(DataCategory),
}

impl PropertyValue {
    pub fn kind(&self) -> VocabularyKind {
        match self {
            PropertyValue::RetentionTime(_) => VocabularyKind::RetentionTime,
            PropertyValue::Recipient(_) => VocabularyKind::Recipient,
            PropertyValue::ThirdCountryTransfer(_) => VocabularyKind::ThirdCountryTransfer,
            PropertyValue::SpecialCategory(_) => VocabularyKind::SpecialCategory,
            PropertyValue::Profiling(_) => VocabularyKind::Profiling,
            PropertyValue::Purpose(_) => VocabularyKind::Purpose,
            PropertyValue::Source(_) => VocabularyKind::Source,
            PropertyValue::DataCategory(_) => VocabularyKind::DataCategory,
        }
    }

    /// The element body as it appears inside an `x-tira` block.
    pub fn element_value(&self) -> Value {
        let v = match self {
            PropertyValue::RetentionTime(x) => serde_json::to_value(x),
            PropertyValue::Recipient(x) => serde_json::to_value(x),
            PropertyValue::ThirdCountryTransfer(x) => serde_json::to_value(x),
            PropertyValue::SpecialCategory(x) => serde_json::to_value(x),
            PropertyValue::Profiling(x) => serde_json::to_value(x),
            PropertyValue::Purpose(x) => serde_json::to_value(x),
            PropertyValue::Source(x) => serde_json::to_value(x),
            PropertyValue::DataCategory(x) => serde_json::to_value(x),
        };
        v.expect("vocabulary records always serialize")
    }
}

/// One vocabulary element together with the site that declared it.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TransparencyProperty {
    #[serde(flatten)]
    pub value: PropertyValue,
    pub declared_at: SitePath,
}

impl TransparencyProperty {
    pub fn new(value: PropertyValue, declared_at: SitePath) -> Self {
        Self { value, declared_at }
    }

    pub fn kind(&self) -> VocabularyKind {
        self.value.kind()
    }
}

fn is_false(b: &bool) -> bool {
    !*b
}

/// Result of parsing one `x-tira` value. Valid elements are kept even when
/// siblings fail.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PropertyBlock {
    pub properties: Vec<TransparencyProperty>,
    pub diagnostics: Vec<Diagnostic>,
}

/// Parses the value of an `x-tira` key declared at `site`.
///
/// Booleans and null only mark; maps carry vocabulary elements. Never
/// fails: every problem is reported as a diagnostic.
pub fn parse_property_block(raw: &Value, site: &SitePath) -> PropertyBlock {
    let mut block = PropertyBlock::default();
    let map = match raw {
        Value::Null | Value::Bool(true) => return block,
        Value::Bool(false) => {
            block.diagnostics.push(
                Diagnostic::warning(
                    "marker-false",
                    "`x-tira: false` still marks personal data; remove the key instead",
                )
                .at(site.clone()),
            );
            return block;
        }
        Value::Object(map) => map,
        _ => {
            block.diagnostics.push(
                Diagnostic::error(
                    "invalid-vocabulary",
                    "`x-tira` must be a mapping, a boolean or null",
                )
                .at(site.clone()),
            );
            return block;
        }
    };

    let mut purpose_ids = BTreeSet::new();
    for (key, value) in map {
        let Some(kind) = VocabularyKind::from_block_key(key) else {
            block.diagnostics.push(
                Diagnostic::warning(
                    "unknown-vocabulary-key",
                    format!("unknown vocabulary key `{key}`"),
                )
                .at(site.clone()),
            );
            continue;
        };
        if value.is_null() {
            continue;
        }
        let mut ctx = Ctx {
            site,
            diags: &mut block.diagnostics,
        };
        if kind.is_list() {
            let entries: Vec<&Value> = match value {
                Value::Array(items) => items.iter().collect(),
                single => vec![single],
            };
            for (i, entry) in entries.into_iter().enumerate() {
                let path = format!("{key}[{i}]");
                let parsed = match kind {
                    VocabularyKind::Recipient => parse_recipient(&mut ctx, &path, entry),
                    VocabularyKind::Purpose => parse_purpose(&mut ctx, &path, entry),
                    VocabularyKind::DataCategory => parse_data_category(&mut ctx, &path, entry),
                    _ => unreachable!(),
                };
                if let Some(v) = parsed {
                    if let PropertyValue::Purpose(p) = &v {
                        if !purpose_ids.insert(p.id.clone()) {
                            ctx.error(&path, format!("purpose id `{}` is declared twice", p.id));
                            continue;
                        }
                    }
                    block
                        .properties
                        .push(TransparencyProperty::new(v, site.clone()));
                }
            }
        } else {
            let parsed = match kind {
                VocabularyKind::RetentionTime => parse_retention(&mut ctx, key, value),
                VocabularyKind::ThirdCountryTransfer => parse_transfer(&mut ctx, key, value),
                VocabularyKind::SpecialCategory => parse_special(&mut ctx, key, value),
                VocabularyKind::Profiling => parse_profiling(&mut ctx, key, value),
                VocabularyKind::Source => parse_source(&mut ctx, key, value),
                _ => unreachable!(),
            };
            if let Some(v) = parsed {
                block
                    .properties
                    .push(TransparencyProperty::new(v, site.clone()));
            }
        }
    }
    block
}

/// `{<block key>: <element>}`; list kinds are wrapped in a one-item list.
pub fn serialize_property(p: &TransparencyProperty) -> Value {
    let element = p.value.element_value();
    let body = if p.kind().is_list() {
        Value::Array(vec![element])
    } else {
        element
    };
    let mut map = Map::new();
    map.insert(p.kind().block_key().to_owned(), body);
    Value::Object(map)
}

/// Serializes several properties into one `x-tira` block. List kinds are
/// gathered under one key in input order; for scalar kinds the last wins.
pub fn serialize_block<'a>(props: impl IntoIterator<Item = &'a TransparencyProperty>) -> Value {
    let mut map = Map::new();
    for p in props {
        let key = p.kind().block_key().to_owned();
        let element = p.value.element_value();
        if p.kind().is_list() {
            match map.entry(key).or_insert_with(|| Value::Array(Vec::new())) {
                Value::Array(items) => items.push(element),
                _ => unreachable!(),
            }
        } else {
            map.insert(key, element);
        }
    }
    Value::Object(map)
}

struct Ctx<'a> {
    site: &'a SitePath,
    diags: &'a mut Vec<Diagnostic>,
}

impl Ctx<'_> {
    fn error(&mut self, path: &str, message: impl fmt::Display) {
        self.diags.push(
            Diagnostic::error("invalid-vocabulary", format!("{path}: {message}"))
                .at(self.site.clone()),
        );
    }

    fn unknown_fields(&mut self, path: &str, map: &Map<String, Value>, known: &[&str]) {
        for key in map.keys() {
            if !known.contains(&key.as_str()) {
                self.diags.push(
                    Diagnostic::warning(
                        "unknown-vocabulary-field",
                        format!("{path}: unknown field `{key}`"),
                    )
                    .at(self.site.clone()),
                );
            }
        }
    }

    fn object<'v>(&mut self, path: &str, value: &'v Value) -> Option<&'v Map<String, Value>> {
        let obj = value.as_object();
        if obj.is_none() {
            self.error(path, "expected a mapping");
        }
        obj
    }
}

/// Each field reader returns `Err(())` after recording a diagnostic.
type Field<T> = Result<T, ()>;

fn bool_field(
    ctx: &mut Ctx,
    path: &str,
    map: &Map<String, Value>,
    key: &str,
) -> Field<Option<bool>> {
    match map.get(key) {
        None | Some(Value::Null) => Ok(None),
        Some(Value::Bool(b)) => Ok(Some(*b)),
        Some(_) => {
            ctx.error(&format!("{path}.{key}"), "expected a boolean");
            Err(())
        }
    }
}

fn text_field(
    ctx: &mut Ctx,
    path: &str,
    map: &Map<String, Value>,
    key: &str,
) -> Field<Option<String>> {
    match map.get(key) {
        None | Some(Value::Null) => Ok(None),
        Some(Value::String(s)) => Ok(Some(s.clone())),
        Some(_) => {
            ctx.error(&format!("{path}.{key}"), "expected a string");
            Err(())
        }
    }
}

fn required_text(ctx: &mut Ctx, path: &str, map: &Map<String, Value>, key: &str) -> Field<String> {
    match text_field(ctx, path, map, key)? {
        Some(s) if !s.trim().is_empty() => Ok(s),
        _ => {
            ctx.error(&format!("{path}.{key}"), "a non-empty string is required");
            Err(())
        }
    }
}

fn text_list(ctx: &mut Ctx, path: &str, map: &Map<String, Value>, key: &str) -> Field<Vec<String>> {
    match map.get(key) {
        None | Some(Value::Null) => Ok(Vec::new()),
        Some(Value::Array(items)) => items
            .iter()
            .map(|v| match v {
                Value::String(s) => Ok(s.clone()),
                _ => {
                    ctx.error(&format!("{path}.{key}"), "expected a list of strings");
                    Err(())
                }
            })
            .collect(),
        Some(_) => {
            ctx.error(&format!("{path}.{key}"), "expected a list of strings");
            Err(())
        }
    }
}

fn country_code(ctx: &mut Ctx, path: &str, code: &str) -> Field<()> {
    if code.len() == 2 && code.bytes().all(|b| b.is_ascii_uppercase()) {
        Ok(())
    } else {
        ctx.error(
            path,
            format!("`{code}` is not an ISO 3166-1 alpha-2 code (two uppercase letters)"),
        );
        Err(())
    }
}

fn duration_component(ctx: &mut Ctx, path: &str, value: Option<&Value>) -> Field<Option<u32>> {
    let Some(value) = value else { return Ok(None) };
    if value.is_null() {
        return Ok(None);
    }
    let n = value
        .as_u64()
        .or_else(|| {
            value
                .as_f64()
                .filter(|f| *f >= 0.0 && f.fract() == 0.0 && *f <= f64::from(u32::MAX))
                .map(|f| f as u64)
        })
        .and_then(|n| u32::try_from(n).ok());
    match n {
        Some(n) => Ok(Some(n)),
        None => {
            ctx.error(
                path,
                format!("expected a non-negative integer, found `{value}`"),
            );
            Err(())
        }
    }
}

/// Reads `days`/`months`/`years` from `map`. All-absent yields `None`.
fn duration_fields(ctx: &mut Ctx, path: &str, map: &Map<String, Value>) -> Field<Option<Duration>> {
    let days = duration_component(ctx, &format!("{path}.days"), map.get("days"));
    let months = duration_component(ctx, &format!("{path}.months"), map.get("months"));
    let years = duration_component(ctx, &format!("{path}.years"), map.get("years"));
    let d = Duration {
        days: days?,
        months: months?,
        years: years?,
    };
    Ok((!d.is_empty()).then_some(d))
}

fn parse_retention(ctx: &mut Ctx, path: &str, value: &Value) -> Option<PropertyValue> {
    let map = ctx.object(path, value)?;
    ctx.unknown_fields(
        path,
        map,
        &[
            "days",
            "months",
            "years",
            "volatile",
            "no_limit",
            "periodic_review",
            "review_frequency",
        ],
    );
    let period = duration_fields(ctx, path, map);
    let volatile = bool_field(ctx, path, map, "volatile");
    let no_limit = bool_field(ctx, path, map, "no_limit");
    let periodic_review = bool_field(ctx, path, map, "periodic_review");
    let review_frequency = match map.get("review_frequency") {
        None | Some(Value::Null) => Ok(None),
        Some(v) => {
            let fpath = format!("{path}.review_frequency");
            match ctx.object(&fpath, v) {
                Some(m) => {
                    ctx.unknown_fields(&fpath, m, &["days", "months", "years"]);
                    duration_fields(ctx, &fpath, m)
                }
                None => Err(()),
            }
        }
    };
    let retention = RetentionTime {
        period: period.ok()?,
        volatile: volatile.ok()?.unwrap_or(false),
        no_limit: no_limit.ok()?.unwrap_or(false),
        periodic_review: periodic_review.ok()?.unwrap_or(false),
        review_frequency: review_frequency.ok()?,
    };
    if let Err(msg) = retention.check() {
        ctx.error(path, msg);
        return None;
    }
    Some(PropertyValue::RetentionTime(retention))
}

fn parse_recipient(ctx: &mut Ctx, path: &str, value: &Value) -> Option<PropertyValue> {
    if let Value::String(name) = value {
        if name.trim().is_empty() {
            ctx.error(path, "recipient name must not be empty");
            return None;
        }
        return Some(PropertyValue::Recipient(Recipient {
            name: name.clone(),
            category: None,
            third_party: false,
            country: None,
        }));
    }
    let map = ctx.object(path, value)?;
    ctx.unknown_fields(path, map, &["name", "category", "third_party", "country"]);
    let name = required_text(ctx, path, map, "name");
    let category = text_field(ctx, path, map, "category");
    let third_party = bool_field(ctx, path, map, "third_party");
    let country = text_field(ctx, path, map, "country");
    let country = country.ok()?;
    if let Some(code) = &country {
        country_code(ctx, &format!("{path}.country"), code).ok()?;
    }
    Some(PropertyValue::Recipient(Recipient {
        name: name.ok()?,
        category: category.ok()?,
        third_party: third_party.ok()?.unwrap_or(false),
        country,
    }))
}

fn parse_transfer(ctx: &mut Ctx, path: &str, value: &Value) -> Option<PropertyValue> {
    let map = ctx.object(path, value)?;
    ctx.unknown_fields(path, map, &["occurs", "countries", "safeguards_note"]);
    let occurs = bool_field(ctx, path, map, "occurs");
    let countries = text_list(ctx, path, map, "countries");
    let note = text_field(ctx, path, map, "safeguards_note");
    let countries = countries.ok()?;
    for code in &countries {
        country_code(ctx, &format!("{path}.countries"), code).ok()?;
    }
    let occurs = occurs.ok()?.unwrap_or(!countries.is_empty());
    if !occurs && !countries.is_empty() {
        ctx.error(path, "`countries` must be empty when `occurs` is false");
        return None;
    }
    Some(PropertyValue::ThirdCountryTransfer(ThirdCountryTransfer {
        occurs,
        countries,
        safeguards_note: note.ok()?,
    }))
}

fn parse_special(ctx: &mut Ctx, path: &str, value: &Value) -> Option<PropertyValue> {
    let map = ctx.object(path, value)?;
    ctx.unknown_fields(path, map, &["applies", "ground"]);
    let applies = bool_field(ctx, path, map, "applies");
    let ground = text_field(ctx, path, map, "ground").ok()?;
    let applies = applies.ok()?.unwrap_or(ground.is_some());
    if !applies && ground.is_some() {
        ctx.error(path, "`ground` requires `applies: true`");
        return None;
    }
    Some(PropertyValue::SpecialCategory(SpecialCategory {
        applies,
        ground,
    }))
}

fn parse_profiling(ctx: &mut Ctx, path: &str, value: &Value) -> Option<PropertyValue> {
    let map = ctx.object(path, value)?;
    ctx.unknown_fields(path, map, &["performed", "explanation"]);
    let performed = bool_field(ctx, path, map, "performed");
    let explanation = text_field(ctx, path, map, "explanation").ok()?;
    let performed = performed.ok()?.unwrap_or(false);
    if performed && explanation.as_deref().is_none_or(|e| e.trim().is_empty()) {
        ctx.error(path, "profiling that is performed needs an `explanation`");
        return None;
    }
    Some(PropertyValue::Profiling(Profiling {
        performed,
        explanation,
    }))
}

fn parse_purpose(ctx: &mut Ctx, path: &str, value: &Value) -> Option<PropertyValue> {
    if let Value::String(id) = value {
        if id.trim().is_empty() {
            ctx.error(path, "purpose id must not be empty");
            return None;
        }
        return Some(PropertyValue::Purpose(Purpose {
            id: id.clone(),
            description: String::new(),
            allowed_utilizers: Vec::new(),
            excluded_utilizers: Vec::new(),
        }));
    }
    let map = ctx.object(path, value)?;
    ctx.unknown_fields(
        path,
        map,
        &[
            "id",
            "description",
            "allowed_utilizers",
            "excluded_utilizers",
        ],
    );
    let id = required_text(ctx, path, map, "id");
    let description = text_field(ctx, path, map, "description");
    let allowed = text_list(ctx, path, map, "allowed_utilizers");
    let excluded = text_list(ctx, path, map, "excluded_utilizers");
    let (allowed, excluded) = (allowed.ok()?, excluded.ok()?);
    if let Some(both) = allowed.iter().find(|u| excluded.contains(u)) {
        ctx.error(
            path,
            format!("utilizer `{both}` is both allowed and excluded"),
        );
        return None;
    }
    Some(PropertyValue::Purpose(Purpose {
        id: id.ok()?,
        description: description.ok()?.unwrap_or_default(),
        allowed_utilizers: allowed,
        excluded_utilizers: excluded,
    }))
}

fn parse_source(ctx: &mut Ctx, path: &str, value: &Value) -> Option<PropertyValue> {
    let map = ctx.object(path, value)?;
    ctx.unknown_fields(path, map, &["origin", "description"]);
    let origin = required_text(ctx, path, map, "origin");
    let description = text_field(ctx, path, map, "description");
    let origin = origin.ok()?;
    let Some(origin) = SourceOrigin::ALL.into_iter().find(|o| o.as_str() == origin) else {
        ctx.error(
            &format!("{path}.origin"),
            format!("`{origin}` is not one of data_subject, third_party, public_source, derived"),
        );
        return None;
    };
    Some(PropertyValue::Source(Source {
        origin,
        description: description.ok()?,
    }))
}

fn parse_data_category(ctx: &mut Ctx, path: &str, value: &Value) -> Option<PropertyValue> {
    if let Value::String(name) = value {
        if name.trim().is_empty() {
            ctx.error(path, "data category name must not be empty");
            return None;
        }
        return Some(PropertyValue::DataCategory(DataCategory {
            name: name.clone(),
            description: None,
        }));
    }
    let map = ctx.object(path, value)?;
    ctx.unknown_fields(path, map, &["name", "description"]);
    let name = required_text(ctx, path, map, "name");
    let description = text_field(ctx, path, map, "description");
    Some(PropertyValue::DataCategory(DataCategory {
        name: name.ok()?,
        description: description.ok()?,
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diagnostics::Severity;
    use serde_json::json;

    fn parse(v: Value) -> PropertyBlock {
        parse_property_block(&v, &SitePath::root())
    }

    #[test]
    fn ten_year_retention_block() {
        let block = parse(json!({
            "retention_time": {
                "days": null, "months": null, "years": 10,
                "periodic_review": true,
                "review_frequency": {"days": 1}
            }
        }));
        assert!(block.diagnostics.is_empty(), "{:?}", block.diagnostics);
        assert_eq!(block.properties.len(), 1);
        assert_eq!(
            block.properties[0].value,
            PropertyValue::RetentionTime(RetentionTime {
                period: Some(Duration::years(10)),
                volatile: false,
                no_limit: false,
                periodic_review: true,
                review_frequency: Some(Duration::days(1)),
            })
        );
        assert_eq!(
            serialize_property(&block.properties[0]),
            json!({"retention_time": {"years": 10, "periodic_review": true, "review_frequency": {"days": 1}}})
        );
    }

    #[test]
    fn markers_carry_no_properties() {
        assert_eq!(parse(json!(true)), PropertyBlock::default());
        assert_eq!(parse(Value::Null), PropertyBlock::default());
        let f = parse(json!(false));
        assert!(f.properties.is_empty());
        assert_eq!(f.diagnostics[0].severity, Severity::Warning);
    }

    #[test]
    fn contradictory_retention_is_an_error() {
        let block = parse(json!({"retention_time": {"years": 10, "no_limit": true}}));
        assert!(block.properties.is_empty());
        assert_eq!(block.diagnostics.len(), 1);
        assert_eq!(block.diagnostics[0].severity, Severity::Error);
        assert_eq!(block.diagnostics[0].site, Some(SitePath::root()));

        let block = parse(json!({"retention_time": {"review_frequency": {"days": 1}}}));
        assert!(block.diagnostics[0].is_error());

        let block = parse(json!({"retention_time": {"years": -1}}));
        assert_eq!(block.diagnostics.len(), 1);
        assert!(block.diagnostics[0]
            .message
            .contains("retention_time.years"));
    }

    #[test]
    fn volatile_serializes_minimally() {
        let p = TransparencyProperty::new(
            PropertyValue::RetentionTime(RetentionTime::volatile()),
            SitePath::root(),
        );
        assert_eq!(
            serialize_property(&p),
            json!({"retention_time": {"volatile": true}})
        );
    }

    #[test]
    fn unknown_keys_warn_but_do_not_block() {
        let block = parse(json!({"colour": "blue", "purposes": [{"id": "a"}]}));
        assert_eq!(block.properties.len(), 1);
        assert_eq!(block.diagnostics.len(), 1);
        assert_eq!(block.diagnostics[0].code, "unknown-vocabulary-key");
    }

    #[test]
    fn element_invariants() {
        let errs = |v: Value| {
            parse(v)
                .diagnostics
                .into_iter()
                .filter(|d| d.is_error())
                .count()
        };
        assert_eq!(
            errs(json!({"recipients": [{"name": "x", "country": "de"}]})),
            1
        );
        assert_eq!(errs(json!({"recipients": [{"name": ""}]})), 1);
        assert_eq!(
            errs(json!({"third_country_transfer": {"occurs": false, "countries": ["US"]}})),
            1
        );
        assert_eq!(
            errs(json!({"special_category": {"applies": false, "ground": "9(2)(a)"}})),
            1
        );
        assert_eq!(errs(json!({"profiling": {"performed": true}})), 1);
        assert_eq!(errs(json!({"purposes": [{"id": "a"}, {"id": "a"}]})), 1);
        assert_eq!(
            errs(
                json!({"purposes": [{"id": "a", "allowed_utilizers": ["x"], "excluded_utilizers": ["x"]}]})
            ),
            1
        );
        assert_eq!(errs(json!({"source": {"origin": "somewhere"}})), 1);
        assert_eq!(
            errs(json!({"data_categories": [{"description": "no name"}]})),
            1
        );
        assert_eq!(errs(json!({"retention_time": "forever"})), 1);
        assert_eq!(errs(json!(["not", "a", "map"])), 1);
    }

    #[test]
    fn shorthand_list_entries() {
        let block = parse(
            json!({"recipients": "Analytics", "purposes": ["billing"], "data_categories": "health data"}),
        );
        assert!(block.diagnostics.is_empty());
        let kinds: Vec<_> = block
            .properties
            .iter()
            .map(TransparencyProperty::kind)
            .collect();
        assert_eq!(
            kinds,
            [
                VocabularyKind::Recipient,
                VocabularyKind::Purpose,
                VocabularyKind::DataCategory
            ]
        );
    }

    #[test]
    fn transfer_occurs_defaults_from_countries() {
        let block = parse(json!({"third_country_transfer": {"countries": ["US"]}}));
        assert_eq!(
            block.properties[0].value,
            PropertyValue::ThirdCountryTransfer(ThirdCountryTransfer {
                occurs: true,
                countries: vec!["US".into()],
                safeguards_note: None,
            })
        );
    }

    #[test]
    fn every_service_row_maps_to_a_distinct_kind() {
        let kinds: BTreeSet<_> = ServiceRow::ALL.iter().map(|r| r.kind()).collect();
        assert_eq!(kinds.len(), 7);
        assert!(!kinds.contains(&VocabularyKind::SpecialCategory));
    }

    #[test]
    fn duration_ordering_breaks_ties_by_components() {
        let twelve_months = Duration::months(12);
        let days_360 = Duration::days(360);
        assert_eq!(twelve_months.approx_days(), days_360.approx_days());
        assert_ne!(twelve_months.cmp_length(&days_360), Ordering::Equal);
        assert_eq!(
            twelve_months.cmp_length(&days_360),
            days_360.cmp_length(&twelve_months).reverse()
        );
        assert_eq!(
            Duration::years(10).cmp_length(&Duration::days(1)),
            Ordering::Greater
        );
    }
}
