use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Contact {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub email: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phone: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub address: Option<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LegalBasisKind {
    Consent,
    Contract,
    LegalObligation,
    VitalInterest,
    PublicTask,
    LegitimateInterest,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LegalBasis {
    pub basis: LegalBasisKind,
    #[serde(default)]
    pub note: String,
}

/// Controller-wide GDPR information maintained by hand at the hub.
/// Every field may be left out; the report then says `unspecified`.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemWideInfo {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub controller_contact: Option<Contact>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dpo_contact: Option<Contact>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub third_country_safeguards: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub legal_bases: Vec<LegalBasis>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub legitimate_interest_note: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub right_rectification_deletion_portability: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub right_withdraw_consent: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub right_lodge_complaint: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provision_mandatory: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub consequences_note: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub data_subject_categories: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldError {
    pub field: String,
    pub message: String,
}

impl FieldError {
    fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            field: field.into(),
            message: message.into(),
        }
    }
}

fn blank(s: &Option<String>) -> bool {
    s.as_deref().is_none_or(|s| s.trim().is_empty())
}

impl SystemWideInfo {
    pub fn validate(&self) -> Result<(), Vec<FieldError>> {
        let mut errors = Vec::new();
        for (field, contact) in [
            ("controller_contact", &self.controller_contact),
            ("dpo_contact", &self.dpo_contact),
        ] {
            if let Some(c) = contact {
                if c.name.trim().is_empty() {
                    errors.push(FieldError::new(
                        format!("{field}.name"),
                        "must not be empty",
                    ));
                }
                if let Some(email) = &c.email {
                    if !email.contains('@') {
                        errors.push(FieldError::new(
                            format!("{field}.email"),
                            "is not an email address",
                        ));
                    }
                }
            }
        }
        if !blank(&self.legitimate_interest_note)
            && !self
                .legal_bases
                .iter()
                .any(|b| b.basis == LegalBasisKind::LegitimateInterest)
        {
            errors.push(FieldError::new(
                "legitimate_interest_note",
                "requires `legitimate_interest` among legal_bases",
            ));
        }
        if self.provision_mandatory == Some(true) && blank(&self.consequences_note) {
            errors.push(FieldError::new(
                "consequences_note",
                "must describe the consequences when provision is mandatory",
            ));
        }
        for (i, c) in self.data_subject_categories.iter().enumerate() {
            if c.trim().is_empty() {
                errors.push(FieldError::new(
                    format!("data_subject_categories[{i}]"),
                    "must not be empty",
                ));
            }
        }
        if errors.is_empty() {
            Ok(())
        } else {
            Err(errors)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mandatory_provision_needs_consequences() {
        let info = SystemWideInfo {
            provision_mandatory: Some(true),
            ..Default::default()
        };
        let errs = info.validate().unwrap_err();
        assert_eq!(errs.len(), 1);
        assert_eq!(errs[0].field, "consequences_note");
    }

    #[test]
    fn legitimate_interest_note_needs_basis() {
        let mut info = SystemWideInfo {
            legitimate_interest_note: Some("fraud prevention".into()),
            legal_bases: vec![LegalBasis {
                basis: LegalBasisKind::Consent,
                note: String::new(),
            }],
            ..Default::default()
        };
        assert_eq!(
            info.validate().unwrap_err()[0].field,
            "legitimate_interest_note"
        );
        info.legal_bases.push(LegalBasis {
            basis: LegalBasisKind::LegitimateInterest,
            note: String::new(),
        });
        assert!(info.validate().is_ok());
    }

    #[test]
    fn empty_record_is_valid() {
        assert!(SystemWideInfo::default().validate().is_ok());
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let r: Result<SystemWideInfo, _> = serde_json::from_str(r#"{"dpo": {"name": "x"}}"#);
        assert!(r.is_err());
    }
}
