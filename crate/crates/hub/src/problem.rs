use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde::Serialize;
use serde_json::Value;
use tira_core::hub::HubError;
use tira_core::webhook::{AdapterError, EventError};

/// Error body of every failed request.
#[derive(Debug, Serialize)]
pub struct Problem {
    #[serde(skip)]
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub field: Option<String>,
    /// Structured details: diagnostics or per-field errors.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub errors: Option<Value>,
}

impl Problem {
    pub fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self {
            status,
            code,
            message: message.into(),
            field: None,
            errors: None,
        }
    }

    pub fn field(mut self, field: impl Into<String>) -> Self {
        self.field = Some(field.into());
        self
    }

    fn errors(mut self, errors: impl Serialize) -> Self {
        self.errors = Some(serde_json::to_value(errors).expect("details serialize"));
        self
    }

    pub fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "bad-request", message)
    }

    pub fn not_found(message: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, "not-found", message)
    }

    pub fn unauthorized() -> Self {
        Self::new(
            StatusCode::UNAUTHORIZED,
            "unauthorized",
            "missing or wrong credentials",
        )
    }
}

impl IntoResponse for Problem {
    fn into_response(self) -> Response {
        let status = self.status;
        let mut res = (status, Json(self)).into_response();
        res.headers_mut().insert(
            axum::http::header::CONTENT_TYPE,
            "application/problem+json".parse().expect("static header"),
        );
        res
    }
}

impl From<HubError> for Problem {
    fn from(e: HubError) -> Self {
        let message = e.to_string();
        match e {
            HubError::InvalidName(_) => {
                Problem::new(StatusCode::BAD_REQUEST, "invalid-name", message).field("name")
            }
            HubError::Conflict(_) => Problem::new(StatusCode::CONFLICT, "conflict", message),
            HubError::UnknownService(_) | HubError::UnknownVersion { .. } => {
                Problem::not_found(message)
            }
            HubError::InvalidRange { .. } => {
                Problem::new(StatusCode::BAD_REQUEST, "invalid-range", message).field("from")
            }
            HubError::InvalidSpec(diags) => {
                Problem::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid-spec", message)
                    .field("spec_text")
                    .errors(diags)
            }
            HubError::InvalidSystemInfo(fields) => {
                let first = fields.first().map(|f| f.field.clone());
                let mut p = Problem::new(StatusCode::UNPROCESSABLE_ENTITY, "validation", message)
                    .errors(&fields);
                p.field = first;
                p
            }
            HubError::Flow(_) => Problem::new(
                StatusCode::UNPROCESSABLE_ENTITY,
                "unknown-endpoint",
                message,
            )
            .field("edges"),
            HubError::Store(_) => {
                tracing::error!(error = %message, "storage failure");
                Problem::new(StatusCode::INTERNAL_SERVER_ERROR, "storage", message)
            }
        }
    }
}

impl From<EventError> for Problem {
    fn from(e: EventError) -> Self {
        let field = match e {
            EventError::MissingRepoUrl => "repo_url",
            EventError::InlineNotChanged(_) => "inline_specs",
        };
        Problem::new(
            StatusCode::UNPROCESSABLE_ENTITY,
            "invalid-event",
            e.to_string(),
        )
        .field(field)
    }
}

impl From<AdapterError> for Problem {
    fn from(e: AdapterError) -> Self {
        Problem::new(
            StatusCode::UNPROCESSABLE_ENTITY,
            "invalid-event",
            e.to_string(),
        )
        .field(e.0)
    }
}
