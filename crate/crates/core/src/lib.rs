//! Transparency annotations for OpenAPI service descriptions: parsing,
//! per-datum resolution, cross-service aggregation and the registry hub.

pub mod aggregate;
pub mod diagnostics;
pub mod flow;
pub mod hub;
pub mod openapi;
pub mod resolver;
pub mod vocabulary;
pub mod webhook;

pub use diagnostics::{has_errors, Diagnostic, Severity};
pub use openapi::{parse_document, OpenApiDocument, SitePath, SourceFormat};
