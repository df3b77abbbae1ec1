//! Assumption auditing, calibrated risk estimation and abstention-aware
//! method recommendation for multivariate time-series causal discovery.

pub mod atlas;
pub mod config;
pub mod decision;
pub mod diagnostics;
pub mod discovery;
pub mod error;
pub mod eval;
pub mod graph;
pub mod risk;
pub mod rng;
pub mod series;
pub mod stats;

pub use config::AuditConfig;
pub use decision::{decide, Decision, MethodSpec, Outcome};
pub use diagnostics::{audit, DiagnosticReport, Features};
pub use error::{AuditError, Result};
pub use graph::{Edge, SummaryGraph};
pub use risk::{compute_risk_profile, RiskModels, RiskProfile};
pub use series::{load_series, SeriesFormat, TimeSeriesMatrix};
