//! Experiment specification: the single input document driving a
//! profiling campaign. Parsing is strict and total: every input either
//! yields a fully validated spec or a structured error.

use std::collections::BTreeMap;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{BackendConfig, BackendKind, SimVNFModel};
use crate::model::{
    enumerate_configurations, validate_topology, ConfigurationSpace, MetricSpec,
    TopologyDescriptor, ValidationReport, Violation,
};

pub const DEFAULT_REPETITIONS: usize = 3;

fn default_repetitions() -> usize {
    DEFAULT_REPETITIONS
}

/// A complete profiling experiment: what to run, under which limit
/// sweep, what to measure, and on which backend.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub name: String,
    /// Repetitions per configuration.
    #[serde(default = "default_repetitions")]
    pub repetitions: usize,
    /// Root seed all per-run seeds derive from.
    #[serde(default)]
    pub seed: u64,
    pub topology: TopologyDescriptor,
    pub sweep: ConfigurationSpace,
    pub metrics: Vec<MetricSpec>,
    pub backend: BackendConfig,
    /// Per-node synthetic models; required iff the backend is simulated.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sim_models: Option<BTreeMap<String, SimVNFModel>>,
    /// Executable invoked with the bundle path once the campaign ends.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub post_process: Option<PathBuf>,
    /// Names this experiment's topology as an emulated target-environment
    /// variant; end-to-end results are then also emitted as a TP profile.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub topology_variant: Option<String>,
    /// Seconds to wait before the measurement window of each run.
    #[serde(default)]
    pub warmup_s: f64,
    /// Measurement window per run; absent leaves it backend-defined.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duration_s: Option<f64>,
}

#[derive(Debug, Error)]
pub enum SpecError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("schema error at {path}: {message}")]
    Schema { path: String, message: String },
    #[error("invalid specification:\n{}", violations_lines(.violations))]
    Semantic { violations: Vec<Violation> },
}

fn violations_lines(violations: &[Violation]) -> String {
    violations
        .iter()
        .map(|v| format!("  - {}", v))
        .collect::<Vec<_>>()
        .join("\n")
}

/// Parses and fully validates an experiment document. Defaults are
/// filled (repetitions 3, seed 0) and all referential checks applied;
/// no partially valid spec escapes.
pub fn parse_experiment(text: &str) -> Result<ExperimentSpec, SpecError> {
    let deserializer = &mut serde_json::Deserializer::from_str(text);
    let spec: ExperimentSpec = match serde_path_to_error::deserialize(deserializer) {
        Ok(spec) => spec,
        Err(err) => return Err(classify_parse_error(err)),
    };
    let report = validate_experiment(&spec);
    if !report.is_ok() {
        return Err(SpecError::Semantic {
            violations: report.errors,
        });
    }
    Ok(spec)
}

fn classify_parse_error(err: serde_path_to_error::Error<serde_json::Error>) -> SpecError {
    let path = json_pointer(err.path());
    let inner = err.into_inner();
    match inner.classify() {
        serde_json::error::Category::Syntax | serde_json::error::Category::Eof => {
            SpecError::Syntax {
                line: inner.line(),
                column: inner.column(),
                message: strip_position(&inner.to_string()),
            }
        }
        _ => {
            let message = strip_position(&inner.to_string());
            // Point missing-field errors at the absent field itself.
            let path = match missing_field_name(&message) {
                Some(field) if path == "/" => format!("/{}", field),
                Some(field) => format!("{}/{}", path, field),
                None => path,
            };
            SpecError::Schema { path, message }
        }
    }
}

fn json_pointer(path: &serde_path_to_error::Path) -> String {
    use serde_path_to_error::Segment;
    let mut out = String::new();
    for segment in path.iter() {
        match segment {
            Segment::Map { key } => {
                out.push('/');
                out.push_str(key);
            }
            Segment::Seq { index } => {
                out.push('/');
                out.push_str(&index.to_string());
            }
            Segment::Enum { variant } => {
                out.push('/');
                out.push_str(variant);
            }
            Segment::Unknown => out.push_str("/?"),
        }
    }
    if out.is_empty() {
        out.push('/');
    }
    out
}

fn strip_position(message: &str) -> String {
    match message.rfind(" at line ") {
        Some(idx) => message[..idx].to_string(),
        None => message.to_string(),
    }
}

fn missing_field_name(message: &str) -> Option<&str> {
    message
        .strip_prefix("missing field `")
        .and_then(|rest| rest.split('`').next())
}

fn delimiter_safe(s: &str) -> bool {
    !s.contains(',') && !s.contains('\n') && !s.contains('\r')
}

/// Semantic validation across the whole document: referential integrity,
/// domain bounds, and backend consistency rules.
pub fn validate_experiment(spec: &ExperimentSpec) -> ValidationReport {
    let mut report = ValidationReport::default();

    if spec.name.is_empty() {
        report.error("/name", "experiment name must be non-empty");
    }
    if spec.repetitions < 1 {
        report.error("/repetitions", "repetitions must be ≥ 1");
    }
    if !spec.warmup_s.is_finite() || spec.warmup_s < 0.0 {
        report.error("/warmup_s", "warmup_s must be ≥ 0");
    }
    if let Some(d) = spec.duration_s {
        if !d.is_finite() || d <= 0.0 {
            report.error("/duration_s", "duration_s must be > 0 when given");
        }
    }

    let topo_report = validate_topology(&spec.topology);
    for v in topo_report.errors {
        report.error(format!("/topology/{}", v.subject), v.message);
    }
    for v in topo_report.warnings {
        report.warn(format!("/topology/{}", v.subject), v.message);
    }

    if spec.metrics.is_empty() {
        report.error("/metrics", "at least one metric is required");
    }
    let mut names = std::collections::BTreeSet::new();
    for (i, metric) in spec.metrics.iter().enumerate() {
        let subject = format!("/metrics/{}", i);
        if metric.name.is_empty() {
            report.error(subject.clone(), "metric name must be non-empty");
        }
        if !names.insert(metric.name.as_str()) {
            report.error(
                subject.clone(),
                format!("duplicate metric name `{}`", metric.name),
            );
        }
        if !spec.topology.has_endpoint(&metric.source) {
            report.error(
                subject.clone(),
                format!("source `{}` is not declared in the topology", metric.source),
            );
        }
        for (field, value) in [
            ("name", &metric.name),
            ("unit", &metric.unit),
            ("key", &metric.key),
            ("file", &metric.file),
        ] {
            if !delimiter_safe(value) {
                report.error(
                    format!("{}/{}", subject, field),
                    "must not contain commas or line breaks",
                );
            }
        }
    }

    report.merge(spec.backend.validate());

    match enumerate_configurations(&spec.sweep, &spec.topology) {
        Ok(_) => {}
        Err(err) => report.error("/sweep", err.to_string()),
    }

    match (&spec.sim_models, spec.backend.kind) {
        (Some(models), BackendKind::Simulated) => {
            for node in spec.topology.node_ids() {
                if !models.contains_key(node) {
                    report.error("/sim_models", format!("missing model for node `{}`", node));
                }
            }
            for (name, model) in models {
                if spec.topology.node(name).is_none() {
                    report.error(
                        format!("/sim_models/{}", name),
                        "does not match any declared VNF node",
                    );
                }
                report.merge(model.validate(name));
            }
        }
        (None, BackendKind::Simulated) => {
            report.error("/sim_models", "simulated backend requires sim_models");
        }
        (Some(_), BackendKind::Container) => {
            report.error("/sim_models", "container backend does not take sim_models");
        }
        (None, BackendKind::Container) => {}
    }

    if let Some(variant) = &spec.topology_variant {
        if variant.is_empty() {
            report.error("/topology_variant", "variant name must be non-empty");
        }
    }

    report
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const MINIMAL_WHITEBOX: &str = r#"{
        "name": "whitebox-demo",
        "seed": 7,
        "topology": { "nodes": [ { "id": "VE", "image": "encoder" } ] },
        "sweep": {
            "mode": "cartesian",
            "dimensions": { "VE": { "cpu_time": [0.25, 0.5, 1.0] } }
        },
        "metrics": [
            {
                "name": "rate",
                "source": "VE",
                "file": "metrics.json",
                "key": "rate",
                "unit": "ops/s",
                "higher_is_better": true
            }
        ],
        "backend": { "type": "simulated" },
        "sim_models": { "VE": { "base_rate": 100.0 } }
    }"#;

    #[test]
    fn minimal_whitebox_spec_parses_with_default_repetitions() {
        let spec = parse_experiment(MINIMAL_WHITEBOX).unwrap();
        assert_eq!(spec.repetitions, 3);
        assert_eq!(spec.name, "whitebox-demo");
        assert_eq!(spec.metrics.len(), 1);
        assert!(spec.duration_s.is_none());
        assert_eq!(spec.warmup_s, 0.0);
    }

    #[test]
    fn missing_metrics_is_schema_error_at_path() {
        let text = MINIMAL_WHITEBOX.replace("\"metrics\"", "\"metricz\"");
        match parse_experiment(&text) {
            Err(SpecError::Schema { path, message }) => {
                // The unknown key is reported first under strict parsing.
                assert!(path == "/metricz" || path == "/metrics", "path {}", path);
                assert!(
                    message.contains("metricz") || message.contains("missing field `metrics`"),
                    "{}",
                    message
                );
            }
            other => panic!("expected schema error, got {:?}", other.map(|_| ())),
        }

        let mut value: serde_json::Value = serde_json::from_str(MINIMAL_WHITEBOX).unwrap();
        value.as_object_mut().unwrap().remove("metrics");
        match parse_experiment(&value.to_string()) {
            Err(SpecError::Schema { path, .. }) => assert_eq!(path, "/metrics"),
            other => panic!("expected schema error, got {:?}", other.map(|_| ())),
        }
    }

    #[test]
    fn unknown_dimension_key_is_named() {
        let text = MINIMAL_WHITEBOX.replace("cpu_time", "cpu_shares");
        match parse_experiment(&text) {
            Err(SpecError::Schema { path, message }) => {
                assert!(message.contains("cpu_shares"), "{}", message);
                assert!(path.starts_with("/sweep"), "path {}", path);
            }
            other => panic!("expected schema error, got {:?}", other.map(|_| ())),
        }
    }

    #[test]
    fn syntax_error_reports_position() {
        match parse_experiment("{ \"name\": ") {
            Err(SpecError::Syntax { line, column, .. }) => {
                assert_eq!(line, 1);
                assert!(column > 0);
            }
            other => panic!("expected syntax error, got {:?}", other.map(|_| ())),
        }
    }

    #[test]
    fn simulated_backend_requires_covering_models() {
        let mut value: serde_json::Value = serde_json::from_str(MINIMAL_WHITEBOX).unwrap();
        value.as_object_mut().unwrap().remove("sim_models");
        match parse_experiment(&value.to_string()) {
            Err(SpecError::Semantic { violations }) => {
                assert!(violations.iter().any(|v| v.subject == "/sim_models"));
            }
            other => panic!("expected semantic error, got {:?}", other.map(|_| ())),
        }
    }

    #[test]
    fn metric_source_must_exist() {
        let text = MINIMAL_WHITEBOX.replace("\"source\": \"VE\"", "\"source\": \"ghost\"");
        match parse_experiment(&text) {
            Err(SpecError::Semantic { violations }) => {
                assert!(violations.iter().any(|v| v.message.contains("ghost")));
            }
            other => panic!("expected semantic error, got {:?}", other.map(|_| ())),
        }
    }

    #[test]
    fn roundtrip_serialization_is_stable() {
        let spec = parse_experiment(MINIMAL_WHITEBOX).unwrap();
        let text = serde_json::to_string(&spec).unwrap();
        let again = parse_experiment(&text).unwrap();
        assert_eq!(spec, again);
    }
}
