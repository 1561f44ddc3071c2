//! Host normalization: converts absolute measurements into dimensionless
//! ratios against per-metric baselines, so profiles taken on different
//! developer machines stay comparable. Ratio scores are combined with
//! the geometric mean, which keeps rankings independent of the baseline
//! machine.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::Backend;
use crate::bundle::ProfileBundle;
use crate::config::ExperimentSpec;
use crate::engine::{execute_campaign, EngineError, EngineOptions};
use crate::model::{AggregatedMetric, HostDescriptor, MetricStats, PerformanceProfile, Violation};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Measured,
    Supplied,
}

fn default_provenance() -> Provenance {
    Provenance::Supplied
}

/// Per-metric reference values measured on (or supplied for) a host.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaselineVector {
    pub host: HostDescriptor,
    pub baselines: BTreeMap<String, f64>,
    #[serde(default = "default_provenance")]
    pub provenance: Provenance,
}

impl BaselineVector {
    /// The unit baseline: normalization against it is the identity.
    pub fn unit(host: HostDescriptor, metrics: &[String]) -> Self {
        BaselineVector {
            host,
            baselines: metrics.iter().map(|m| (m.clone(), 1.0)).collect(),
            provenance: Provenance::Supplied,
        }
    }

    pub fn validate(&self) -> Result<(), NormalizeError> {
        for (metric, value) in &self.baselines {
            if !value.is_finite() || *value <= 0.0 {
                return Err(NormalizeError::NonPositiveBaseline {
                    metric: metric.clone(),
                    value: *value,
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NormalizeError {
    #[error("no baseline for metric `{metric}`")]
    MissingBaseline { metric: String },
    #[error("baseline for `{metric}` must be > 0, got {value}")]
    NonPositiveBaseline { metric: String, value: f64 },
    #[error("geometric mean requires positive values, got {value}")]
    NonPositiveValue { value: f64 },
    #[error("geometric mean of an empty set is undefined")]
    Empty,
}

/// Divides every mean, spread, and interval bound by the metric's
/// baseline; the result is dimensionless.
pub fn normalize_profile(
    profile: &PerformanceProfile,
    baseline: &BaselineVector,
) -> Result<PerformanceProfile, NormalizeError> {
    baseline.validate()?;
    let mut out = profile.clone();
    for row in &mut out.table {
        for (name, stats) in row.metrics.iter_mut() {
            let b =
                *baseline
                    .baselines
                    .get(name)
                    .ok_or_else(|| NormalizeError::MissingBaseline {
                        metric: name.clone(),
                    })?;
            *stats = match *stats {
                MetricStats::Ci(a) => MetricStats::Ci(AggregatedMetric {
                    mean: a.mean / b,
                    std: a.std / b,
                    n: a.n,
                    ci95_low: a.ci95_low / b,
                    ci95_high: a.ci95_high / b,
                }),
                MetricStats::Point { mean, n } => MetricStats::Point { mean: mean / b, n },
            };
        }
    }
    Ok(out)
}

/// exp(mean of logs): the single-number score of a normalized profile
/// row. Requires strictly positive inputs.
pub fn geometric_mean_score(values: &[f64]) -> Result<f64, NormalizeError> {
    if values.is_empty() {
        return Err(NormalizeError::Empty);
    }
    let mut log_sum = 0.0;
    for &v in values {
        if !v.is_finite() || v <= 0.0 {
            return Err(NormalizeError::NonPositiveValue { value: v });
        }
        log_sum += v.ln();
    }
    Ok((log_sum / values.len() as f64).exp())
}

/// Geometric-mean score per configuration row of a normalized profile.
/// Lower-is-better metrics enter inverted so the mean composes
/// consistently; rows containing non-positive values carry no score.
pub fn score_rows(
    normalized: &PerformanceProfile,
    higher_is_better: &BTreeMap<String, bool>,
) -> BTreeMap<usize, f64> {
    let mut scores = BTreeMap::new();
    for row in &normalized.table {
        let mut values = Vec::with_capacity(row.metrics.len());
        for (name, stats) in &row.metrics {
            let mean = stats.mean();
            let direction = higher_is_better.get(name).copied().unwrap_or(true);
            values.push(if direction { mean } else { 1.0 / mean });
        }
        if let Ok(score) = geometric_mean_score(&values) {
            scores.insert(row.config_index, score);
        }
    }
    scores
}

/// Normalizes every profile in the bundle, storing the results under
/// the bundle's `normalized` set.
pub fn normalize_bundle(
    bundle: &mut ProfileBundle,
    baseline: &BaselineVector,
) -> Result<(), NormalizeError> {
    let mut normalized = Vec::with_capacity(bundle.profiles.len());
    for profile in &bundle.profiles {
        normalized.push(normalize_profile(profile, baseline)?);
    }
    bundle.normalized = Some(normalized);
    Ok(())
}

/// Node id used by the built-in calibration experiment.
pub const CALIBRATION_NODE: &str = "calibrate";
/// Image the container backend runs for calibration.
pub const CALIBRATION_IMAGE: &str = "chainprof/calibrate";
/// Reference rate of the simulated calibration node.
pub const CALIBRATION_BASE_RATE: f64 = 100.0;

/// The designated calibration experiment: one trivial node, one fixed
/// configuration, noise-free on the simulated backend.
pub fn calibration_spec(backend: crate::backend::BackendConfig) -> ExperimentSpec {
    use crate::backend::{BackendKind, SimVNFModel};
    use crate::model::{
        ConfigurationSpace, MetricSpec, NodeKind, NodeSpec, ResourceLimits, TopologyDescriptor,
    };
    let sim_models = match backend.kind {
        BackendKind::Simulated => Some(BTreeMap::from([(
            CALIBRATION_NODE.to_string(),
            SimVNFModel {
                base_rate: CALIBRATION_BASE_RATE,
                parallel_fraction: 0.0,
                max_threads: 1,
                cpu_bound: true,
                mem_floor_mb: 0,
                noise_std: 0.0,
            },
        )])),
        BackendKind::Container => None,
    };
    ExperimentSpec {
        name: "chainprof-baseline-calibration".to_string(),
        repetitions: 3,
        seed: 0,
        topology: TopologyDescriptor {
            nodes: vec![NodeSpec {
                id: CALIBRATION_NODE.to_string(),
                image: CALIBRATION_IMAGE.to_string(),
                kind: NodeKind::Vnf,
            }],
            probes: vec![],
            links: vec![],
        },
        sweep: ConfigurationSpace::Explicit {
            configurations: vec![BTreeMap::from([(
                CALIBRATION_NODE.to_string(),
                ResourceLimits {
                    cpu_cores: Some(1),
                    cpu_time: Some(1.0),
                    ..Default::default()
                },
            )])],
        },
        metrics: vec![MetricSpec {
            name: "rate".to_string(),
            source: CALIBRATION_NODE.to_string(),
            file: "metrics.json".to_string(),
            key: "rate".to_string(),
            unit: "ops/s".to_string(),
            higher_is_better: true,
        }],
        backend,
        sim_models,
        post_process: None,
        topology_variant: None,
        warmup_s: 0.0,
        duration_s: None,
    }
}

#[derive(Debug, Error)]
pub enum BaselineError {
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error("calibration run yielded no samples")]
    NoSamples,
}

/// Measures a baseline by running the calibration experiment on the
/// given backend: the calibration node's mean rate becomes the baseline
/// value for every requested metric (one host-speed scalar).
pub fn measure_baseline(
    backend: &dyn Backend,
    backend_config: crate::backend::BackendConfig,
    metrics: &[String],
) -> Result<BaselineVector, BaselineError> {
    let spec = calibration_spec(backend_config);
    let bundle = execute_campaign(&spec, backend, &EngineOptions::default())?;
    let samples: Vec<f64> = bundle.records.iter().map(|r| r.value).collect();
    if samples.is_empty() {
        return Err(BaselineError::NoSamples);
    }
    let mean = samples.iter().sum::<f64>() / samples.len() as f64;
    if !(mean.is_finite() && mean > 0.0) {
        return Err(BaselineError::NoSamples);
    }
    Ok(BaselineVector {
        host: backend.host(),
        baselines: metrics.iter().map(|m| (m.clone(), mean)).collect(),
        provenance: Provenance::Measured,
    })
}

/// Baseline-coverage check against a set of metric names; used before
/// normalizing a whole bundle.
pub fn check_coverage(baseline: &BaselineVector, metrics: &[String]) -> Result<(), Vec<Violation>> {
    let mut missing = Vec::new();
    for metric in metrics {
        if !baseline.baselines.contains_key(metric) {
            missing.push(Violation {
                subject: format!("baselines/{}", metric),
                message: "missing baseline for metric".to_string(),
            });
        }
    }
    if missing.is_empty() {
        Ok(())
    } else {
        Err(missing)
    }
}
