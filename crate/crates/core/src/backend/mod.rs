//! Execution backends: the deploy-measure-collect-teardown contract,
//! the deterministic simulated backend, and the container-engine client.

mod container;
mod sim;

pub use container::{assign_cores, ContainerBackend, CPU_QUOTA_PERIOD_US, PRIMARY_BLOCK_DEVICE};
pub use sim::{sim_chain_metric, sim_evaluate, ChainMetrics, SimulatedBackend};

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{
    HostDescriptor, MetricSpec, ResourceConfiguration, TopologyDescriptor, ValidationReport,
};

/// Which executor runs the profiling cycles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Simulated,
    Container,
}

impl fmt::Display for BackendKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BackendKind::Simulated => f.write_str("simulated"),
            BackendKind::Container => f.write_str("container"),
        }
    }
}

/// Backend selection and connection settings from the experiment spec.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendConfig {
    #[serde(rename = "type")]
    pub kind: BackendKind,
    /// Container engine remote API URL; required iff kind is container.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<String>,
    /// Host directory under which per-run shared result volumes live.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub volume_root: Option<PathBuf>,
}

impl BackendConfig {
    pub fn simulated() -> Self {
        BackendConfig {
            kind: BackendKind::Simulated,
            endpoint: None,
            volume_root: None,
        }
    }

    pub fn validate(&self) -> ValidationReport {
        let mut report = ValidationReport::default();
        match self.kind {
            BackendKind::Container => {
                if self.endpoint.is_none() {
                    report.error("backend/endpoint", "container backend requires an endpoint");
                }
            }
            BackendKind::Simulated => {
                if self.endpoint.is_some() {
                    report.error(
                        "backend/endpoint",
                        "simulated backend does not take an endpoint",
                    );
                }
            }
        }
        report
    }
}

/// Synthetic performance model for one VNF on the simulated backend.
///
/// `base_rate` is the node's primary-metric output at one core and full
/// CPU time. `parallel_fraction` and `max_threads` shape the speedup
/// curve; `cpu_bound = false` makes the node ignore CPU limits entirely.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimVNFModel {
    pub base_rate: f64,
    #[serde(default)]
    pub parallel_fraction: f64,
    #[serde(default = "default_max_threads")]
    pub max_threads: u32,
    #[serde(default = "default_cpu_bound")]
    pub cpu_bound: bool,
    #[serde(default)]
    pub mem_floor_mb: u64,
    #[serde(default)]
    pub noise_std: f64,
}

fn default_max_threads() -> u32 {
    1
}

fn default_cpu_bound() -> bool {
    true
}

impl SimVNFModel {
    pub fn validate(&self, node: &str) -> ValidationReport {
        let mut report = ValidationReport::default();
        let subject = |field: &str| format!("sim_models/{}/{}", node, field);
        if !self.base_rate.is_finite() || self.base_rate <= 0.0 {
            report.error(subject("base_rate"), "base_rate must be > 0");
        }
        if !self.parallel_fraction.is_finite() || !(0.0..=1.0).contains(&self.parallel_fraction) {
            report.error(
                subject("parallel_fraction"),
                "parallel_fraction must be in [0,1]",
            );
        }
        if self.max_threads < 1 {
            report.error(subject("max_threads"), "max_threads must be ≥ 1");
        }
        if !self.noise_std.is_finite() || self.noise_std < 0.0 {
            report.error(subject("noise_std"), "noise_std must be ≥ 0");
        }
        report
    }
}

/// Result documents collected from one node: file path relative to the
/// node's result volume, mapping to flat key→number pairs.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct NodeResult {
    pub docs: BTreeMap<String, BTreeMap<String, f64>>,
    pub log: String,
}

/// Outcome for one node within a run: collected documents, or an
/// explicit failure marker so the campaign can skip-and-flag.
#[derive(Debug, Clone, PartialEq)]
pub enum NodeOutcome {
    Collected(NodeResult),
    Failed { reason: String },
}

/// Everything a single deploy-measure-collect cycle produced.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunResult {
    pub nodes: BTreeMap<String, NodeOutcome>,
}

impl RunResult {
    pub fn outcome(&self, node: &str) -> Option<&NodeOutcome> {
        self.nodes.get(node)
    }
}

/// Per-run inputs beyond the topology and limits.
#[derive(Debug, Clone, Copy)]
pub struct RunRequest<'a> {
    pub repetition: usize,
    pub seed: u64,
    pub metrics: &'a [MetricSpec],
    /// Seconds to wait before measuring; 0 disables warm-up.
    pub warmup_s: f64,
    /// Measurement window; None leaves the duration backend-defined.
    pub duration_s: Option<f64>,
}

/// Opaque handle to deployed per-run state, returned by `deploy` and
/// consumed by `teardown`.
#[derive(Debug, Clone, Default)]
pub struct Deployment {
    /// Deployment label, unique per run on real executors.
    pub label: String,
    /// Backend-specific handles (container ids), in teardown order.
    pub handles: Vec<String>,
}

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("deploy failed for `{node}`: {reason}")]
    Deploy { node: String, reason: String },
    #[error("cannot apply limits to `{subject}`: {reason}")]
    LimitApplication { subject: String, reason: String },
    #[error("collection timed out for `{node}`")]
    CollectionTimeout { node: String },
    #[error("no source-to-sink path through the chain")]
    NoPath,
    #[error("teardown left `{handle}` behind: {reason}")]
    Teardown { handle: String, reason: String },
    #[error("engine error: {0}")]
    Engine(String),
}

impl BackendError {
    /// True when the error indicates a misconfigured campaign rather
    /// than a transient single-run failure.
    pub fn is_fatal(&self) -> bool {
        !matches!(self, BackendError::CollectionTimeout { .. })
    }
}

/// The execution contract every backend implements. `execute_run`
/// covers one full cycle; the default implementation guarantees that
/// teardown runs whenever deploy succeeded, collection errors included.
pub trait Backend: Send + Sync {
    fn host(&self) -> HostDescriptor;

    /// Whether independent runs may execute concurrently without
    /// perturbing each other's measurements.
    fn concurrency_safe(&self) -> bool;

    fn deploy(
        &self,
        topo: &TopologyDescriptor,
        config: &ResourceConfiguration,
    ) -> Result<Deployment, BackendError>;

    fn collect(
        &self,
        deployment: &Deployment,
        topo: &TopologyDescriptor,
        config: &ResourceConfiguration,
        request: &RunRequest<'_>,
    ) -> Result<RunResult, BackendError>;

    fn teardown(&self, deployment: Deployment) -> Result<(), BackendError>;

    fn execute_run(
        &self,
        topo: &TopologyDescriptor,
        config: &ResourceConfiguration,
        request: &RunRequest<'_>,
    ) -> Result<RunResult, BackendError> {
        let deployment = self.deploy(topo, config)?;
        let collected = self.collect(&deployment, topo, config, request);
        let teardown = self.teardown(deployment);
        let result = collected?;
        teardown?;
        Ok(result)
    }
}
