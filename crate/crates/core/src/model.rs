//! Domain types shared across the toolkit: resource limits, sweep spaces,
//! topologies, measurement records, and aggregated profiles, together with
//! their validation rules and configuration-space enumeration.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Per-container resource limits. Absent fields mean "unlimited".
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResourceLimits {
    /// Number of CPU cores assigned to the container.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cpu_cores: Option<u32>,
    /// Fraction of total-machine CPU time in (0, 1].
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cpu_time: Option<f64>,
    /// Maximum memory in MiB.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mem_max: Option<u64>,
    /// Maximum swap memory in MiB.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mem_swap_max: Option<u64>,
    /// Maximum block-device read/write throughput in MiB/s.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub block_io_bw: Option<f64>,
}

impl ResourceLimits {
    pub fn is_unlimited(&self) -> bool {
        self.cpu_cores.is_none()
            && self.cpu_time.is_none()
            && self.mem_max.is_none()
            && self.mem_swap_max.is_none()
            && self.block_io_bw.is_none()
    }

    /// Value of one sweep dimension as a real number, if set.
    pub fn dimension_value(&self, dim: Dimension) -> Option<f64> {
        match dim {
            Dimension::CpuCores => self.cpu_cores.map(|v| v as f64),
            Dimension::CpuTime => self.cpu_time,
            Dimension::MemMax => self.mem_max.map(|v| v as f64),
            Dimension::MemSwapMax => self.mem_swap_max.map(|v| v as f64),
            Dimension::BlockIoBw => self.block_io_bw,
        }
    }

    fn set_dimension(&mut self, dim: Dimension, value: f64) {
        match dim {
            Dimension::CpuCores => self.cpu_cores = Some(value as u32),
            Dimension::CpuTime => self.cpu_time = Some(value),
            Dimension::MemMax => self.mem_max = Some(value as u64),
            Dimension::MemSwapMax => self.mem_swap_max = Some(value as u64),
            Dimension::BlockIoBw => self.block_io_bw = Some(value),
        }
    }
}

/// The sweepable limit dimensions, in canonical enumeration order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dimension {
    CpuCores,
    CpuTime,
    MemMax,
    MemSwapMax,
    BlockIoBw,
}

impl Dimension {
    /// Canonical order used by the odometer enumeration.
    pub const ALL: [Dimension; 5] = [
        Dimension::CpuCores,
        Dimension::CpuTime,
        Dimension::MemMax,
        Dimension::MemSwapMax,
        Dimension::BlockIoBw,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Dimension::CpuCores => "cpu_cores",
            Dimension::CpuTime => "cpu_time",
            Dimension::MemMax => "mem_max",
            Dimension::MemSwapMax => "mem_swap_max",
            Dimension::BlockIoBw => "block_io_bw",
        }
    }

    pub fn parse(name: &str) -> Option<Dimension> {
        Dimension::ALL.iter().copied().find(|d| d.name() == name)
    }
}

impl fmt::Display for Dimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One point in the sweep: a full per-node assignment of limits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResourceConfiguration {
    /// Zero-based ordinal within the sweep.
    pub index: usize,
    /// Limits per VNF node id. Nodes without an entry run unlimited.
    pub assignments: BTreeMap<String, ResourceLimits>,
}

impl fmt::Display for ResourceConfiguration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:", self.index)?;
        for (node, limits) in &self.assignments {
            write!(f, " {}{{", node)?;
            let mut first = true;
            for dim in Dimension::ALL {
                if let Some(v) = limits.dimension_value(dim) {
                    if !first {
                        write!(f, ",")?;
                    }
                    match dim {
                        Dimension::CpuCores | Dimension::MemMax | Dimension::MemSwapMax => {
                            write!(f, "{}={}", dim, v as u64)?
                        }
                        _ => write!(f, "{}={}", dim, v)?,
                    }
                    first = false;
                }
            }
            write!(f, "}}")?;
        }
        Ok(())
    }
}

/// Ordered value lists for the sweepable dimensions of one node.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepDimensions {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cpu_cores: Option<Vec<u32>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cpu_time: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mem_max: Option<Vec<u64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mem_swap_max: Option<Vec<u64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub block_io_bw: Option<Vec<f64>>,
}

impl SweepDimensions {
    fn values(&self, dim: Dimension) -> Option<Vec<f64>> {
        match dim {
            Dimension::CpuCores => self
                .cpu_cores
                .as_ref()
                .map(|v| v.iter().map(|&x| x as f64).collect()),
            Dimension::CpuTime => self.cpu_time.clone(),
            Dimension::MemMax => self
                .mem_max
                .as_ref()
                .map(|v| v.iter().map(|&x| x as f64).collect()),
            Dimension::MemSwapMax => self
                .mem_swap_max
                .as_ref()
                .map(|v| v.iter().map(|&x| x as f64).collect()),
            Dimension::BlockIoBw => self.block_io_bw.clone(),
        }
    }
}

/// The set of resource configurations to profile, either as a cartesian
/// product of per-node dimension value lists or as an explicit list.
#[derive(Debug, Clone, PartialEq)]
pub enum ConfigurationSpace {
    Cartesian {
        dimensions: BTreeMap<String, SweepDimensions>,
    },
    Explicit {
        configurations: Vec<BTreeMap<String, ResourceLimits>>,
    },
}

// Hand-written serde impl: internally tagged enums do not honor
// deny_unknown_fields, and strict parsing is required here.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigurationSpaceRepr {
    mode: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    dimensions: Option<BTreeMap<String, SweepDimensions>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    configurations: Option<Vec<BTreeMap<String, ResourceLimits>>>,
}

impl Serialize for ConfigurationSpace {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let repr = match self {
            ConfigurationSpace::Cartesian { dimensions } => ConfigurationSpaceRepr {
                mode: "cartesian".to_string(),
                dimensions: Some(dimensions.clone()),
                configurations: None,
            },
            ConfigurationSpace::Explicit { configurations } => ConfigurationSpaceRepr {
                mode: "explicit".to_string(),
                dimensions: None,
                configurations: Some(configurations.clone()),
            },
        };
        repr.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for ConfigurationSpace {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        use serde::de::Error;
        let repr = ConfigurationSpaceRepr::deserialize(deserializer)?;
        match repr.mode.as_str() {
            "cartesian" => {
                if repr.configurations.is_some() {
                    return Err(D::Error::custom(
                        "cartesian mode does not take `configurations`",
                    ));
                }
                let dimensions = repr
                    .dimensions
                    .ok_or_else(|| D::Error::custom("cartesian mode requires `dimensions`"))?;
                Ok(ConfigurationSpace::Cartesian { dimensions })
            }
            "explicit" => {
                if repr.dimensions.is_some() {
                    return Err(D::Error::custom("explicit mode does not take `dimensions`"));
                }
                let configurations = repr
                    .configurations
                    .ok_or_else(|| D::Error::custom("explicit mode requires `configurations`"))?;
                Ok(ConfigurationSpace::Explicit { configurations })
            }
            other => Err(D::Error::custom(format!(
                "unknown sweep mode `{}`, expected `cartesian` or `explicit`",
                other
            ))),
        }
    }
}

/// The profiled service: VNF nodes, measurement probes, and links.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologyDescriptor {
    pub nodes: Vec<NodeSpec>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub probes: Vec<ProbeSpec>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub links: Vec<LinkSpec>,
}

impl TopologyDescriptor {
    pub fn node(&self, id: &str) -> Option<&NodeSpec> {
        self.nodes.iter().find(|n| n.id == id)
    }

    pub fn probe(&self, id: &str) -> Option<&ProbeSpec> {
        self.probes.iter().find(|p| p.id == id)
    }

    pub fn has_endpoint(&self, id: &str) -> bool {
        self.node(id).is_some() || self.probe(id).is_some()
    }

    pub fn node_ids(&self) -> impl Iterator<Item = &str> {
        self.nodes.iter().map(|n| n.id.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeKind {
    #[default]
    Vnf,
}

/// A virtualized network function under profiling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeSpec {
    pub id: String,
    /// Container image name, or the simulated-model key.
    pub image: String,
    #[serde(default)]
    pub kind: NodeKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProbeRole {
    Source,
    Sink,
    Measure,
}

impl fmt::Display for ProbeRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ProbeRole::Source => f.write_str("source"),
            ProbeRole::Sink => f.write_str("sink"),
            ProbeRole::Measure => f.write_str("measure"),
        }
    }
}

/// An auxiliary measurement container (traffic source, sink, or monitor).
/// Probes get isolated resources during a run and are never swept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeSpec {
    pub id: String,
    pub role: ProbeRole,
    pub image: String,
    /// Explicit host cores reserved for this probe.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub isolated_cores: Option<Vec<u32>>,
}

/// A directed link between two endpoints, with optional emulated delay
/// and bandwidth cap.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkSpec {
    pub from: String,
    pub to: String,
    #[serde(default)]
    pub delay_ms: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bw_mbps: Option<f64>,
}

/// Declares one metric to collect: where it is produced and how to read it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricSpec {
    pub name: String,
    /// Node or probe id whose result volume carries the metric.
    pub source: String,
    /// Path of the result document, relative to the node's result volume.
    pub file: String,
    /// Field name within the result document.
    pub key: String,
    pub unit: String,
    pub higher_is_better: bool,
}

/// One metric value from one node in one repetition of one configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementRecord {
    pub config_index: usize,
    pub repetition: usize,
    pub node: String,
    pub metric: String,
    pub value: f64,
    pub unit: String,
}

/// Mean, spread, and 95% confidence interval of a repeated measurement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AggregatedMetric {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
    pub ci95_low: f64,
    pub ci95_high: f64,
}

/// Aggregate cell of a profile table. Groups with fewer than two samples
/// carry no interval and are flagged as point estimates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum MetricStats {
    Ci(AggregatedMetric),
    Point { mean: f64, n: usize },
}

impl MetricStats {
    pub fn mean(&self) -> f64 {
        match self {
            MetricStats::Ci(a) => a.mean,
            MetricStats::Point { mean, .. } => *mean,
        }
    }

    pub fn n(&self) -> usize {
        match self {
            MetricStats::Ci(a) => a.n,
            MetricStats::Point { n, .. } => *n,
        }
    }

    pub fn ci_bounds(&self) -> Option<(f64, f64)> {
        match self {
            MetricStats::Ci(a) => Some((a.ci95_low, a.ci95_high)),
            MetricStats::Point { .. } => None,
        }
    }
}

/// Profile scope: one VNF, the whole service, or a topology variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProfileScope {
    Nsp,
    Vnfp,
    Tp,
}

impl fmt::Display for ProfileScope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ProfileScope::Nsp => f.write_str("nsp"),
            ProfileScope::Vnfp => f.write_str("vnfp"),
            ProfileScope::Tp => f.write_str("tp"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileRow {
    pub config_index: usize,
    pub metrics: BTreeMap<String, MetricStats>,
}

/// Aggregated statistics per configuration and metric, for one subject.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerformanceProfile {
    pub scope: ProfileScope,
    /// Node id (VNFP), service name (NSP), or variant name (TP).
    pub subject: String,
    /// Rows sorted by config_index.
    pub table: Vec<ProfileRow>,
    pub host: HostDescriptor,
}

impl PerformanceProfile {
    pub fn row(&self, config_index: usize) -> Option<&ProfileRow> {
        self.table.iter().find(|r| r.config_index == config_index)
    }

    /// Metric names appearing anywhere in the table, sorted.
    pub fn metric_names(&self) -> Vec<String> {
        let mut names: BTreeSet<String> = BTreeSet::new();
        for row in &self.table {
            names.extend(row.metrics.keys().cloned());
        }
        names.into_iter().collect()
    }
}

/// The machine a profiling run was performed on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HostDescriptor {
    pub cpu_model: String,
    pub physical_cores: u32,
    pub total_mem_mb: u64,
}

/// A single named validation failure or warning.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    /// Field or element the violation refers to.
    pub subject: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.subject, self.message)
    }
}

/// Outcome of a validation pass: hard errors plus non-fatal warnings.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub errors: Vec<Violation>,
    pub warnings: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.errors.is_empty()
    }

    pub fn error(&mut self, subject: impl Into<String>, message: impl Into<String>) {
        self.errors.push(Violation {
            subject: subject.into(),
            message: message.into(),
        });
    }

    pub fn warn(&mut self, subject: impl Into<String>, message: impl Into<String>) {
        self.warnings.push(Violation {
            subject: subject.into(),
            message: message.into(),
        });
    }

    pub fn merge(&mut self, other: ValidationReport) {
        self.errors.extend(other.errors);
        self.warnings.extend(other.warnings);
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("sweep references unknown node `{node}`")]
    UnknownNode { node: String },
    #[error("sweep must not assign limits to probe `{probe}`")]
    ProbeInSweep { probe: String },
    #[error("node `{node}` dimension `{dimension}` has an empty value list")]
    EmptyDimension { node: String, dimension: String },
    #[error("cartesian sweep declares no dimensions")]
    NoDimensions,
    #[error("explicit sweep has no configurations")]
    EmptyExplicitList,
    #[error("invalid sweep value for node `{node}` dimension `{dimension}`: {message}")]
    InvalidValue {
        node: String,
        dimension: String,
        message: String,
    },
}

/// Checks a single node's limits against the domain bounds. When
/// `enforce_core_cap` is set (real executors), `cpu_cores` must also fit
/// within the host's physical cores; the simulated backend deliberately
/// allows over-allocation to model hyper-threading plateaus.
pub fn validate_limits(
    limits: &ResourceLimits,
    host: &HostDescriptor,
    enforce_core_cap: bool,
) -> ValidationReport {
    let mut report = ValidationReport::default();
    if let Some(cores) = limits.cpu_cores {
        if cores < 1 {
            report.error("cpu_cores", "cpu_cores must be ≥ 1");
        } else if enforce_core_cap && cores > host.physical_cores {
            report.error(
                "cpu_cores",
                format!(
                    "cpu_cores must be ≤ {} physical cores on this host",
                    host.physical_cores
                ),
            );
        }
    }
    if let Some(t) = limits.cpu_time {
        if !t.is_finite() || t <= 0.0 || t > 1.0 {
            report.error("cpu_time", "cpu_time must be in (0,1]");
        }
    }
    if let Some(m) = limits.mem_max {
        if m == 0 {
            report.error("mem_max", "mem_max must be > 0");
        }
    }
    // mem_swap_max ≥ 0 holds by type; nothing to check beyond presence.
    if let Some(bw) = limits.block_io_bw {
        if !bw.is_finite() || bw <= 0.0 {
            report.error("block_io_bw", "block_io_bw must be > 0");
        }
    }
    report
}

fn valid_id(id: &str) -> bool {
    !id.is_empty()
        && id
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
}

/// Validates a topology: id uniqueness and shape, link referential
/// integrity, connectivity, and probe-role requirements. A topology
/// without probes is valid whitebox profiling and only draws a warning.
pub fn validate_topology(topo: &TopologyDescriptor) -> ValidationReport {
    let mut report = ValidationReport::default();

    if topo.nodes.is_empty() {
        report.error("nodes", "topology declares no VNF nodes");
    }

    let mut seen: BTreeSet<&str> = BTreeSet::new();
    for node in &topo.nodes {
        if !valid_id(&node.id) {
            report.error(
                format!("nodes/{}", node.id),
                "id must be non-empty and match [A-Za-z0-9_-]+",
            );
        }
        if !seen.insert(node.id.as_str()) {
            report.error(format!("nodes/{}", node.id), "duplicate id");
        }
    }
    for probe in &topo.probes {
        if !valid_id(&probe.id) {
            report.error(
                format!("probes/{}", probe.id),
                "id must be non-empty and match [A-Za-z0-9_-]+",
            );
        }
        if !seen.insert(probe.id.as_str()) {
            report.error(format!("probes/{}", probe.id), "duplicate id");
        }
        if let Some(cores) = &probe.isolated_cores {
            if cores.is_empty() {
                report.error(
                    format!("probes/{}", probe.id),
                    "isolated_cores must be non-empty when given",
                );
            }
        }
    }

    let mut link_pairs: BTreeSet<(&str, &str)> = BTreeSet::new();
    for (i, link) in topo.links.iter().enumerate() {
        let subject = format!("links/{}", i);
        if link.from == link.to {
            report.error(subject.clone(), format!("self-loop on `{}`", link.from));
        }
        for end in [&link.from, &link.to] {
            if !topo.has_endpoint(end) {
                report.error(
                    subject.clone(),
                    format!("endpoint `{}` is not declared", end),
                );
            }
        }
        if !link_pairs.insert((link.from.as_str(), link.to.as_str())) {
            report.error(
                subject.clone(),
                format!("duplicate link {} -> {}", link.from, link.to),
            );
        }
        if !link.delay_ms.is_finite() || link.delay_ms < 0.0 {
            report.error(subject.clone(), "delay_ms must be ≥ 0");
        }
        if let Some(bw) = link.bw_mbps {
            if !bw.is_finite() || bw <= 0.0 {
                report.error(subject, "bw_mbps must be > 0 when given");
            }
        }
    }

    // Connectivity over the undirected link graph, once ids are sane.
    if report.is_ok() {
        let endpoints: Vec<&str> = topo
            .nodes
            .iter()
            .map(|n| n.id.as_str())
            .chain(topo.probes.iter().map(|p| p.id.as_str()))
            .collect();
        if endpoints.len() >= 2 && !is_connected(&endpoints, &topo.links) {
            report.error("links", "topology graph is disconnected");
        }
    }

    let sources = topo
        .probes
        .iter()
        .filter(|p| p.role == ProbeRole::Source)
        .count();
    let sinks = topo
        .probes
        .iter()
        .filter(|p| p.role == ProbeRole::Sink)
        .count();
    if sources + sinks > 0 && (sources == 0 || sinks == 0) {
        report.error(
            "probes",
            "blackbox profiling needs at least one source and one sink probe",
        );
    }
    if topo.probes.is_empty() {
        report.warn(
            "probes",
            "no probes declared: whitebox profiling, VNFs must report their own metrics",
        );
    }

    report
}

fn is_connected(endpoints: &[&str], links: &[LinkSpec]) -> bool {
    let mut adjacency: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for id in endpoints {
        adjacency.entry(id).or_default();
    }
    for link in links {
        adjacency
            .entry(link.from.as_str())
            .or_default()
            .push(link.to.as_str());
        adjacency
            .entry(link.to.as_str())
            .or_default()
            .push(link.from.as_str());
    }
    let start = match endpoints.first() {
        Some(s) => *s,
        None => return true,
    };
    let mut visited: BTreeSet<&str> = BTreeSet::new();
    let mut queue = VecDeque::from([start]);
    visited.insert(start);
    while let Some(cur) = queue.pop_front() {
        if let Some(next) = adjacency.get(cur) {
            for n in next {
                if visited.insert(n) {
                    queue.push_back(n);
                }
            }
        }
    }
    endpoints.iter().all(|e| visited.contains(e))
}

fn check_axis_values(node: &str, dim: Dimension, values: &[f64]) -> Result<(), ModelError> {
    if values.is_empty() {
        return Err(ModelError::EmptyDimension {
            node: node.to_string(),
            dimension: dim.name().to_string(),
        });
    }
    for &v in values {
        let bad = match dim {
            Dimension::CpuCores => v < 1.0,
            Dimension::CpuTime => !v.is_finite() || v <= 0.0 || v > 1.0,
            Dimension::MemMax => v <= 0.0,
            Dimension::MemSwapMax => v < 0.0,
            Dimension::BlockIoBw => !v.is_finite() || v <= 0.0,
        };
        if bad {
            return Err(ModelError::InvalidValue {
                node: node.to_string(),
                dimension: dim.name().to_string(),
                message: format!("value {} is out of domain", v),
            });
        }
    }
    Ok(())
}

/// Expands a configuration space into the ordered configuration list.
///
/// Cartesian mode walks the full cross product in odometer order: nodes
/// sorted lexicographically, dimensions in the fixed order (cpu_cores,
/// cpu_time, mem_max, mem_swap_max, block_io_bw), last dimension varying
/// fastest. Explicit mode yields the list verbatim. Indices are assigned
/// 0..N-1, so bundles stay comparable across runs.
pub fn enumerate_configurations(
    space: &ConfigurationSpace,
    topo: &TopologyDescriptor,
) -> Result<Vec<ResourceConfiguration>, ModelError> {
    let check_node = |node: &str| -> Result<(), ModelError> {
        if topo.probe(node).is_some() {
            return Err(ModelError::ProbeInSweep {
                probe: node.to_string(),
            });
        }
        if topo.node(node).is_none() {
            return Err(ModelError::UnknownNode {
                node: node.to_string(),
            });
        }
        Ok(())
    };

    match space {
        ConfigurationSpace::Explicit { configurations } => {
            if configurations.is_empty() {
                return Err(ModelError::EmptyExplicitList);
            }
            let mut out = Vec::with_capacity(configurations.len());
            for (index, assignments) in configurations.iter().enumerate() {
                for (node, limits) in assignments {
                    check_node(node)?;
                    for dim in Dimension::ALL {
                        if let Some(v) = limits.dimension_value(dim) {
                            check_axis_values(node, dim, &[v])?;
                        }
                    }
                }
                out.push(ResourceConfiguration {
                    index,
                    assignments: assignments.clone(),
                });
            }
            Ok(out)
        }
        ConfigurationSpace::Cartesian { dimensions } => {
            // Flatten to (node, dim, values) axes in canonical order.
            let mut axes: Vec<(&str, Dimension, Vec<f64>)> = Vec::new();
            for (node, dims) in dimensions {
                check_node(node)?;
                for dim in Dimension::ALL {
                    if let Some(values) = dims.values(dim) {
                        check_axis_values(node, dim, &values)?;
                        axes.push((node, dim, values));
                    }
                }
            }
            if axes.is_empty() {
                return Err(ModelError::NoDimensions);
            }
            let total: usize = axes.iter().map(|(_, _, v)| v.len()).product();
            let mut out = Vec::with_capacity(total);
            let mut counters = vec![0usize; axes.len()];
            for index in 0..total {
                let mut assignments: BTreeMap<String, ResourceLimits> = BTreeMap::new();
                for ((node, dim, values), &pos) in axes.iter().zip(&counters) {
                    assignments
                        .entry((*node).to_string())
                        .or_default()
                        .set_dimension(*dim, values[pos]);
                }
                out.push(ResourceConfiguration { index, assignments });
                // Odometer step: last axis varies fastest.
                for axis in (0..axes.len()).rev() {
                    counters[axis] += 1;
                    if counters[axis] < axes[axis].2.len() {
                        break;
                    }
                    counters[axis] = 0;
                }
            }
            Ok(out)
        }
    }
}
