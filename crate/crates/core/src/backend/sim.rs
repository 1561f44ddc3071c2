//! Deterministic simulated backend.
//!
//! Every VNF node is driven by a `SimVNFModel`; runs synthesize result
//! documents instead of executing containers. Node values depend only on
//! (seed, config_index, repetition, node), so campaigns are bit-identical
//! across schedules and hosts.
//!
//! Result-document contract: each VNF node writes `metrics.json` with the
//! single key `rate`; each probe writes `metrics.json` with `throughput`
//! (min-rule over the source→sink path) and `latency_ms` (sum of path
//! link delays). Metric specs for simulated runs address these keys.

use std::collections::BTreeMap;

use crate::model::{
    validate_limits, HostDescriptor, ProbeRole, ResourceConfiguration, ResourceLimits,
    TopologyDescriptor,
};
use crate::rng::SplitMix64;

use super::{
    Backend, BackendError, Deployment, NodeOutcome, NodeResult, RunRequest, RunResult, SimVNFModel,
};

/// File every simulated node writes its result document to.
pub const SIM_RESULT_FILE: &str = "metrics.json";
/// Primary-metric key of simulated VNF nodes.
pub const SIM_RATE_KEY: &str = "rate";

/// End-to-end metrics of one chain run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChainMetrics {
    pub throughput: f64,
    pub latency_ms: f64,
}

/// Evaluates the synthetic model for one node under the given limits.
///
/// With `q` the CPU-time fraction (default 1) and `n` the core count
/// (default 1): CPU-unbound nodes always emit `base_rate`; CPU-bound
/// nodes emit `base_rate * q * S` with the speedup
/// `S = 1 / ((1 - p) + p / min(n, max_threads))`. Allocating memory
/// below the model's floor zeroes the output instead of erroring, so a
/// sweep completes and the profile shows the cliff. Relative Gaussian
/// noise is applied last and the result clamped at zero.
pub fn sim_evaluate(model: &SimVNFModel, limits: &ResourceLimits, noise_draw: f64) -> f64 {
    let cores = limits.cpu_cores.unwrap_or(1);
    let cpu_time = limits.cpu_time.unwrap_or(1.0);
    let mut raw = if !model.cpu_bound {
        model.base_rate
    } else {
        let threads = cores.min(model.max_threads).max(1) as f64;
        let p = model.parallel_fraction;
        let speedup = 1.0 / ((1.0 - p) + p / threads);
        model.base_rate * cpu_time * speedup
    };
    if let Some(mem) = limits.mem_max {
        if mem < model.mem_floor_mb {
            raw = 0.0;
        }
    }
    (raw * (1.0 + model.noise_std * noise_draw)).max(0.0)
}

/// Composes per-node capacities into end-to-end chain metrics: the
/// throughput is the minimum over path-node capacities and path-link
/// bandwidth caps; the latency is the sum of path-link delays.
pub fn sim_chain_metric(
    topo: &TopologyDescriptor,
    capacities: &BTreeMap<String, f64>,
) -> Result<ChainMetrics, BackendError> {
    let path = source_sink_path(topo).ok_or(BackendError::NoPath)?;
    let mut throughput = f64::INFINITY;
    let mut latency_ms = 0.0;
    for pair in path.windows(2) {
        let link = topo
            .links
            .iter()
            .find(|l| l.from == pair[0] && l.to == pair[1])
            .expect("path follows declared links");
        latency_ms += link.delay_ms;
        if let Some(bw) = link.bw_mbps {
            throughput = throughput.min(bw);
        }
    }
    for id in &path {
        if topo.node(id).is_some() {
            if let Some(cap) = capacities.get(id) {
                throughput = throughput.min(*cap);
            }
        }
    }
    if !throughput.is_finite() {
        return Err(BackendError::Engine(
            "chain path has no capacity constraint".to_string(),
        ));
    }
    Ok(ChainMetrics {
        throughput,
        latency_ms,
    })
}

/// Depth-first search for a directed path from a source probe to a sink
/// probe, with sorted adjacency for determinism.
fn source_sink_path(topo: &TopologyDescriptor) -> Option<Vec<String>> {
    let mut sources: Vec<&str> = topo
        .probes
        .iter()
        .filter(|p| p.role == ProbeRole::Source)
        .map(|p| p.id.as_str())
        .collect();
    sources.sort_unstable();
    let mut adjacency: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for link in &topo.links {
        adjacency
            .entry(link.from.as_str())
            .or_default()
            .push(link.to.as_str());
    }
    for targets in adjacency.values_mut() {
        targets.sort_unstable();
    }
    let is_sink = |id: &str| {
        topo.probe(id)
            .map(|p| p.role == ProbeRole::Sink)
            .unwrap_or(false)
    };

    for source in sources {
        let mut stack = vec![vec![source]];
        while let Some(path) = stack.pop() {
            let cur = *path.last().expect("path is non-empty");
            if is_sink(cur) {
                return Some(path.into_iter().map(str::to_string).collect());
            }
            if let Some(next) = adjacency.get(cur) {
                // Reverse keeps exploration order lexicographic on a stack.
                for n in next.iter().rev() {
                    if !path.contains(n) {
                        let mut extended = path.clone();
                        extended.push(n);
                        stack.push(extended);
                    }
                }
            }
        }
    }
    None
}

/// Backend that synthesizes measurements from per-node models.
pub struct SimulatedBackend {
    models: BTreeMap<String, SimVNFModel>,
    host: HostDescriptor,
}

impl SimulatedBackend {
    pub fn new(models: BTreeMap<String, SimVNFModel>) -> Self {
        SimulatedBackend {
            models,
            host: HostDescriptor {
                cpu_model: "simulated".to_string(),
                physical_cores: 8,
                total_mem_mb: 16384,
            },
        }
    }

    pub fn with_host(models: BTreeMap<String, SimVNFModel>, host: HostDescriptor) -> Self {
        SimulatedBackend { models, host }
    }
}

impl Backend for SimulatedBackend {
    fn host(&self) -> HostDescriptor {
        self.host.clone()
    }

    fn concurrency_safe(&self) -> bool {
        // Each run's noise stream is derived solely from
        // (seed, config_index, repetition, node).
        true
    }

    fn deploy(
        &self,
        topo: &TopologyDescriptor,
        config: &ResourceConfiguration,
    ) -> Result<Deployment, BackendError> {
        for node in &topo.nodes {
            if !self.models.contains_key(&node.id) {
                return Err(BackendError::Deploy {
                    node: node.id.clone(),
                    reason: "no simulated model configured".to_string(),
                });
            }
        }
        for (node, limits) in &config.assignments {
            let report = validate_limits(limits, &self.host, false);
            if !report.is_ok() {
                return Err(BackendError::LimitApplication {
                    subject: node.clone(),
                    reason: report.errors[0].to_string(),
                });
            }
        }
        Ok(Deployment {
            label: format!("sim-{}", config.index),
            handles: Vec::new(),
        })
    }

    fn collect(
        &self,
        _deployment: &Deployment,
        topo: &TopologyDescriptor,
        config: &ResourceConfiguration,
        request: &RunRequest<'_>,
    ) -> Result<RunResult, BackendError> {
        let mut capacities: BTreeMap<String, f64> = BTreeMap::new();
        let mut result = RunResult::default();
        for node in &topo.nodes {
            let model = self
                .models
                .get(&node.id)
                .expect("deploy checked model presence");
            let limits = config
                .assignments
                .get(&node.id)
                .copied()
                .unwrap_or_default();
            let mut stream = SplitMix64::for_node(request.seed, &node.id);
            let value = sim_evaluate(model, &limits, stream.next_standard_normal());
            capacities.insert(node.id.clone(), value);
            let mut docs = BTreeMap::new();
            docs.insert(
                SIM_RESULT_FILE.to_string(),
                BTreeMap::from([(SIM_RATE_KEY.to_string(), value)]),
            );
            result.nodes.insert(
                node.id.clone(),
                NodeOutcome::Collected(NodeResult {
                    docs,
                    log: format!("simulated node {} rate {}", node.id, value),
                }),
            );
        }

        if !topo.probes.is_empty() {
            let chain = sim_chain_metric(topo, &capacities)?;
            for probe in &topo.probes {
                let mut docs = BTreeMap::new();
                docs.insert(
                    SIM_RESULT_FILE.to_string(),
                    BTreeMap::from([
                        ("throughput".to_string(), chain.throughput),
                        ("latency_ms".to_string(), chain.latency_ms),
                    ]),
                );
                result.nodes.insert(
                    probe.id.clone(),
                    NodeOutcome::Collected(NodeResult {
                        docs,
                        log: format!("simulated probe {} ({})", probe.id, probe.role),
                    }),
                );
            }
        }
        Ok(result)
    }

    fn teardown(&self, _deployment: Deployment) -> Result<(), BackendError> {
        Ok(())
    }
}
