//! Container-engine backend.
//!
//! Talks to an engine exposing the prevailing container remote API over
//! HTTP (create/start/stop/remove) and maps the limit fields onto kernel
//! resource controls: CPU bandwidth quota against a fixed 100 ms period,
//! explicit core-set pinning, memory and swap limits, and identical
//! read/write block-I/O throttles. Each node gets a writable shared
//! volume mounted at `/profiling/out`; result documents are read from
//! the host side of that volume after the measurement window.
//!
//! Runs are strictly serial so probes and VNFs never share cores with a
//! concurrent run.

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;
use std::time::Duration;

use serde_json::{json, Value};

use crate::model::{
    validate_limits, HostDescriptor, ProbeSpec, ResourceConfiguration, ResourceLimits,
    TopologyDescriptor,
};

use super::{Backend, BackendError, Deployment, NodeOutcome, NodeResult, RunRequest, RunResult};

/// CFS bandwidth period; the quota is `cpu_time * period`.
pub const CPU_QUOTA_PERIOD_US: u64 = 100_000;
/// Device the block-I/O throttles are applied to.
pub const PRIMARY_BLOCK_DEVICE: &str = "/dev/sda";
/// In-container mount point of the shared result volume.
pub const RESULT_MOUNT: &str = "/profiling/out";

const DEFAULT_DURATION_S: f64 = 10.0;
const STOP_TIMEOUT_S: u64 = 5;

/// Deterministic core-set assignment for one run.
///
/// Probe reservations come first: explicit `isolated_cores` are honored
/// verbatim, probes without one get the lowest free core. VNFs then take
/// the lowest-numbered free cores in node-id order. Any overlap or
/// exhaustion is a limit-application error.
pub fn assign_cores(
    host_cores: u32,
    probes: &[ProbeSpec],
    vnf_demands: &[(String, u32)],
) -> Result<BTreeMap<String, Vec<u32>>, BackendError> {
    let mut taken: BTreeSet<u32> = BTreeSet::new();
    let mut assignment: BTreeMap<String, Vec<u32>> = BTreeMap::new();

    let mut explicit: Vec<&ProbeSpec> = probes
        .iter()
        .filter(|p| p.isolated_cores.is_some())
        .collect();
    explicit.sort_by(|a, b| a.id.cmp(&b.id));
    for probe in explicit {
        let cores = probe.isolated_cores.as_ref().expect("filtered on presence");
        for &core in cores {
            if core >= host_cores {
                return Err(BackendError::LimitApplication {
                    subject: probe.id.clone(),
                    reason: format!("isolated core {} beyond host cores 0..{}", core, host_cores),
                });
            }
            if !taken.insert(core) {
                return Err(BackendError::LimitApplication {
                    subject: probe.id.clone(),
                    reason: format!("isolated core {} already reserved", core),
                });
            }
        }
        assignment.insert(probe.id.clone(), cores.clone());
    }

    let mut take_lowest = |count: u32, subject: &str| -> Result<Vec<u32>, BackendError> {
        let mut picked = Vec::with_capacity(count as usize);
        for core in 0..host_cores {
            if picked.len() == count as usize {
                break;
            }
            if !taken.contains(&core) {
                taken.insert(core);
                picked.push(core);
            }
        }
        if picked.len() < count as usize {
            return Err(BackendError::LimitApplication {
                subject: subject.to_string(),
                reason: format!(
                    "needs {} cores but only {} remain after probe isolation",
                    count,
                    picked.len()
                ),
            });
        }
        Ok(picked)
    };

    let mut implicit: Vec<&ProbeSpec> = probes
        .iter()
        .filter(|p| p.isolated_cores.is_none())
        .collect();
    implicit.sort_by(|a, b| a.id.cmp(&b.id));
    for probe in implicit {
        let cores = take_lowest(1, &probe.id)?;
        assignment.insert(probe.id.clone(), cores);
    }

    let mut vnfs: Vec<&(String, u32)> = vnf_demands.iter().collect();
    vnfs.sort_by(|a, b| a.0.cmp(&b.0));
    for (node, count) in vnfs {
        let cores = take_lowest(*count, node)?;
        assignment.insert(node.clone(), cores);
    }
    Ok(assignment)
}

/// Container-create request body for one node, with the limit fields
/// mapped onto the engine's kernel resource controls.
pub fn create_body(
    image: &str,
    limits: Option<&ResourceLimits>,
    cores: Option<&[u32]>,
    volume_bind: Option<&str>,
) -> Result<Value, BackendError> {
    let mut host_config = serde_json::Map::new();
    if let Some(bind) = volume_bind {
        host_config.insert(
            "Binds".to_string(),
            json!([format!("{}:{}", bind, RESULT_MOUNT)]),
        );
    }
    if let Some(cores) = cores {
        let set = cores
            .iter()
            .map(u32::to_string)
            .collect::<Vec<_>>()
            .join(",");
        host_config.insert("CpusetCpus".to_string(), json!(set));
    }
    if let Some(limits) = limits {
        if let Some(cpu_time) = limits.cpu_time {
            host_config.insert("CpuPeriod".to_string(), json!(CPU_QUOTA_PERIOD_US));
            host_config.insert(
                "CpuQuota".to_string(),
                json!((cpu_time * CPU_QUOTA_PERIOD_US as f64).round() as u64),
            );
        }
        if let Some(mem) = limits.mem_max {
            host_config.insert("Memory".to_string(), json!(mem * 1024 * 1024));
            if let Some(swap) = limits.mem_swap_max {
                // The engine expects memory+swap as a single total.
                host_config.insert("MemorySwap".to_string(), json!((mem + swap) * 1024 * 1024));
            }
        } else if limits.mem_swap_max.is_some() {
            return Err(BackendError::LimitApplication {
                subject: image.to_string(),
                reason: "mem_swap_max requires mem_max on the container backend".to_string(),
            });
        }
        if let Some(bw) = limits.block_io_bw {
            let rate = (bw * 1024.0 * 1024.0).round() as u64;
            let throttle = json!([{ "Path": PRIMARY_BLOCK_DEVICE, "Rate": rate }]);
            host_config.insert("BlkioDeviceReadBps".to_string(), throttle.clone());
            host_config.insert("BlkioDeviceWriteBps".to_string(), throttle);
        }
    }
    Ok(json!({
        "Image": image,
        "HostConfig": Value::Object(host_config),
    }))
}

/// Client for a container engine's remote API.
pub struct ContainerBackend {
    agent: ureq::Agent,
    endpoint: String,
    volume_root: PathBuf,
    host: HostDescriptor,
}

impl ContainerBackend {
    /// Connects to the engine and reads its host facts. Fails fast when
    /// the endpoint is unreachable, before any node is touched.
    pub fn connect(endpoint: &str, volume_root: Option<PathBuf>) -> Result<Self, BackendError> {
        let endpoint = endpoint.trim_end_matches('/').to_string();
        let config = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(30)))
            .build();
        let agent: ureq::Agent = config.into();

        let info: Value = Self::get_json(&agent, &format!("{}/info", endpoint)).map_err(|e| {
            BackendError::Deploy {
                node: "engine".to_string(),
                reason: format!("container engine unreachable at {}: {}", endpoint, e),
            }
        })?;
        let physical_cores = info.get("NCPU").and_then(Value::as_u64).unwrap_or(1).max(1) as u32;
        let total_mem_mb =
            info.get("MemTotal").and_then(Value::as_u64).unwrap_or(0) / (1024 * 1024);
        let cpu_model = info
            .get("Architecture")
            .and_then(Value::as_str)
            .unwrap_or("container-host")
            .to_string();
        Ok(ContainerBackend {
            agent,
            endpoint,
            volume_root: volume_root.unwrap_or_else(|| PathBuf::from("/tmp/chainprof-volumes")),
            host: HostDescriptor {
                cpu_model,
                physical_cores,
                total_mem_mb,
            },
        })
    }

    fn get_json(agent: &ureq::Agent, url: &str) -> Result<Value, String> {
        let mut response = agent.get(url).call().map_err(|e| e.to_string())?;
        response
            .body_mut()
            .read_json::<Value>()
            .map_err(|e| e.to_string())
    }

    fn post_json(&self, path: &str, body: &Value) -> Result<Value, String> {
        let mut response = self
            .agent
            .post(format!("{}{}", self.endpoint, path))
            .send_json(body)
            .map_err(|e| e.to_string())?;
        Ok(response
            .body_mut()
            .read_json::<Value>()
            .unwrap_or(Value::Null))
    }

    fn post_empty(&self, path: &str) -> Result<(), String> {
        self.agent
            .post(format!("{}{}", self.endpoint, path))
            .send_empty()
            .map(|_| ())
            .map_err(|e| e.to_string())
    }

    fn delete(&self, path: &str) -> Result<(), String> {
        self.agent
            .delete(format!("{}{}", self.endpoint, path))
            .call()
            .map(|_| ())
            .map_err(|e| e.to_string())
    }

    fn remove_container(&self, id: &str) -> Result<(), String> {
        self.delete(&format!("/containers/{}?force=true&v=true", id))
    }

    fn node_volume(&self, label: &str, node: &str) -> PathBuf {
        self.volume_root.join(label).join(node)
    }
}

impl Backend for ContainerBackend {
    fn host(&self) -> HostDescriptor {
        self.host.clone()
    }

    fn concurrency_safe(&self) -> bool {
        // One run at a time: concurrent runs would contend for cores and
        // interfere with the profiled VNFs.
        false
    }

    fn deploy(
        &self,
        topo: &TopologyDescriptor,
        config: &ResourceConfiguration,
    ) -> Result<Deployment, BackendError> {
        for (node, limits) in &config.assignments {
            let report = validate_limits(limits, &self.host, true);
            if !report.is_ok() {
                return Err(BackendError::LimitApplication {
                    subject: node.clone(),
                    reason: report.errors[0].to_string(),
                });
            }
        }
        let demands: Vec<(String, u32)> = config
            .assignments
            .iter()
            .filter_map(|(node, limits)| limits.cpu_cores.map(|c| (node.clone(), c)))
            .collect();
        let cores = assign_cores(self.host.physical_cores, &topo.probes, &demands)?;

        let label = format!("chainprof-{}", crate::rng::mix64(config.index as u64));
        let mut deployment = Deployment {
            label: label.clone(),
            handles: Vec::new(),
        };

        // Probes first: their isolation must hold before VNFs start.
        let creations: Vec<(String, String)> = topo
            .probes
            .iter()
            .map(|p| (p.id.clone(), p.image.clone()))
            .chain(topo.nodes.iter().map(|n| (n.id.clone(), n.image.clone())))
            .collect();
        for (id, image) in creations {
            let volume = self.node_volume(&label, &id);
            if let Err(e) = std::fs::create_dir_all(&volume) {
                self.abandon(&deployment);
                return Err(BackendError::Deploy {
                    node: id,
                    reason: format!("cannot create result volume: {}", e),
                });
            }
            let body = match create_body(
                &image,
                config.assignments.get(&id),
                cores.get(&id).map(Vec::as_slice),
                volume.to_str(),
            ) {
                Ok(b) => b,
                Err(e) => {
                    self.abandon(&deployment);
                    return Err(e);
                }
            };
            let name = format!("{}-{}", label, id);
            let created = self.post_json(&format!("/containers/create?name={}", name), &body);
            let container_id = match created {
                Ok(v) => v
                    .get("Id")
                    .and_then(Value::as_str)
                    .unwrap_or(&name)
                    .to_string(),
                Err(e) => {
                    self.abandon(&deployment);
                    return Err(BackendError::Deploy {
                        node: id,
                        reason: e,
                    });
                }
            };
            deployment.handles.push(container_id.clone());
            if let Err(e) = self.post_empty(&format!("/containers/{}/start", container_id)) {
                self.abandon(&deployment);
                return Err(BackendError::Deploy {
                    node: id,
                    reason: e,
                });
            }
        }
        Ok(deployment)
    }

    fn collect(
        &self,
        deployment: &Deployment,
        topo: &TopologyDescriptor,
        _config: &ResourceConfiguration,
        request: &RunRequest<'_>,
    ) -> Result<RunResult, BackendError> {
        let warmup = Duration::from_secs_f64(request.warmup_s.max(0.0));
        if !warmup.is_zero() {
            std::thread::sleep(warmup);
        }
        let duration = Duration::from_secs_f64(request.duration_s.unwrap_or(DEFAULT_DURATION_S));
        if !duration.is_zero() {
            std::thread::sleep(duration);
        }
        for handle in &deployment.handles {
            // 304 (already stopped) is fine; measurement containers may
            // run to completion on their own.
            let _ = self.post_empty(&format!("/containers/{}/stop?t={}", handle, STOP_TIMEOUT_S));
        }

        let mut result = RunResult::default();
        let mut wanted: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
        for metric in request.metrics {
            wanted
                .entry(metric.source.as_str())
                .or_default()
                .insert(metric.file.as_str());
        }
        let all_ids = topo
            .nodes
            .iter()
            .map(|n| n.id.as_str())
            .chain(topo.probes.iter().map(|p| p.id.as_str()));
        for id in all_ids {
            let files = match wanted.get(id) {
                Some(files) => files,
                None => {
                    result.nodes.insert(
                        id.to_string(),
                        NodeOutcome::Collected(NodeResult::default()),
                    );
                    continue;
                }
            };
            let mut node_result = NodeResult::default();
            let mut failure: Option<String> = None;
            for file in files {
                let path = self.node_volume(&deployment.label, id).join(file);
                match std::fs::read_to_string(&path) {
                    Ok(text) => match serde_json::from_str::<BTreeMap<String, f64>>(&text) {
                        Ok(doc) => {
                            node_result.docs.insert((*file).to_string(), doc);
                        }
                        Err(e) => {
                            failure = Some(format!("malformed result file {}: {}", file, e));
                            break;
                        }
                    },
                    Err(_) => {
                        failure = Some(format!("missing result file {}", file));
                        break;
                    }
                }
            }
            let outcome = match failure {
                Some(reason) => NodeOutcome::Failed { reason },
                None => NodeOutcome::Collected(node_result),
            };
            result.nodes.insert(id.to_string(), outcome);
        }
        Ok(result)
    }

    fn teardown(&self, deployment: Deployment) -> Result<(), BackendError> {
        let mut first_error: Option<BackendError> = None;
        for handle in &deployment.handles {
            if let Err(reason) = self.remove_container(handle) {
                first_error.get_or_insert(BackendError::Teardown {
                    handle: handle.clone(),
                    reason,
                });
            }
        }
        match first_error {
            Some(e) => Err(e),
            None => Ok(()),
        }
    }
}

impl ContainerBackend {
    /// Best-effort cleanup of a partially deployed run.
    fn abandon(&self, deployment: &Deployment) {
        for handle in &deployment.handles {
            let _ = self.remove_container(handle);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ProbeRole;

    fn probe(id: &str, cores: Option<Vec<u32>>) -> ProbeSpec {
        ProbeSpec {
            id: id.to_string(),
            role: ProbeRole::Source,
            image: "probe".to_string(),
            isolated_cores: cores,
        }
    }

    #[test]
    fn vnfs_take_lowest_free_cores_after_probe_isolation() {
        let probes = vec![probe("s", Some(vec![0])), probe("t", Some(vec![1]))];
        let demands = vec![("fw".to_string(), 2)];
        let cores = assign_cores(8, &probes, &demands).unwrap();
        assert_eq!(cores["s"], vec![0]);
        assert_eq!(cores["t"], vec![1]);
        assert_eq!(cores["fw"], vec![2, 3]);
    }

    #[test]
    fn probe_without_explicit_cores_gets_one_dedicated() {
        let probes = vec![probe("mon", None)];
        let cores = assign_cores(4, &probes, &[("a".to_string(), 1)]).unwrap();
        assert_eq!(cores["mon"], vec![0]);
        assert_eq!(cores["a"], vec![1]);
    }

    #[test]
    fn overlapping_probe_reservations_rejected() {
        let probes = vec![probe("s", Some(vec![0])), probe("t", Some(vec![0]))];
        let err = assign_cores(4, &probes, &[]).unwrap_err();
        match err {
            BackendError::LimitApplication { subject, reason } => {
                assert_eq!(subject, "t");
                assert!(reason.contains("already reserved"));
            }
            other => panic!("unexpected {:?}", other),
        }
    }

    #[test]
    fn vnf_demand_beyond_free_cores_rejected() {
        // Probes isolate 2 of 4 cores; the VNF wants 3 more.
        let probes = vec![probe("s", Some(vec![0])), probe("t", Some(vec![1]))];
        let err = assign_cores(4, &probes, &[("fw".to_string(), 3)]).unwrap_err();
        assert!(matches!(err, BackendError::LimitApplication { .. }));
    }

    #[test]
    fn isolated_core_out_of_range_rejected() {
        let probes = vec![probe("s", Some(vec![9]))];
        let err = assign_cores(4, &probes, &[]).unwrap_err();
        assert!(matches!(err, BackendError::LimitApplication { .. }));
    }

    #[test]
    fn create_body_maps_limits_to_kernel_controls() {
        let limits = ResourceLimits {
            cpu_cores: Some(2),
            cpu_time: Some(0.25),
            mem_max: Some(512),
            mem_swap_max: Some(256),
            block_io_bw: Some(10.0),
        };
        let body = create_body("img", Some(&limits), Some(&[2, 3]), Some("/v/x")).unwrap();
        let hc = &body["HostConfig"];
        assert_eq!(hc["CpuPeriod"], 100_000);
        assert_eq!(hc["CpuQuota"], 25_000);
        assert_eq!(hc["CpusetCpus"], "2,3");
        assert_eq!(hc["Memory"], 512 * 1024 * 1024);
        assert_eq!(hc["MemorySwap"], (512 + 256) * 1024 * 1024);
        assert_eq!(hc["BlkioDeviceReadBps"][0]["Rate"], 10 * 1024 * 1024);
        assert_eq!(hc["BlkioDeviceWriteBps"][0]["Path"], PRIMARY_BLOCK_DEVICE);
        assert_eq!(hc["Binds"][0], "/v/x:/profiling/out");
    }

    #[test]
    fn swap_without_memory_limit_rejected() {
        let limits = ResourceLimits {
            mem_swap_max: Some(256),
            ..Default::default()
        };
        let err = create_body("img", Some(&limits), None, None).unwrap_err();
        assert!(matches!(err, BackendError::LimitApplication { .. }));
    }

    #[test]
    fn unreachable_endpoint_fails_before_any_node() {
        // Nothing listens on this port; connect must fail fast.
        let err = match ContainerBackend::connect("http://127.0.0.1:9", None) {
            Ok(_) => panic!("expected connection failure"),
            Err(e) => e,
        };
        match err {
            BackendError::Deploy { node, reason } => {
                assert_eq!(node, "engine");
                assert!(reason.contains("unreachable"), "{}", reason);
            }
            other => panic!("unexpected {:?}", other),
        }
    }
}
