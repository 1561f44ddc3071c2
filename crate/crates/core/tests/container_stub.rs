//! Contract test for the container backend against a stub engine that
//! speaks just enough of the remote API: /info, create, start, stop,
//! and remove. Result documents are placed on the shared volumes by the
//! test, standing in for the measurement containers.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};

use chainprof::backend::{Backend, BackendError, ContainerBackend, NodeOutcome, RunRequest};
use chainprof::model::{
    LinkSpec, MetricSpec, NodeKind, NodeSpec, ProbeRole, ProbeSpec, ResourceConfiguration,
    ResourceLimits, TopologyDescriptor,
};

/// Captured request: method and path (bodies logged for create calls).
#[derive(Debug, Clone)]
struct Captured {
    method: String,
    path: String,
    body: String,
}

fn start_stub() -> (String, Arc<Mutex<Vec<Captured>>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let endpoint = format!("http://{}", listener.local_addr().unwrap());
    let log: Arc<Mutex<Vec<Captured>>> = Arc::new(Mutex::new(Vec::new()));
    let log_clone = Arc::clone(&log);
    std::thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(stream) = stream else { break };
            let log = Arc::clone(&log_clone);
            std::thread::spawn(move || handle(stream, log));
        }
    });
    (endpoint, log)
}

fn handle(stream: std::net::TcpStream, log: Arc<Mutex<Vec<Captured>>>) {
    let mut reader = BufReader::new(stream);
    loop {
        let mut request_line = String::new();
        if reader.read_line(&mut request_line).unwrap_or(0) == 0 {
            return;
        }
        let mut parts = request_line.split_whitespace();
        let method = parts.next().unwrap_or("").to_string();
        let path = parts.next().unwrap_or("").to_string();
        let mut content_length = 0usize;
        loop {
            let mut line = String::new();
            if reader.read_line(&mut line).unwrap_or(0) == 0 {
                return;
            }
            let line = line.trim_end();
            if line.is_empty() {
                break;
            }
            if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                content_length = v.trim().parse().unwrap_or(0);
            }
        }
        let mut body = vec![0u8; content_length];
        if content_length > 0 {
            reader.read_exact(&mut body).unwrap();
        }
        let body = String::from_utf8_lossy(&body).to_string();

        let response_body = if path == "/info" {
            r#"{"NCPU": 8, "MemTotal": 17179869184, "Architecture": "x86_64"}"#.to_string()
        } else if path.starts_with("/containers/create") {
            let name = path.split("name=").nth(1).unwrap_or("unnamed").to_string();
            format!(r#"{{"Id": "cid-{}", "Warnings": []}}"#, name)
        } else {
            String::new()
        };
        log.lock().unwrap().push(Captured {
            method: method.clone(),
            path: path.clone(),
            body,
        });
        let status = if path.starts_with("/containers/create") {
            "201 Created"
        } else if response_body.is_empty() {
            "204 No Content"
        } else {
            "200 OK"
        };
        let mut out = format!(
            "HTTP/1.1 {}\r\nContent-Type: application/json\r\nContent-Length: {}\r\n\r\n",
            status,
            response_body.len()
        );
        out.push_str(&response_body);
        if reader.get_mut().write_all(out.as_bytes()).is_err() {
            return;
        }
    }
}

fn blackbox_topology() -> TopologyDescriptor {
    TopologyDescriptor {
        nodes: vec![NodeSpec {
            id: "FW".to_string(),
            image: "images/firewall".to_string(),
            kind: NodeKind::Vnf,
        }],
        probes: vec![
            ProbeSpec {
                id: "s".to_string(),
                role: ProbeRole::Source,
                image: "images/gen".to_string(),
                isolated_cores: Some(vec![0]),
            },
            ProbeSpec {
                id: "t".to_string(),
                role: ProbeRole::Sink,
                image: "images/sink".to_string(),
                isolated_cores: Some(vec![1]),
            },
        ],
        links: vec![
            LinkSpec {
                from: "s".to_string(),
                to: "FW".to_string(),
                delay_ms: 0.0,
                bw_mbps: None,
            },
            LinkSpec {
                from: "FW".to_string(),
                to: "t".to_string(),
                delay_ms: 0.0,
                bw_mbps: None,
            },
        ],
    }
}

fn fw_config() -> ResourceConfiguration {
    ResourceConfiguration {
        index: 0,
        assignments: BTreeMap::from([(
            "FW".to_string(),
            ResourceLimits {
                cpu_cores: Some(2),
                cpu_time: Some(0.25),
                mem_max: Some(512),
                mem_swap_max: Some(256),
                block_io_bw: Some(10.0),
            },
        )]),
    }
}

fn throughput_metric() -> MetricSpec {
    MetricSpec {
        name: "throughput".to_string(),
        source: "t".to_string(),
        file: "metrics.json".to_string(),
        key: "throughput".to_string(),
        unit: "mbps".to_string(),
        higher_is_better: true,
    }
}

#[test]
fn full_lifecycle_against_stub_engine() {
    let (endpoint, log) = start_stub();
    let volumes = tempfile::tempdir().unwrap();
    let backend = ContainerBackend::connect(&endpoint, Some(volumes.path().to_path_buf())).unwrap();
    assert_eq!(backend.host().physical_cores, 8);
    assert_eq!(backend.host().total_mem_mb, 16384);
    assert!(!backend.concurrency_safe(), "container runs are serial");

    let topo = blackbox_topology();
    let config = fw_config();
    let deployment = backend.deploy(&topo, &config).unwrap();
    assert_eq!(deployment.handles.len(), 3);

    // Stand in for the probe container writing its measurements.
    let sink_volume = volumes.path().join(&deployment.label).join("t");
    std::fs::write(
        sink_volume.join("metrics.json"),
        r#"{"throughput": 93.5, "latency_ms": 4.0}"#,
    )
    .unwrap();

    let metrics = [throughput_metric()];
    let request = RunRequest {
        repetition: 0,
        seed: 1,
        metrics: &metrics,
        warmup_s: 0.0,
        duration_s: Some(0.0),
    };
    let result = backend
        .collect(&deployment, &topo, &config, &request)
        .unwrap();
    match result.outcome("t") {
        Some(NodeOutcome::Collected(node)) => {
            assert_eq!(node.docs["metrics.json"]["throughput"], 93.5);
        }
        other => panic!("unexpected sink outcome {:?}", other),
    }
    // Nodes without requested metrics are still present.
    assert!(matches!(
        result.outcome("FW"),
        Some(NodeOutcome::Collected(_))
    ));

    backend.teardown(deployment).unwrap();

    let captured = log.lock().unwrap().clone();
    let calls: Vec<(String, String)> = captured
        .iter()
        .map(|c| (c.method.clone(), c.path.clone()))
        .collect();
    // /info on connect, then create+start per container (probes first),
    // stop on collect, remove on teardown.
    assert_eq!(calls[0], ("GET".to_string(), "/info".to_string()));
    let creates: Vec<&str> = captured
        .iter()
        .filter(|c| c.path.starts_with("/containers/create"))
        .map(|c| c.path.split("name=").nth(1).unwrap())
        .collect();
    assert_eq!(creates.len(), 3);
    assert!(
        creates[0].ends_with("-s"),
        "probes deploy first: {:?}",
        creates
    );
    assert!(creates[1].ends_with("-t"), "{:?}", creates);
    assert!(creates[2].ends_with("-FW"), "{:?}", creates);
    let starts = calls.iter().filter(|c| c.1.ends_with("/start")).count();
    assert_eq!(starts, 3);
    let stops = calls.iter().filter(|c| c.1.contains("/stop")).count();
    assert_eq!(stops, 3);
    let removes = calls
        .iter()
        .filter(|c| c.0 == "DELETE" && c.1.starts_with("/containers/"))
        .count();
    assert_eq!(removes, 3, "no containers leaked: {:?}", calls);

    // The firewall's create body maps limits onto kernel controls;
    // probes got their isolated cores, the VNF the lowest free ones.
    let fw_create = captured
        .iter()
        .find(|c| c.path.contains("-FW"))
        .expect("FW created");
    let body: serde_json::Value = serde_json::from_str(&fw_create.body).unwrap();
    assert_eq!(body["Image"], "images/firewall");
    assert_eq!(body["HostConfig"]["CpuPeriod"], 100_000);
    assert_eq!(body["HostConfig"]["CpuQuota"], 25_000);
    assert_eq!(body["HostConfig"]["CpusetCpus"], "2,3");
    assert_eq!(body["HostConfig"]["Memory"], 512u64 * 1024 * 1024);
    assert_eq!(body["HostConfig"]["MemorySwap"], 768u64 * 1024 * 1024);
    let s_create = captured.iter().find(|c| c.path.contains("-s")).unwrap();
    let s_body: serde_json::Value = serde_json::from_str(&s_create.body).unwrap();
    assert_eq!(s_body["HostConfig"]["CpusetCpus"], "0");
}

#[test]
fn missing_result_file_becomes_failure_marker_and_teardown_still_runs() {
    let (endpoint, log) = start_stub();
    let volumes = tempfile::tempdir().unwrap();
    let backend = ContainerBackend::connect(&endpoint, Some(volumes.path().to_path_buf())).unwrap();
    let topo = blackbox_topology();
    let config = fw_config();
    let metrics = [throughput_metric()];
    let request = RunRequest {
        repetition: 0,
        seed: 1,
        metrics: &metrics,
        warmup_s: 0.0,
        duration_s: Some(0.0),
    };
    // Nothing writes the sink's metrics.json here.
    let result = backend.execute_run(&topo, &config, &request).unwrap();
    match result.outcome("t") {
        Some(NodeOutcome::Failed { reason }) => {
            assert!(reason.contains("missing result file"), "{}", reason)
        }
        other => panic!("unexpected {:?}", other),
    }
    let captured = log.lock().unwrap().clone();
    let removes = captured.iter().filter(|c| c.method == "DELETE").count();
    assert_eq!(removes, 3, "teardown removed every container");
}

#[test]
fn probe_core_conflict_is_a_limit_application_error_before_any_create() {
    let (endpoint, log) = start_stub();
    let backend = ContainerBackend::connect(&endpoint, None).unwrap();
    let mut topo = blackbox_topology();
    // Both probes claim core 0.
    topo.probes[1].isolated_cores = Some(vec![0]);
    let config = fw_config();
    match backend.deploy(&topo, &config) {
        Err(BackendError::LimitApplication { subject, .. }) => assert_eq!(subject, "t"),
        other => panic!("unexpected {:?}", other.map(|_| ())),
    }
    let captured = log.lock().unwrap().clone();
    assert!(
        captured
            .iter()
            .all(|c| !c.path.starts_with("/containers/create")),
        "no container was created"
    );
}

#[test]
fn core_cap_enforced_against_engine_host() {
    let (endpoint, _log) = start_stub();
    let backend = ContainerBackend::connect(&endpoint, None).unwrap();
    let topo = blackbox_topology();
    let mut config = fw_config();
    config.assignments.get_mut("FW").unwrap().cpu_cores = Some(16);
    match backend.deploy(&topo, &config) {
        Err(BackendError::LimitApplication { subject, reason }) => {
            assert_eq!(subject, "FW");
            assert!(reason.contains("physical cores"), "{}", reason);
        }
        other => panic!("unexpected {:?}", other.map(|_| ())),
    }
}
