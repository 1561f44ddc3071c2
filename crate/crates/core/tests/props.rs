//! Property tests for the cross-module invariants: enumeration
//! cardinality, record-file determinism, bundle round-trips, geometric
//! mean identities, and min-rule dominance.

use std::collections::BTreeMap;

use proptest::collection::vec;
use proptest::prelude::*;

use chainprof::backend::{sim_chain_metric, sim_evaluate, SimVNFModel};
use chainprof::bundle::{
    load_bundle, quantize_sig9, render_records_csv, render_sig9, sha256_hex, write_bundle,
    BundleManifest, ProfileBundle, CPU_TIME_INTERPRETATION, SEED_DERIVATION,
};
use chainprof::model::{
    enumerate_configurations, ConfigurationSpace, HostDescriptor, LinkSpec, MeasurementRecord,
    MetricSpec, NodeKind, NodeSpec, ProbeRole, ProbeSpec, ResourceLimits, SweepDimensions,
    TopologyDescriptor,
};
use chainprof::normalize::geometric_mean_score;
use chainprof::stats::aggregate;

fn chain_topology(node_count: usize) -> TopologyDescriptor {
    let nodes: Vec<NodeSpec> = (0..node_count)
        .map(|i| NodeSpec {
            id: format!("n{}", i),
            image: "img".to_string(),
            kind: NodeKind::Vnf,
        })
        .collect();
    let mut links: Vec<LinkSpec> = vec![LinkSpec {
        from: "s".to_string(),
        to: "n0".to_string(),
        delay_ms: 1.0,
        bw_mbps: None,
    }];
    for i in 1..node_count {
        links.push(LinkSpec {
            from: format!("n{}", i - 1),
            to: format!("n{}", i),
            delay_ms: 1.0,
            bw_mbps: None,
        });
    }
    links.push(LinkSpec {
        from: format!("n{}", node_count - 1),
        to: "t".to_string(),
        delay_ms: 1.0,
        bw_mbps: None,
    });
    TopologyDescriptor {
        nodes,
        probes: vec![
            ProbeSpec {
                id: "s".to_string(),
                role: ProbeRole::Source,
                image: "gen".to_string(),
                isolated_cores: None,
            },
            ProbeSpec {
                id: "t".to_string(),
                role: ProbeRole::Sink,
                image: "sink".to_string(),
                isolated_cores: None,
            },
        ],
        links,
    }
}

proptest! {
    #[test]
    fn enumeration_count_equals_product(
        time_values in vec(0.05f64..1.0, 1..4),
        core_values in vec(1u32..8, 1..4),
        node_count in 1usize..4,
    ) {
        let topo = chain_topology(node_count);
        let mut dimensions = BTreeMap::new();
        dimensions.insert(
            "n0".to_string(),
            SweepDimensions {
                cpu_time: Some(time_values.clone()),
                cpu_cores: Some(core_values.clone()),
                ..Default::default()
            },
        );
        let space = ConfigurationSpace::Cartesian { dimensions };
        let configs = enumerate_configurations(&space, &topo).unwrap();
        prop_assert_eq!(configs.len(), time_values.len() * core_values.len());
        let again = enumerate_configurations(&space, &topo).unwrap();
        prop_assert_eq!(configs, again);
    }

    #[test]
    fn sig9_is_idempotent_and_quantize_is_a_fixpoint(value in prop::num::f64::NORMAL) {
        let rendered = render_sig9(value);
        let reparsed: f64 = rendered.parse().unwrap();
        prop_assert_eq!(render_sig9(reparsed), rendered);
        let q = quantize_sig9(value);
        prop_assert_eq!(quantize_sig9(q), q);
        if value != 0.0 {
            prop_assert!(((q - value) / value).abs() < 1e-8);
        }
    }

    #[test]
    fn records_rendering_is_order_independent(
        values in vec(0.01f64..1e6, 4..24),
        shuffle_seed in any::<u64>(),
    ) {
        let records: Vec<MeasurementRecord> = values
            .iter()
            .enumerate()
            .map(|(i, v)| MeasurementRecord {
                config_index: i % 3,
                repetition: i / 3,
                node: "n0".to_string(),
                metric: "m".to_string(),
                value: quantize_sig9(*v),
                unit: "u".to_string(),
            })
            .collect();
        let mut shuffled = records.clone();
        let mut state = shuffle_seed;
        for i in (1..shuffled.len()).rev() {
            state = chainprof::rng::mix64(state);
            shuffled.swap(i, (state % (i as u64 + 1)) as usize);
        }
        prop_assert_eq!(render_records_csv(&records), render_records_csv(&shuffled));
    }

    #[test]
    fn bundle_roundtrip_identity(
        raw_values in vec(1e-3f64..1e9, 6..30),
        repetitions in 1usize..4,
    ) {
        let config_count = raw_values.len() / repetitions;
        prop_assume!(config_count >= 1);
        let host = HostDescriptor {
            cpu_model: "prop".to_string(),
            physical_cores: 4,
            total_mem_mb: 8192,
        };
        let mut records = Vec::new();
        for config in 0..config_count {
            for rep in 0..repetitions {
                records.push(MeasurementRecord {
                    config_index: config,
                    repetition: rep,
                    node: "n0".to_string(),
                    metric: "m".to_string(),
                    value: quantize_sig9(raw_values[config * repetitions + rep]),
                    unit: "u".to_string(),
                });
            }
        }
        let configurations = (0..config_count)
            .map(|index| chainprof::model::ResourceConfiguration {
                index,
                assignments: BTreeMap::from([(
                    "n0".to_string(),
                    ResourceLimits {
                        cpu_time: Some(0.5),
                        ..Default::default()
                    },
                )]),
            })
            .collect::<Vec<_>>();
        let bundle = ProfileBundle {
            manifest: BundleManifest {
                name: "prop".to_string(),
                spec_digest: "0".repeat(64),
                host: host.clone(),
                config_count,
                repetitions,
                metric_count: 1,
                record_count: records.len(),
                cpu_time_interpretation: CPU_TIME_INTERPRETATION.to_string(),
                seed: 1,
                seed_derivation: SEED_DERIVATION.to_string(),
                warmup_s: 0.0,
                duration_s: None,
                metrics: vec![MetricSpec {
                    name: "m".to_string(),
                    source: "n0".to_string(),
                    file: "metrics.json".to_string(),
                    key: "m".to_string(),
                    unit: "u".to_string(),
                    higher_is_better: true,
                }],
                flagged_runs: vec![],
                records_digest: sha256_hex(render_records_csv(&records).as_bytes()),
                created_at: 1,
            },
            topology: TopologyDescriptor {
                nodes: vec![NodeSpec {
                    id: "n0".to_string(),
                    image: "img".to_string(),
                    kind: NodeKind::Vnf,
                }],
                probes: vec![],
                links: vec![],
            },
            configurations,
            records,
            profiles: vec![],
            normalized: None,
        };
        let dir = tempfile::tempdir().unwrap();
        write_bundle(&bundle, dir.path()).unwrap();
        let loaded = load_bundle(dir.path()).unwrap();
        prop_assert_eq!(loaded, bundle);
    }

    #[test]
    fn geometric_mean_reference_invariance(
        x in vec(1e-3f64..1e3, 1..7),
        seed in any::<u64>(),
    ) {
        let mut state = seed;
        let mut draw = || {
            state = chainprof::rng::mix64(state);
            1e-3 + (state >> 11) as f64 / (1u64 << 53) as f64 * 1e3
        };
        let y: Vec<f64> = x.iter().map(|_| draw()).collect();
        let a: Vec<f64> = x.iter().map(|_| draw()).collect();
        let ratio = |u: &[f64], v: &[f64]| -> Vec<f64> {
            u.iter().zip(v).map(|(ui, vi)| ui / vi).collect()
        };
        let gm = |v: &[f64]| geometric_mean_score(v).unwrap();
        let lhs = gm(&ratio(&x, &a)) / gm(&ratio(&y, &a));
        let rhs = gm(&ratio(&x, &y));
        prop_assert!((lhs - rhs).abs() <= 1e-12 * rhs.abs().max(1e-300));
    }

    #[test]
    fn aggregate_shift_and_scale_equivariance(
        samples in vec(-1e3f64..1e3, 2..12),
        shift in -1e3f64..1e3,
        scale in prop::sample::select(vec![-3.0f64, -0.5, 0.25, 2.0, 10.0]),
    ) {
        let base = aggregate(&samples).unwrap();
        let shifted: Vec<f64> = samples.iter().map(|v| v + shift).collect();
        let s = aggregate(&shifted).unwrap();
        let width = |a: &chainprof::model::AggregatedMetric| a.ci95_high - a.ci95_low;
        prop_assert!((s.mean - base.mean - shift).abs() <= 1e-9 * (1.0 + base.mean.abs()));
        prop_assert!((width(&s) - width(&base)).abs() <= 1e-9 * (1.0 + width(&base)));

        let scaled: Vec<f64> = samples.iter().map(|v| v * scale).collect();
        let c = aggregate(&scaled).unwrap();
        prop_assert!((c.mean - scale * base.mean).abs() <= 1e-9 * (1.0 + base.mean.abs()));
        prop_assert!(
            (c.std - scale.abs() * base.std).abs() <= 1e-9 * (1.0 + base.std.abs())
        );
        prop_assert!(
            (width(&c) - scale.abs() * width(&base)).abs()
                <= 1e-9 * (1.0 + width(&base).abs())
        );
    }

    #[test]
    fn chain_throughput_never_exceeds_any_constituent(
        rates in vec(1.0f64..500.0, 2..6),
        bw in prop::option::of(1.0f64..500.0),
        cpu_times in vec(0.05f64..1.0, 2..6),
    ) {
        let count = rates.len().min(cpu_times.len());
        let mut topo = chain_topology(count);
        if let Some(bw) = bw {
            topo.links[1].bw_mbps = Some(bw);
        }
        let mut capacities = BTreeMap::new();
        let mut constituents = Vec::new();
        for i in 0..count {
            let model = SimVNFModel {
                base_rate: rates[i],
                parallel_fraction: 0.0,
                max_threads: 1,
                cpu_bound: true,
                mem_floor_mb: 0,
                noise_std: 0.0,
            };
            let limits = ResourceLimits {
                cpu_time: Some(cpu_times[i]),
                ..Default::default()
            };
            let capacity = sim_evaluate(&model, &limits, 0.0);
            constituents.push(capacity);
            capacities.insert(format!("n{}", i), capacity);
        }
        if let Some(bw) = bw {
            constituents.push(bw);
        }
        let metrics = sim_chain_metric(&topo, &capacities).unwrap();
        // Min-rule dominance plus exact brute-force agreement.
        for constituent in &constituents {
            prop_assert!(metrics.throughput <= *constituent + 1e-12);
        }
        let brute = constituents.iter().copied().fold(f64::INFINITY, f64::min);
        prop_assert_eq!(metrics.throughput, brute);
        prop_assert_eq!(metrics.latency_ms, (count + 1) as f64);
    }

    #[test]
    fn parsing_is_total(text in ".{0,400}") {
        // Arbitrary input never panics: it parses or errors structurally.
        let _ = chainprof::config::parse_experiment(&text);
    }

    #[test]
    fn parsing_json_shaped_garbage_is_total(value in prop::collection::btree_map("[a-z]{1,8}", 0i64..100, 0..6)) {
        let text = serde_json::to_string(&value).unwrap();
        let _ = chainprof::config::parse_experiment(&text);
    }
}
