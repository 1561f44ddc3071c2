//! Campaign orchestration: enumerates the sweep, drives the backend
//! through deploy-measure-collect-teardown cycles with repetitions,
//! assembles the profile bundle, and triggers the post-process hook.
//!
//! Failure policy: deploy and limit-application errors abort the whole
//! campaign (the campaign is misconfigured), while a collection timeout
//! or a per-node collection failure only flags that run and continues:
//! the sample count for the affected group shrinks and the manifest
//! lists the flagged runs.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{SystemTime, UNIX_EPOCH};

use thiserror::Error;

use crate::backend::{Backend, BackendError, NodeOutcome, RunRequest, RunResult};
use crate::bundle::{
    canonical_json, render_records_csv, sha256_hex, validate_bundle, write_bundle, BundleError,
    BundleManifest, FlaggedRun, ProfileBundle, CPU_TIME_INTERPRETATION, LOGS_DIR, SEED_DERIVATION,
};
use crate::config::ExperimentSpec;
use crate::model::{
    enumerate_configurations, MeasurementRecord, MetricSpec, ModelError, PerformanceProfile,
    ProfileRow, ProfileScope, ResourceConfiguration, Violation,
};
use crate::rng::derive_run_seed;
use crate::stats::aggregate_records;

/// Environment variable carrying the bundle path into the hook.
pub const BUNDLE_ENV_VAR: &str = "CHAINPROF_BUNDLE";

/// One scheduled run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PlanEntry {
    pub config_index: usize,
    pub repetition: usize,
    pub seed: u64,
}

/// The full campaign schedule: config-major, repetition-minor, with one
/// derived seed per run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunPlan {
    pub entries: Vec<PlanEntry>,
}

impl RunPlan {
    pub fn build(
        spec_seed: u64,
        config_count: usize,
        repetitions: usize,
    ) -> Result<RunPlan, EngineError> {
        let mut entries = Vec::with_capacity(config_count * repetitions);
        for config_index in 0..config_count {
            for repetition in 0..repetitions {
                entries.push(PlanEntry {
                    config_index,
                    repetition,
                    seed: derive_run_seed(spec_seed, config_index as u64, repetition as u64),
                });
            }
        }
        let mut seeds: Vec<u64> = entries.iter().map(|e| e.seed).collect();
        seeds.sort_unstable();
        seeds.dedup();
        if seeds.len() != entries.len() {
            return Err(EngineError::SeedCollision);
        }
        Ok(RunPlan { entries })
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExtractError {
    #[error("node `{node}` is absent from the run result")]
    MissingNode { node: String },
    #[error("node `{node}` failed: {reason}")]
    NodeFailed { node: String, reason: String },
    #[error("node `{node}` produced no result file `{file}`")]
    MissingFile { node: String, file: String },
    #[error("metric key `{key}` missing in `{file}` from node `{node}`")]
    MissingKey {
        node: String,
        file: String,
        key: String,
    },
    #[error("metric `{key}` from node `{node}` is not finite")]
    NonFinite { node: String, key: String },
}

/// Reads one metric value out of a run result.
pub fn extract_metric(result: &RunResult, metric: &MetricSpec) -> Result<f64, ExtractError> {
    let outcome = result
        .outcome(&metric.source)
        .ok_or_else(|| ExtractError::MissingNode {
            node: metric.source.clone(),
        })?;
    let node_result = match outcome {
        NodeOutcome::Failed { reason } => {
            return Err(ExtractError::NodeFailed {
                node: metric.source.clone(),
                reason: reason.clone(),
            })
        }
        NodeOutcome::Collected(r) => r,
    };
    let doc = node_result
        .docs
        .get(&metric.file)
        .ok_or_else(|| ExtractError::MissingFile {
            node: metric.source.clone(),
            file: metric.file.clone(),
        })?;
    let value = doc
        .get(&metric.key)
        .ok_or_else(|| ExtractError::MissingKey {
            node: metric.source.clone(),
            file: metric.file.clone(),
            key: metric.key.clone(),
        })?;
    if !value.is_finite() {
        return Err(ExtractError::NonFinite {
            node: metric.source.clone(),
            key: metric.key.clone(),
        });
    }
    Ok(*value)
}

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("invalid experiment:\n{}", .0.iter().map(|v| format!("  - {}", v)).collect::<Vec<_>>().join("\n"))]
    InvalidSpec(Vec<Violation>),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("backend failure in config {config_index} repetition {repetition}: {source}")]
    Backend {
        config_index: usize,
        repetition: usize,
        #[source]
        source: BackendError,
    },
    #[error("extraction failed in config {config_index} repetition {repetition}: {source}")]
    Extract {
        config_index: usize,
        repetition: usize,
        #[source]
        source: ExtractError,
    },
    #[error(transparent)]
    Bundle(#[from] BundleError),
    #[error("derived run seeds collide; pick a different experiment seed")]
    SeedCollision,
}

/// Engine knobs that do not belong to the experiment itself.
#[derive(Debug, Clone)]
pub struct EngineOptions {
    /// Worker threads for backends that declare concurrency-safe
    /// execution; 1 keeps everything strictly serial.
    pub parallelism: usize,
}

impl Default for EngineOptions {
    fn default() -> Self {
        EngineOptions { parallelism: 1 }
    }
}

/// Outcome of the post-process hook.
#[derive(Debug, Clone, PartialEq)]
pub struct HookOutcome {
    pub command: PathBuf,
    /// Exit code, when the hook ran to completion.
    pub exit_code: Option<i32>,
    /// Spawn error or nonzero-exit note; the bundle itself stays valid.
    pub warning: Option<String>,
}

/// A written bundle plus everything the caller may want to report.
#[derive(Debug)]
pub struct ProfilingOutcome {
    pub bundle: ProfileBundle,
    pub bundle_dir: PathBuf,
    pub manifest_digest: String,
    pub hook: Option<HookOutcome>,
}

/// Digest of the canonicalized experiment document (defaults filled).
pub fn experiment_digest(spec: &ExperimentSpec) -> String {
    let value = serde_json::to_value(spec).expect("spec serializes");
    sha256_hex(canonical_json(&value).as_bytes())
}

/// Runs the whole campaign in memory: every (config, repetition) in
/// deterministic order, metric extraction, aggregation into NSP/VNFP
/// (and TP when a variant is declared) profiles, and manifest assembly.
pub fn execute_campaign(
    spec: &ExperimentSpec,
    backend: &dyn Backend,
    options: &EngineOptions,
) -> Result<ProfileBundle, EngineError> {
    let report = crate::config::validate_experiment(spec);
    if !report.is_ok() {
        return Err(EngineError::InvalidSpec(report.errors));
    }
    let configurations = enumerate_configurations(&spec.sweep, &spec.topology)?;
    let plan = RunPlan::build(spec.seed, configurations.len(), spec.repetitions)?;

    let outcomes = run_plan(spec, backend, &plan, &configurations, options);

    let mut records: Vec<MeasurementRecord> = Vec::new();
    let mut flagged: Vec<FlaggedRun> = Vec::new();
    for (entry, outcome) in plan.entries.iter().zip(outcomes) {
        let result = match outcome {
            Ok(result) => result,
            Err(err) if err.is_fatal() => {
                return Err(EngineError::Backend {
                    config_index: entry.config_index,
                    repetition: entry.repetition,
                    source: err,
                })
            }
            Err(err) => {
                // Transient single-run failure: skip and flag.
                flagged.push(FlaggedRun {
                    config_index: entry.config_index,
                    repetition: entry.repetition,
                    node: None,
                    reason: err.to_string(),
                });
                continue;
            }
        };
        for metric in &spec.metrics {
            match extract_metric(&result, metric) {
                Ok(value) => records.push(MeasurementRecord {
                    config_index: entry.config_index,
                    repetition: entry.repetition,
                    node: metric.source.clone(),
                    metric: metric.name.clone(),
                    // Quantize to the records-file grid so the bundle
                    // round-trips exactly.
                    value: crate::bundle::quantize_sig9(value),
                    unit: metric.unit.clone(),
                }),
                Err(ExtractError::NodeFailed { node, reason }) => {
                    flagged.push(FlaggedRun {
                        config_index: entry.config_index,
                        repetition: entry.repetition,
                        node: Some(node),
                        reason,
                    });
                }
                Err(source) => {
                    return Err(EngineError::Extract {
                        config_index: entry.config_index,
                        repetition: entry.repetition,
                        source,
                    })
                }
            }
        }
    }
    flagged.dedup();
    // Canonical record order, matching the records-file sort.
    records.sort_by(|a, b| {
        (a.config_index, a.repetition, &a.node, &a.metric).cmp(&(
            b.config_index,
            b.repetition,
            &b.node,
            &b.metric,
        ))
    });

    let profiles = build_profiles(spec, backend, &configurations, &records);

    let manifest = BundleManifest {
        name: spec.name.clone(),
        spec_digest: experiment_digest(spec),
        host: backend.host(),
        config_count: configurations.len(),
        repetitions: spec.repetitions,
        metric_count: spec.metrics.len(),
        record_count: records.len(),
        cpu_time_interpretation: CPU_TIME_INTERPRETATION.to_string(),
        seed: spec.seed,
        seed_derivation: SEED_DERIVATION.to_string(),
        warmup_s: spec.warmup_s,
        duration_s: spec.duration_s,
        metrics: spec.metrics.clone(),
        flagged_runs: flagged,
        records_digest: sha256_hex(render_records_csv(&records).as_bytes()),
        created_at: SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
    };
    let bundle = ProfileBundle {
        manifest,
        topology: spec.topology.clone(),
        configurations,
        records,
        profiles,
        normalized: None,
    };
    validate_bundle(&bundle)?;
    Ok(bundle)
}

/// Executes every planned run, strictly in plan order for the returned
/// vector. Concurrency is only used when the backend declares it safe;
/// results are identical either way because each run is a pure function
/// of its seed.
fn run_plan(
    spec: &ExperimentSpec,
    backend: &dyn Backend,
    plan: &RunPlan,
    configurations: &[ResourceConfiguration],
    options: &EngineOptions,
) -> Vec<Result<RunResult, BackendError>> {
    let run_one = |entry: &PlanEntry| -> Result<RunResult, BackendError> {
        let request = RunRequest {
            repetition: entry.repetition,
            seed: entry.seed,
            metrics: &spec.metrics,
            warmup_s: spec.warmup_s,
            duration_s: spec.duration_s,
        };
        backend.execute_run(
            &spec.topology,
            &configurations[entry.config_index],
            &request,
        )
    };

    let workers = options.parallelism.max(1);
    if workers == 1 || !backend.concurrency_safe() || plan.entries.len() < 2 {
        let mut outcomes = Vec::with_capacity(plan.entries.len());
        for entry in &plan.entries {
            let outcome = run_one(entry);
            // Fail-fast: stop dispatching once a fatal error is seen.
            let fatal = matches!(&outcome, Err(e) if e.is_fatal());
            outcomes.push(outcome);
            if fatal {
                break;
            }
        }
        // Pad so zip stays aligned; the fatal entry aborts first anyway.
        while outcomes.len() < plan.entries.len() {
            outcomes.push(Ok(RunResult::default()));
        }
        return outcomes;
    }

    let chunk_size = plan.entries.len().div_ceil(workers);
    let mut outcomes: Vec<Option<Result<RunResult, BackendError>>> =
        (0..plan.entries.len()).map(|_| None).collect();
    std::thread::scope(|scope| {
        let mut pending = Vec::new();
        for (chunk_index, chunk) in plan.entries.chunks(chunk_size).enumerate() {
            let run_one = &run_one;
            pending.push(scope.spawn(move || {
                let base = chunk_index * chunk_size;
                chunk
                    .iter()
                    .enumerate()
                    .map(|(offset, entry)| (base + offset, run_one(entry)))
                    .collect::<Vec<_>>()
            }));
        }
        for handle in pending {
            for (position, outcome) in handle.join().expect("worker does not panic") {
                outcomes[position] = Some(outcome);
            }
        }
    });
    outcomes
        .into_iter()
        .map(|slot| slot.expect("every plan entry ran"))
        .collect()
}

/// Builds one NSP profile (end-to-end metrics), one VNFP per node
/// (metrics sourced at that node), and a TP mirror of the NSP when the
/// experiment names its topology as a variant. In a whitebox topology
/// (no probes) the service is its nodes, so the NSP covers all metrics.
fn build_profiles(
    spec: &ExperimentSpec,
    backend: &dyn Backend,
    configurations: &[ResourceConfiguration],
    records: &[MeasurementRecord],
) -> Vec<PerformanceProfile> {
    let tables = aggregate_records(records);
    let host = backend.host();
    let whitebox = spec.topology.probes.is_empty();

    let table_for = |wanted: &dyn Fn(&MetricSpec) -> bool| -> Vec<ProfileRow> {
        let mut rows = Vec::new();
        for config in configurations {
            let Some(cells) = tables.get(&config.index) else {
                continue;
            };
            let mut metrics = BTreeMap::new();
            for metric in &spec.metrics {
                if !wanted(metric) {
                    continue;
                }
                if let Some(stats) = cells.get(&(metric.source.clone(), metric.name.clone())) {
                    metrics.insert(metric.name.clone(), *stats);
                }
            }
            if !metrics.is_empty() {
                rows.push(ProfileRow {
                    config_index: config.index,
                    metrics,
                });
            }
        }
        rows
    };

    let mut profiles = Vec::new();
    let end_to_end =
        |m: &MetricSpec| -> bool { whitebox || spec.topology.probe(&m.source).is_some() };
    profiles.push(PerformanceProfile {
        scope: ProfileScope::Nsp,
        subject: spec.name.clone(),
        table: table_for(&end_to_end),
        host: host.clone(),
    });
    for node in &spec.topology.nodes {
        let sourced_here = |m: &MetricSpec| m.source == node.id;
        profiles.push(PerformanceProfile {
            scope: ProfileScope::Vnfp,
            subject: node.id.clone(),
            table: table_for(&sourced_here),
            host: host.clone(),
        });
    }
    if let Some(variant) = &spec.topology_variant {
        profiles.push(PerformanceProfile {
            scope: ProfileScope::Tp,
            subject: variant.clone(),
            table: table_for(&end_to_end),
            host: host.clone(),
        });
    }
    profiles.sort_by(|a, b| (a.scope, &a.subject).cmp(&(b.scope, &b.subject)));
    profiles
}

/// Full campaign: execute, write the bundle to `out_dir`, then trigger
/// the post-process hook if one is configured. Hook failures are
/// warnings; the bundle on disk stays valid.
pub fn run_profiling(
    spec: &ExperimentSpec,
    backend: &dyn Backend,
    out_dir: &Path,
    options: &EngineOptions,
) -> Result<ProfilingOutcome, EngineError> {
    let bundle = execute_campaign(spec, backend, options)?;
    let manifest_digest = write_bundle(&bundle, out_dir)?;
    let hook = spec
        .post_process
        .as_ref()
        .map(|hook| run_hook(hook, out_dir));
    Ok(ProfilingOutcome {
        bundle,
        bundle_dir: out_dir.to_path_buf(),
        manifest_digest,
        hook,
    })
}

fn run_hook(hook: &Path, bundle_dir: &Path) -> HookOutcome {
    let output = Command::new(hook)
        .arg(bundle_dir)
        .env(BUNDLE_ENV_VAR, bundle_dir)
        .output();
    match output {
        Ok(output) => {
            let log_dir = bundle_dir.join(LOGS_DIR);
            let _ = std::fs::create_dir_all(&log_dir);
            let mut log = Vec::new();
            log.extend_from_slice(&output.stdout);
            log.extend_from_slice(&output.stderr);
            let _ = std::fs::write(log_dir.join("post_process.log"), log);
            let exit_code = output.status.code();
            let warning = if output.status.success() {
                None
            } else {
                Some(format!(
                    "post-process hook exited with {:?}",
                    output.status.code()
                ))
            };
            HookOutcome {
                command: hook.to_path_buf(),
                exit_code,
                warning,
            }
        }
        Err(e) => HookOutcome {
            command: hook.to_path_buf(),
            exit_code: None,
            warning: Some(format!("post-process hook failed to start: {}", e)),
        },
    }
}
