//! Command-line surface: validate, enumerate, run, normalize, analyze.
//!
//! Exit codes are stable across commands: 0 success, 1 spec or semantic
//! errors, 2 I/O, 3 backend failures. Human-readable output goes to
//! stdout, diagnostics to stderr; `--format structured` switches stdout
//! to a single JSON document per command.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use crate::backend::{Backend, BackendConfig, BackendKind, ContainerBackend, SimulatedBackend};
use crate::bundle::{load_bundle, BundleError, ProfileBundle, NORMALIZED_DIR};
use crate::config::{parse_experiment, ExperimentSpec, SpecError};
use crate::engine::{run_profiling, EngineError, EngineOptions};
use crate::model::{enumerate_configurations, validate_topology, Dimension};
use crate::normalize::{
    check_coverage, measure_baseline, normalize_bundle, score_rows, BaselineVector,
};
use crate::predict::{analyze_bundle, AnalysisReport, BehaviorClass};

pub const EXIT_OK: i32 = 0;
pub const EXIT_SPEC: i32 = 1;
pub const EXIT_IO: i32 = 2;
pub const EXIT_BACKEND: i32 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    Text,
    Structured,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BackendChoice {
    Simulated,
    Container,
}

#[derive(Debug, Parser)]
#[command(
    name = "chainprof",
    version,
    about = "Offline profiling of VNF chains under swept resource limits"
)]
pub struct Cli {
    /// Output format for command results on stdout.
    #[arg(long, global = true, value_enum, default_value = "text")]
    pub format: OutputFormat,
    /// Overrides the experiment seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse and validate an experiment spec.
    Validate { spec: PathBuf },
    /// List the enumerated resource configurations, one per line.
    Enumerate { spec: PathBuf },
    /// Execute the profiling campaign and write the bundle.
    Run {
        spec: PathBuf,
        /// Bundle output directory.
        #[arg(long)]
        out: PathBuf,
        /// Overrides the spec's backend type.
        #[arg(long, value_enum)]
        backend: Option<BackendChoice>,
        /// Validate and enumerate only; nothing is executed or written.
        #[arg(long)]
        dry_run: bool,
        /// Worker threads for concurrency-safe backends.
        #[arg(long)]
        parallelism: Option<usize>,
    },
    /// Add normalized profiles to a bundle.
    Normalize {
        bundle: PathBuf,
        /// Baseline file: {host, baselines: {metric: value}}.
        #[arg(long, conflicts_with = "measure_baseline")]
        baseline: Option<PathBuf>,
        /// Measure the baseline with the built-in calibration run.
        #[arg(long)]
        measure_baseline: bool,
        /// Container engine endpoint for a measured baseline; the
        /// calibration runs simulated when absent.
        #[arg(long)]
        endpoint: Option<String>,
    },
    /// Fit scaling models and report behavior classes and bottlenecks.
    Analyze {
        bundle: PathBuf,
        /// SLA query `metric=value`; answers use tested allocations only.
        #[arg(long)]
        sla: Option<String>,
        /// Restrict fits to one dimension and run chain sensitivity on it.
        #[arg(long)]
        dimension: Option<String>,
        /// End-to-end metric for chain sensitivity.
        #[arg(long)]
        metric: Option<String>,
    },
}

/// A diagnosed failure carrying its exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn new(code: i32, message: impl Into<String>) -> Self {
        CliError {
            code,
            message: message.into(),
        }
    }
}

impl From<SpecError> for CliError {
    fn from(err: SpecError) -> Self {
        CliError::new(EXIT_SPEC, err.to_string())
    }
}

impl From<BundleError> for CliError {
    fn from(err: BundleError) -> Self {
        let code = match &err {
            BundleError::Io { .. } | BundleError::MissingFile { .. } => EXIT_IO,
            _ => EXIT_SPEC,
        };
        CliError::new(code, err.to_string())
    }
}

impl From<EngineError> for CliError {
    fn from(err: EngineError) -> Self {
        let code = match &err {
            EngineError::Backend { .. } => EXIT_BACKEND,
            EngineError::Bundle(inner) => return CliError::from_bundle_ref(inner, err.to_string()),
            _ => EXIT_SPEC,
        };
        CliError::new(code, err.to_string())
    }
}

impl CliError {
    fn from_bundle_ref(inner: &BundleError, message: String) -> Self {
        let code = match inner {
            BundleError::Io { .. } | BundleError::MissingFile { .. } => EXIT_IO,
            _ => EXIT_SPEC,
        };
        CliError::new(code, message)
    }
}

/// Entry point: runs the parsed command and returns the process exit
/// code, printing diagnostics to stderr.
pub fn run(cli: Cli) -> i32 {
    let format = cli.format;
    let result = match cli.command {
        Command::Validate { spec } => cmd_validate(&spec, cli.seed, format),
        Command::Enumerate { spec } => cmd_enumerate(&spec, cli.seed, format),
        Command::Run {
            spec,
            out,
            backend,
            dry_run,
            parallelism,
        } => cmd_run(&spec, &out, backend, dry_run, parallelism, cli.seed, format),
        Command::Normalize {
            bundle,
            baseline,
            measure_baseline,
            endpoint,
        } => cmd_normalize(
            &bundle,
            baseline.as_deref(),
            measure_baseline,
            endpoint,
            format,
        ),
        Command::Analyze {
            bundle,
            sla,
            dimension,
            metric,
        } => cmd_analyze(
            &bundle,
            sla.as_deref(),
            dimension.as_deref(),
            metric.as_deref(),
            format,
        ),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(err) => {
            eprintln!("error: {}", err.message);
            err.code
        }
    }
}

fn read_spec_file(path: &Path, seed_override: Option<u64>) -> Result<ExperimentSpec, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::new(EXIT_IO, format!("cannot read {}: {}", path.display(), e)))?;
    let mut spec = parse_experiment(&text)?;
    if let Some(seed) = seed_override {
        spec.seed = seed;
    }
    Ok(spec)
}

fn emit<T: Serialize>(format: OutputFormat, structured: &T, text: impl FnOnce()) {
    match format {
        OutputFormat::Structured => {
            println!(
                "{}",
                serde_json::to_string_pretty(structured).expect("report serializes")
            );
        }
        OutputFormat::Text => text(),
    }
}

fn cmd_validate(path: &Path, seed: Option<u64>, format: OutputFormat) -> Result<(), CliError> {
    let spec = read_spec_file(path, seed)?;
    let warnings = validate_topology(&spec.topology).warnings;
    let configs = enumerate_configurations(&spec.sweep, &spec.topology)
        .map_err(|e| CliError::new(EXIT_SPEC, e.to_string()))?;
    let payload = json!({
        "valid": true,
        "name": spec.name,
        "configurations": configs.len(),
        "repetitions": spec.repetitions,
        "metrics": spec.metrics.len(),
        "warnings": warnings.iter().map(|w| w.to_string()).collect::<Vec<_>>(),
    });
    emit(format, &payload, || {
        println!(
            "{}: valid ({} configurations x {} repetitions, {} metrics)",
            spec.name,
            configs.len(),
            spec.repetitions,
            spec.metrics.len()
        );
        for warning in &warnings {
            println!("warning: {}", warning);
        }
    });
    Ok(())
}

fn cmd_enumerate(path: &Path, seed: Option<u64>, format: OutputFormat) -> Result<(), CliError> {
    let spec = read_spec_file(path, seed)?;
    let configs = enumerate_configurations(&spec.sweep, &spec.topology)
        .map_err(|e| CliError::new(EXIT_SPEC, e.to_string()))?;
    emit(format, &configs, || {
        for config in &configs {
            println!("{}", config);
        }
    });
    Ok(())
}

fn build_backend(spec: &ExperimentSpec) -> Result<Box<dyn Backend>, CliError> {
    match spec.backend.kind {
        BackendKind::Simulated => {
            let models = spec
                .sim_models
                .clone()
                .ok_or_else(|| CliError::new(EXIT_SPEC, "simulated backend requires sim_models"))?;
            Ok(Box::new(SimulatedBackend::new(models)))
        }
        BackendKind::Container => {
            let endpoint = spec.backend.endpoint.as_deref().ok_or_else(|| {
                CliError::new(EXIT_SPEC, "container backend requires an endpoint")
            })?;
            let backend = ContainerBackend::connect(endpoint, spec.backend.volume_root.clone())
                .map_err(|e| CliError::new(EXIT_BACKEND, e.to_string()))?;
            Ok(Box::new(backend))
        }
    }
}

fn cmd_run(
    path: &Path,
    out: &Path,
    backend_override: Option<BackendChoice>,
    dry_run: bool,
    parallelism: Option<usize>,
    seed: Option<u64>,
    format: OutputFormat,
) -> Result<(), CliError> {
    let mut spec = read_spec_file(path, seed)?;
    if let Some(choice) = backend_override {
        spec.backend.kind = match choice {
            BackendChoice::Simulated => BackendKind::Simulated,
            BackendChoice::Container => BackendKind::Container,
        };
        if spec.backend.kind == BackendKind::Simulated {
            spec.backend.endpoint = None;
        }
        // Overriding the backend type re-triggers full validation.
        let report = crate::config::validate_experiment(&spec);
        if !report.is_ok() {
            return Err(CliError::new(
                EXIT_SPEC,
                report
                    .errors
                    .iter()
                    .map(|v| v.to_string())
                    .collect::<Vec<_>>()
                    .join("; "),
            ));
        }
    }
    let configs = enumerate_configurations(&spec.sweep, &spec.topology)
        .map_err(|e| CliError::new(EXIT_SPEC, e.to_string()))?;

    if dry_run {
        let payload = json!({
            "dry_run": true,
            "name": spec.name,
            "configurations": configs.len(),
            "repetitions": spec.repetitions,
            "planned_runs": configs.len() * spec.repetitions,
        });
        emit(format, &payload, || {
            println!(
                "dry run: {} configurations x {} repetitions = {} runs; nothing written",
                configs.len(),
                spec.repetitions,
                configs.len() * spec.repetitions
            );
        });
        return Ok(());
    }

    let backend = build_backend(&spec)?;
    let options = EngineOptions {
        parallelism: parallelism.unwrap_or(1),
    };
    let outcome = run_profiling(&spec, backend.as_ref(), out, &options)?;
    if let Some(hook) = &outcome.hook {
        if let Some(warning) = &hook.warning {
            eprintln!("warning: {}", warning);
        }
    }
    let manifest = &outcome.bundle.manifest;
    let payload = json!({
        "bundle": outcome.bundle_dir,
        "manifest_digest": outcome.manifest_digest,
        "records": manifest.record_count,
        "configurations": manifest.config_count,
        "repetitions": manifest.repetitions,
        "metrics": manifest.metric_count,
        "flagged_runs": manifest.flagged_runs.len(),
    });
    emit(format, &payload, || {
        println!("bundle written to {}", outcome.bundle_dir.display());
        println!(
            "{} records ({} configurations x {} repetitions, {} metrics, {} flagged)",
            manifest.record_count,
            manifest.config_count,
            manifest.repetitions,
            manifest.metric_count,
            manifest.flagged_runs.len()
        );
    });
    Ok(())
}

fn load_bundle_cli(path: &Path) -> Result<ProfileBundle, CliError> {
    if !path.is_dir() {
        return Err(CliError::new(
            EXIT_IO,
            format!("bundle directory {} does not exist", path.display()),
        ));
    }
    Ok(load_bundle(path)?)
}

fn cmd_normalize(
    bundle_dir: &Path,
    baseline_path: Option<&Path>,
    measure: bool,
    endpoint: Option<String>,
    format: OutputFormat,
) -> Result<(), CliError> {
    let mut bundle = load_bundle_cli(bundle_dir)?;
    let metric_names: Vec<String> = bundle
        .manifest
        .metrics
        .iter()
        .map(|m| m.name.clone())
        .collect();

    let baseline: BaselineVector = match (baseline_path, measure) {
        (Some(path), _) => {
            let text = fs::read_to_string(path).map_err(|e| {
                CliError::new(EXIT_IO, format!("cannot read {}: {}", path.display(), e))
            })?;
            serde_json::from_str(&text).map_err(|e| {
                CliError::new(
                    EXIT_SPEC,
                    format!("malformed baseline file {}: {}", path.display(), e),
                )
            })?
        }
        (None, true) => {
            let config = match &endpoint {
                Some(endpoint) => BackendConfig {
                    kind: BackendKind::Container,
                    endpoint: Some(endpoint.clone()),
                    volume_root: None,
                },
                None => BackendConfig::simulated(),
            };
            let backend: Box<dyn Backend> = match &config.kind {
                BackendKind::Simulated => {
                    let spec = crate::normalize::calibration_spec(config.clone());
                    Box::new(SimulatedBackend::new(spec.sim_models.unwrap()))
                }
                BackendKind::Container => Box::new(
                    ContainerBackend::connect(endpoint.as_deref().unwrap(), None)
                        .map_err(|e| CliError::new(EXIT_BACKEND, e.to_string()))?,
                ),
            };
            measure_baseline(backend.as_ref(), config, &metric_names)
                .map_err(|e| CliError::new(EXIT_BACKEND, e.to_string()))?
        }
        (None, false) => {
            return Err(CliError::new(
                EXIT_SPEC,
                "pass --baseline FILE or --measure-baseline",
            ))
        }
    };

    if let Err(missing) = check_coverage(&baseline, &metric_names) {
        return Err(CliError::new(
            EXIT_SPEC,
            missing
                .iter()
                .map(|v| v.to_string())
                .collect::<Vec<_>>()
                .join("; "),
        ));
    }
    normalize_bundle(&mut bundle, &baseline)
        .map_err(|e| CliError::new(EXIT_SPEC, e.to_string()))?;

    let normalized_dir = bundle_dir.join(NORMALIZED_DIR);
    fs::create_dir_all(&normalized_dir)
        .map_err(|e| CliError::new(EXIT_IO, format!("cannot create normalized/: {}", e)))?;
    let normalized = bundle.normalized.as_ref().expect("just normalized");
    for profile in normalized {
        let path = normalized_dir.join(crate::bundle::profile_file_name(profile));
        let mut text = serde_json::to_string_pretty(profile).expect("profile serializes");
        text.push('\n');
        fs::write(&path, text).map_err(|e| {
            CliError::new(EXIT_IO, format!("cannot write {}: {}", path.display(), e))
        })?;
    }

    // Geometric-mean scores per subject and configuration.
    let directions: BTreeMap<String, bool> = bundle
        .manifest
        .metrics
        .iter()
        .map(|m| (m.name.clone(), m.higher_is_better))
        .collect();
    #[derive(Serialize)]
    struct ScoreRow {
        scope: crate::model::ProfileScope,
        subject: String,
        config_index: usize,
        score: f64,
    }
    let mut score_table = Vec::new();
    for profile in normalized {
        for (config_index, score) in score_rows(profile, &directions) {
            score_table.push(ScoreRow {
                scope: profile.scope,
                subject: profile.subject.clone(),
                config_index,
                score,
            });
        }
    }
    let scores_path = normalized_dir.join("scores.json");
    let mut text = serde_json::to_string_pretty(&score_table).expect("scores serialize");
    text.push('\n');
    fs::write(&scores_path, text)
        .map_err(|e| CliError::new(EXIT_IO, format!("cannot write scores: {}", e)))?;

    let payload = json!({
        "bundle": bundle_dir,
        "normalized_profiles": normalized.len(),
        "baseline_provenance": baseline.provenance,
        "scores": score_table.len(),
    });
    emit(format, &payload, || {
        println!(
            "normalized {} profiles into {} ({} score rows)",
            normalized.len(),
            normalized_dir.display(),
            score_table.len()
        );
    });
    Ok(())
}

fn parse_sla(text: &str) -> Result<(String, f64), CliError> {
    let (metric, value) = text
        .split_once('=')
        .ok_or_else(|| CliError::new(EXIT_SPEC, "expected --sla metric=value"))?;
    let target: f64 = value
        .parse()
        .map_err(|_| CliError::new(EXIT_SPEC, format!("bad SLA target `{}`", value)))?;
    Ok((metric.to_string(), target))
}

fn cmd_analyze(
    bundle_dir: &Path,
    sla: Option<&str>,
    dimension: Option<&str>,
    metric: Option<&str>,
    format: OutputFormat,
) -> Result<(), CliError> {
    let bundle = load_bundle_cli(bundle_dir)?;
    let sla = sla.map(parse_sla).transpose()?;
    let dimension = dimension
        .map(|name| {
            Dimension::parse(name).ok_or_else(|| {
                CliError::new(
                    EXIT_SPEC,
                    format!(
                        "unknown dimension `{}`; expected one of cpu_cores, cpu_time, mem_max, mem_swap_max, block_io_bw",
                        name
                    ),
                )
            })
        })
        .transpose()?;

    let report = analyze_bundle(
        &bundle,
        sla.as_ref().map(|(m, t)| (m.as_str(), *t)),
        dimension,
        metric,
    );
    write_analysis(bundle_dir, &report)?;

    emit(format, &report, || print_analysis_text(&report));
    Ok(())
}

fn write_analysis(bundle_dir: &Path, report: &AnalysisReport) -> Result<(), CliError> {
    let dir = bundle_dir.join("analysis");
    let plots = dir.join("plots");
    fs::create_dir_all(&plots)
        .map_err(|e| CliError::new(EXIT_IO, format!("cannot create analysis/: {}", e)))?;
    let mut text = serde_json::to_string_pretty(report).expect("report serializes");
    text.push('\n');
    fs::write(dir.join("report.json"), text)
        .map_err(|e| CliError::new(EXIT_IO, format!("cannot write report: {}", e)))?;
    for fit in &report.fits {
        let name = format!(
            "{}-{}-{}-{}.csv",
            fit.scope, fit.subject, fit.metric, fit.dimension
        );
        let mut csv = String::from("x,mean,ci_low,ci_high,fitted\n");
        for p in &fit.points {
            csv.push_str(&format!(
                "{},{},{},{},{}\n",
                p.x, p.mean, p.ci_low, p.ci_high, p.fitted
            ));
        }
        fs::write(plots.join(name), csv)
            .map_err(|e| CliError::new(EXIT_IO, format!("cannot write plot data: {}", e)))?;
    }
    Ok(())
}

fn print_analysis_text(report: &AnalysisReport) {
    for fit in &report.fits {
        let class = match fit.model.behavior_class {
            BehaviorClass::Insensitive => "insensitive".to_string(),
            BehaviorClass::Scaling => "scaling".to_string(),
            BehaviorClass::Saturating => format!(
                "saturating (knee {})",
                fit.model
                    .saturation_point
                    .map(|k| k.to_string())
                    .unwrap_or_else(|| "?".to_string())
            ),
        };
        let mut line = format!(
            "{}/{}: {} vs {} [{}] -> {}",
            fit.scope, fit.subject, fit.metric, fit.dimension, fit.node, class
        );
        if let Some(sla) = &fit.sla {
            match sla.allocation {
                Some(x) => {
                    line.push_str(&format!("; SLA {} -> {} {}", sla.target, fit.dimension, x))
                }
                None => line.push_str(&format!("; SLA {} -> unreachable", sla.target)),
            }
        }
        println!("{}", line);
    }
    if let Some(sensitivity) = &report.sensitivity {
        match &sensitivity.bottleneck {
            Some(node) => println!(
                "bottleneck [{} vs {}]: {} (elasticities: {})",
                sensitivity.metric,
                sensitivity.dimension,
                node,
                sensitivity
                    .elasticities
                    .iter()
                    .map(|(n, e)| format!("{}={:.4}", n, e))
                    .collect::<Vec<_>>()
                    .join(", ")
            ),
            None => println!(
                "bottleneck [{} vs {}]: none (all elasticities below {})",
                sensitivity.metric, sensitivity.dimension, sensitivity.threshold
            ),
        }
    }
    if let Some(note) = &report.sensitivity_note {
        println!("sensitivity skipped: {}", note);
    }
}
