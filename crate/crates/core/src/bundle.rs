//! Profile bundles: the on-disk artifact a campaign produces.
//!
//! Layout under the bundle directory:
//!
//! ```text
//! manifest.json        campaign facts, counts, digests
//! records.csv          one row per measurement, byte-deterministic
//! topology.json        copy of the profiled topology
//! configurations.json  the enumerated sweep, index order
//! profiles/            nsp.json, vnfp-<node>.json, tp-<variant>.json
//! normalized/          same shapes after normalization (optional)
//! logs/                post-processing output (not load-bearing)
//! ```
//!
//! Records are rendered with exactly nine significant digits and sorted
//! by (config_index, repetition, node, metric), so equal record sets
//! always produce byte-identical files.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::model::{
    HostDescriptor, MeasurementRecord, MetricSpec, PerformanceProfile, ProfileScope,
    ResourceConfiguration, TopologyDescriptor,
};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const RECORDS_FILE: &str = "records.csv";
pub const TOPOLOGY_FILE: &str = "topology.json";
pub const CONFIGURATIONS_FILE: &str = "configurations.json";
pub const PROFILES_DIR: &str = "profiles";
pub const NORMALIZED_DIR: &str = "normalized";
pub const LOGS_DIR: &str = "logs";
pub const RECORDS_HEADER: &str = "config_index,repetition,node,metric,value,unit";

/// How `cpu_time` is applied; recorded so consumers do not have to guess.
pub const CPU_TIME_INTERPRETATION: &str =
    "total-machine CPU-time fraction; container quota = cpu_time x 100ms CFS period";
/// How per-run seeds derive from the experiment seed.
pub const SEED_DERIVATION: &str =
    "seed_run = splitmix64(spec.seed, config_index, repetition); node noise streams branch by fnv1a(node id)";

/// A run the campaign skipped and flagged instead of aborting on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlaggedRun {
    pub config_index: usize,
    pub repetition: usize,
    /// Failing node, when the failure was node-scoped.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub node: Option<String>,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BundleManifest {
    pub name: String,
    /// SHA-256 of the canonicalized experiment document, lowercase hex.
    pub spec_digest: String,
    pub host: HostDescriptor,
    pub config_count: usize,
    pub repetitions: usize,
    pub metric_count: usize,
    pub record_count: usize,
    pub cpu_time_interpretation: String,
    pub seed: u64,
    pub seed_derivation: String,
    pub warmup_s: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub duration_s: Option<f64>,
    /// Metric declarations, carried so downstream analysis knows units
    /// and directions without the original spec.
    pub metrics: Vec<MetricSpec>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flagged_runs: Vec<FlaggedRun>,
    /// SHA-256 of the records file, lowercase hex.
    pub records_digest: String,
    /// Seconds since the Unix epoch.
    pub created_at: u64,
}

/// Everything one campaign produced.
#[derive(Debug, Clone, PartialEq)]
pub struct ProfileBundle {
    pub manifest: BundleManifest,
    pub topology: TopologyDescriptor,
    pub configurations: Vec<ResourceConfiguration>,
    pub records: Vec<MeasurementRecord>,
    pub profiles: Vec<PerformanceProfile>,
    pub normalized: Option<Vec<PerformanceProfile>>,
}

#[derive(Debug, Error)]
pub enum BundleError {
    #[error("cannot access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("missing bundle file: {path}")]
    MissingFile { path: PathBuf },
    #[error("malformed {what} in {path}: {message}")]
    Malformed {
        what: &'static str,
        path: PathBuf,
        message: String,
    },
    #[error("records row {row}: {message}")]
    BadRow { row: usize, message: String },
    #[error("bundle integrity violated: {0}")]
    Integrity(String),
}

fn io_err(path: &Path, source: io::Error) -> BundleError {
    BundleError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Renders a finite value with nine significant digits, stripping
/// redundant zeros: `100` rather than `1.00000000e2`, but `1.25e12` once
/// positional form would get unwieldy. Pure function of the bits, so
/// record files are byte-deterministic.
pub fn render_sig9(value: f64) -> String {
    assert!(value.is_finite(), "records must be finite");
    if value == 0.0 {
        return "0".to_string();
    }
    let sci = format!("{:.8e}", value);
    let (_, exp) = sci
        .split_once('e')
        .expect("{:e} always carries an exponent");
    let exp: i32 = exp.parse().expect("exponent is an integer");
    if (-4..9).contains(&exp) {
        let decimals = (8 - exp).max(0) as usize;
        trim_zeros(&format!("{:.*}", decimals, value))
    } else {
        let (mantissa, _) = sci.split_once('e').expect("checked above");
        format!("{}e{}", trim_zeros(mantissa), exp)
    }
}

fn trim_zeros(s: &str) -> String {
    if !s.contains('.') {
        return s.to_string();
    }
    let trimmed = s.trim_end_matches('0').trim_end_matches('.');
    trimmed.to_string()
}

/// Rounds a value to the nine-significant-digit grid used by record
/// files, so in-memory records equal their on-disk form exactly.
pub fn quantize_sig9(value: f64) -> f64 {
    render_sig9(value)
        .parse()
        .expect("render_sig9 emits valid floats")
}

/// Canonical text of a structured document: object keys sorted, compact
/// separators, shortest round-trip number rendering.
pub fn canonical_json(value: &serde_json::Value) -> String {
    // serde_json maps are ordered; re-serializing the tree is canonical.
    serde_json::to_string(value).expect("serializing a Value cannot fail")
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    let mut out = String::with_capacity(64);
    for byte in digest {
        let _ = write!(out, "{:02x}", byte);
    }
    out
}

/// Digest of a spec document: SHA-256 over its canonicalized form, so
/// formatting and key order do not change identity.
pub fn spec_digest(text: &str) -> Result<String, serde_json::Error> {
    let value: serde_json::Value = serde_json::from_str(text)?;
    Ok(sha256_hex(canonical_json(&value).as_bytes()))
}

/// Renders the records file content: header plus one sorted row per
/// record.
pub fn render_records_csv(records: &[MeasurementRecord]) -> String {
    let mut sorted: Vec<&MeasurementRecord> = records.iter().collect();
    sorted.sort_by(|a, b| {
        (a.config_index, a.repetition, &a.node, &a.metric).cmp(&(
            b.config_index,
            b.repetition,
            &b.node,
            &b.metric,
        ))
    });
    let mut out = String::with_capacity(64 * (records.len() + 1));
    out.push_str(RECORDS_HEADER);
    out.push('\n');
    for rec in sorted {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            rec.config_index,
            rec.repetition,
            rec.node,
            rec.metric,
            render_sig9(rec.value),
            rec.unit
        );
    }
    out
}

fn parse_records_csv(text: &str, path: &Path) -> Result<Vec<MeasurementRecord>, BundleError> {
    let mut lines = text.lines();
    match lines.next() {
        Some(header) if header == RECORDS_HEADER => {}
        _ => {
            return Err(BundleError::Malformed {
                what: "records header",
                path: path.to_path_buf(),
                message: format!("expected `{}`", RECORDS_HEADER),
            })
        }
    }
    let mut records = Vec::new();
    for (i, line) in lines.enumerate() {
        let row = i + 2; // 1-based, after the header
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 6 {
            return Err(BundleError::BadRow {
                row,
                message: format!("expected 6 fields, got {}", fields.len()),
            });
        }
        let config_index: usize = fields[0].parse().map_err(|_| BundleError::BadRow {
            row,
            message: format!("bad config_index `{}`", fields[0]),
        })?;
        let repetition: usize = fields[1].parse().map_err(|_| BundleError::BadRow {
            row,
            message: format!("bad repetition `{}`", fields[1]),
        })?;
        let value: f64 = fields[4].parse().map_err(|_| BundleError::BadRow {
            row,
            message: format!("bad value `{}`", fields[4]),
        })?;
        if !value.is_finite() {
            return Err(BundleError::BadRow {
                row,
                message: format!("non-finite value `{}`", fields[4]),
            });
        }
        records.push(MeasurementRecord {
            config_index,
            repetition,
            node: fields[2].to_string(),
            metric: fields[3].to_string(),
            value,
            unit: fields[5].to_string(),
        });
    }
    Ok(records)
}

/// File name a profile is stored under.
pub fn profile_file_name(profile: &PerformanceProfile) -> String {
    match profile.scope {
        ProfileScope::Nsp => "nsp.json".to_string(),
        ProfileScope::Vnfp => format!("vnfp-{}.json", profile.subject),
        ProfileScope::Tp => format!("tp-{}.json", profile.subject),
    }
}

/// Checks the bundle's internal consistency: manifest counts against
/// actual contents, record key uniqueness and finiteness, records
/// digest, and profile table references.
pub fn validate_bundle(bundle: &ProfileBundle) -> Result<(), BundleError> {
    let m = &bundle.manifest;
    if m.config_count != bundle.configurations.len() {
        return Err(BundleError::Integrity(format!(
            "manifest config_count {} != {} configurations",
            m.config_count,
            bundle.configurations.len()
        )));
    }
    if m.record_count != bundle.records.len() {
        return Err(BundleError::Integrity(format!(
            "manifest record_count {} != {} records",
            m.record_count,
            bundle.records.len()
        )));
    }
    if m.metric_count != m.metrics.len() {
        return Err(BundleError::Integrity(format!(
            "manifest metric_count {} != {} declared metrics",
            m.metric_count,
            m.metrics.len()
        )));
    }
    if m.flagged_runs.is_empty()
        && m.record_count != m.config_count * m.repetitions * m.metric_count
    {
        return Err(BundleError::Integrity(format!(
            "{} records but {} configs x {} repetitions x {} metrics with no flagged runs",
            m.record_count, m.config_count, m.repetitions, m.metric_count
        )));
    }

    for (i, config) in bundle.configurations.iter().enumerate() {
        if config.index != i {
            return Err(BundleError::Integrity(format!(
                "configuration at position {} carries index {}",
                i, config.index
            )));
        }
    }

    let mut keys = BTreeSet::new();
    for rec in &bundle.records {
        if !rec.value.is_finite() {
            return Err(BundleError::Integrity(format!(
                "record ({},{},{},{}) has non-finite value",
                rec.config_index, rec.repetition, rec.node, rec.metric
            )));
        }
        if rec.config_index >= bundle.configurations.len() {
            return Err(BundleError::Integrity(format!(
                "record references config {} outside the sweep",
                rec.config_index
            )));
        }
        if !keys.insert((
            rec.config_index,
            rec.repetition,
            rec.node.clone(),
            rec.metric.clone(),
        )) {
            return Err(BundleError::Integrity(format!(
                "duplicate record key ({},{},{},{})",
                rec.config_index, rec.repetition, rec.node, rec.metric
            )));
        }
    }

    let actual_records_digest = sha256_hex(render_records_csv(&bundle.records).as_bytes());
    if m.records_digest != actual_records_digest {
        return Err(BundleError::Integrity(format!(
            "records digest mismatch: manifest {}, actual {}",
            m.records_digest, actual_records_digest
        )));
    }

    for profile in bundle
        .profiles
        .iter()
        .chain(bundle.normalized.iter().flatten())
    {
        for row in &profile.table {
            if row.config_index >= bundle.configurations.len() {
                return Err(BundleError::Integrity(format!(
                    "profile {} references config {} outside the sweep",
                    profile.subject, row.config_index
                )));
            }
        }
    }
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), BundleError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| BundleError::Malformed {
        what: "document",
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    text.push('\n');
    fs::write(path, text).map_err(|e| io_err(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(
    path: &Path,
    what: &'static str,
) -> Result<T, BundleError> {
    let text = match fs::read_to_string(path) {
        Ok(text) => text,
        Err(e) if e.kind() == io::ErrorKind::NotFound => {
            return Err(BundleError::MissingFile {
                path: path.to_path_buf(),
            })
        }
        Err(e) => return Err(io_err(path, e)),
    };
    serde_json::from_str(&text).map_err(|e| BundleError::Malformed {
        what,
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// Writes the bundle to `destination`, creating the layout above.
/// Returns the manifest digest (SHA-256 of the manifest file bytes).
pub fn write_bundle(bundle: &ProfileBundle, destination: &Path) -> Result<String, BundleError> {
    validate_bundle(bundle)?;

    fs::create_dir_all(destination).map_err(|e| io_err(destination, e))?;
    let profiles_dir = destination.join(PROFILES_DIR);
    fs::create_dir_all(&profiles_dir).map_err(|e| io_err(&profiles_dir, e))?;

    let records_path = destination.join(RECORDS_FILE);
    fs::write(&records_path, render_records_csv(&bundle.records))
        .map_err(|e| io_err(&records_path, e))?;

    write_json(&destination.join(TOPOLOGY_FILE), &bundle.topology)?;
    write_json(
        &destination.join(CONFIGURATIONS_FILE),
        &bundle.configurations,
    )?;

    for profile in &bundle.profiles {
        write_json(&profiles_dir.join(profile_file_name(profile)), profile)?;
    }
    if let Some(normalized) = &bundle.normalized {
        let dir = destination.join(NORMALIZED_DIR);
        fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
        for profile in normalized {
            write_json(&dir.join(profile_file_name(profile)), profile)?;
        }
    }

    let manifest_path = destination.join(MANIFEST_FILE);
    write_json(&manifest_path, &bundle.manifest)?;
    let manifest_bytes = fs::read(&manifest_path).map_err(|e| io_err(&manifest_path, e))?;
    Ok(sha256_hex(&manifest_bytes))
}

fn load_profiles_dir(dir: &Path) -> Result<Vec<PerformanceProfile>, BundleError> {
    let mut profiles: Vec<PerformanceProfile> = Vec::new();
    let entries = fs::read_dir(dir).map_err(|e| io_err(dir, e))?;
    let mut paths: Vec<PathBuf> = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| io_err(dir, e))?;
        let path = entry.path();
        // Only the documented profile names; auxiliary files (scores,
        // notes) may sit alongside them.
        let name = entry.file_name();
        let name = name.to_string_lossy();
        let is_profile = name == "nsp.json"
            || (name.starts_with("vnfp-") && name.ends_with(".json"))
            || (name.starts_with("tp-") && name.ends_with(".json"));
        if is_profile {
            paths.push(path);
        }
    }
    paths.sort();
    for path in paths {
        profiles.push(read_json(&path, "profile")?);
    }
    // Deterministic order independent of file naming.
    profiles.sort_by(|a, b| (a.scope, &a.subject).cmp(&(b.scope, &b.subject)));
    Ok(profiles)
}

/// Loads a bundle back from disk and re-validates it; tampered counts or
/// records fail here.
pub fn load_bundle(source: &Path) -> Result<ProfileBundle, BundleError> {
    let manifest: BundleManifest = read_json(&source.join(MANIFEST_FILE), "manifest")?;
    let topology: TopologyDescriptor = read_json(&source.join(TOPOLOGY_FILE), "topology")?;
    let configurations: Vec<ResourceConfiguration> =
        read_json(&source.join(CONFIGURATIONS_FILE), "configurations")?;

    let records_path = source.join(RECORDS_FILE);
    let records_text = match fs::read_to_string(&records_path) {
        Ok(text) => text,
        Err(e) if e.kind() == io::ErrorKind::NotFound => {
            return Err(BundleError::MissingFile { path: records_path })
        }
        Err(e) => return Err(io_err(&records_path, e)),
    };
    let records = parse_records_csv(&records_text, &records_path)?;

    let profiles = load_profiles_dir(&source.join(PROFILES_DIR))?;
    let normalized_dir = source.join(NORMALIZED_DIR);
    let normalized = if normalized_dir.is_dir() {
        Some(load_profiles_dir(&normalized_dir)?)
    } else {
        None
    };

    let bundle = ProfileBundle {
        manifest,
        topology,
        configurations,
        records,
        profiles,
        normalized,
    };
    validate_bundle(&bundle)?;
    Ok(bundle)
}
