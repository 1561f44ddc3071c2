//! Offline profiling toolkit for virtualized network functions and
//! service chains: runs VNFs under swept resource limits, aggregates the
//! measurements into normalized performance profiles, and fits scaling
//! models that answer resource-for-SLA queries.

pub mod backend;
pub mod bundle;
pub mod cli;
pub mod config;
pub mod engine;
pub mod model;
pub mod normalize;
pub mod predict;
pub mod rng;
pub mod stats;

pub use backend::{Backend, BackendConfig, SimVNFModel, SimulatedBackend};
pub use bundle::{load_bundle, write_bundle, ProfileBundle};
pub use config::{parse_experiment, ExperimentSpec};
pub use engine::{execute_campaign, run_profiling, EngineOptions};
pub use model::{
    AggregatedMetric, ConfigurationSpace, MeasurementRecord, PerformanceProfile,
    ResourceConfiguration, ResourceLimits, TopologyDescriptor,
};
pub use predict::{fit_scaling_model, min_resource_for_sla, ScalingModel};
