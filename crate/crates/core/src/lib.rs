//! Degradation stage segmentation for lithium-ion battery cycling data.
//!
//! The pipeline reconstructs every discharge cycle in a delay-embedded phase
//! space, learns a stationary subspace that stays distribution-consistent
//! across a window of cycles, monitors the projected invariants with a
//! Hotelling-T² chart and restarts the whole fit whenever the invariants
//! break for consecutive cycles.
//!
//! ```text
//! ingest ──▶ psr ──▶ ssa ──▶ monitor ──▶ segment
//!                                          ▲
//!                     synth ───────────────┘ (ground-truth datasets)
//! ```

pub mod error;
pub mod ingest;
pub mod linalg;
pub mod monitor;
pub mod psr;
pub mod segment;
pub mod ssa;
pub mod stats;
pub mod synth;

pub use error::{Error, Result};
pub use ingest::{load_dataset, truncate_to_min_length, BatteryDataset, ColumnMapping, CycleRecord};
pub use monitor::{fit_monitor, score_cycle, CycleScore, MonitoringModel};

pub use psr::{embed, embed_multivariate, select_r, select_tau, EmbeddedCycle, EmbeddingParams, PsrConfig};

pub use ssa::{
    adf_is_stationary, kld_to_standard_normal, optimize_rotation, pooled_whitener, project_invariants,
    select_d, ssa_objective, AdfResult, EpochStats, InvariantSeries, OptimizerConfig, SsaConfig,
    StationaryBasis, Whitener,
};

pub use segment::{divide_stages, Decision, Segmentation, SegmenterConfig, StageModel, StageRange};
pub use synth::{generate, GroundTruth, SynthSpec};
