//! Experiment orchestration: seeded trials, metrics, sweeps, figure datasets and manifests.

mod config;
mod figures;
mod manifest;
mod seeds;
mod sweep;
mod trial;

pub use config::{ActiveCount, DecodeConfig, DetectionConfig, ExperimentConfig, InitVariance, PriorKind, StitcherKind};
pub use figures::{reproduce_figure, FigureId, FigureOptions, Table};
pub use manifest::{CodebookInfo, RunManifest, Timings};
pub use seeds::{codebook_seed, derive_seed, splitmix64, trial_seed};
pub use sweep::{aggregate, run_sweep, run_trials, run_trials_variants, with_pool, write_sweep_csv, Estimate, SweepAxis, SweepPoint, TrialReport};
pub use trial::{compute_metrics, decode, run_trial, run_trial_variants, simulate, DecodedTrial, SimulatedTrial, SlotMetrics, TheoryOverlay, TrialMetrics};
